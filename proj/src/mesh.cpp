#include "hdmix/mesh.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <utility>

#include "hdmix/errors.hpp"

namespace hdmix {

namespace {

std::pair<int, int> edge_key(int a, int b) { return a < b ? std::pair{a, b} : std::pair{b, a}; }

}  // namespace

double Mesh::area(std::size_t tri) const {
  const auto& t = triangles.at(tri);
  const Eigen::Vector2d e1 = nodes[static_cast<std::size_t>(t[1])] - nodes[static_cast<std::size_t>(t[0])];
  const Eigen::Vector2d e2 = nodes[static_cast<std::size_t>(t[2])] - nodes[static_cast<std::size_t>(t[0])];
  return 0.5 * (e1.x() * e2.y() - e1.y() * e2.x());
}

void Mesh::validate() const {
  const int nn = static_cast<int>(nodes.size());
  if (triangles.empty()) throw ValidationError("mesh has no triangles");
  std::map<std::pair<int, int>, int> edge_count;
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    for (int v : triangles[t]) {
      if (v < 0 || v >= nn) throw ValidationError("triangle references a missing node");
    }
    if (!(area(t) > 0.0)) {
      std::ostringstream msg;
      msg << "triangle " << t << " has non-positive area (must be counterclockwise)";
      throw ValidationError(msg.str());
    }
    const auto& tri = triangles[t];
    for (int e = 0; e < 3; ++e) ++edge_count[edge_key(tri[e], tri[(e + 1) % 3])];
  }
  std::map<std::pair<int, int>, int> tagged;
  bool has_clamped = false;
  for (const auto& e : edges) {
    const int tag = static_cast<int>(e.tag);
    if (tag < 1 || tag > 3) throw ValidationError("boundary tag must be 1, 2 or 3");
    const auto key = edge_key(e.a, e.b);
    auto it = edge_count.find(key);
    if (it == edge_count.end() || it->second != 1) {
      throw ValidationError("tagged edge is not a boundary edge of exactly one triangle");
    }
    if (++tagged[key] > 1) throw ValidationError("boundary edge tagged more than once");
    has_clamped = has_clamped || e.tag == BoundaryPart::Clamped;
  }
  for (const auto& [key, count] : edge_count) {
    if (count == 1 && !tagged.count(key)) throw ValidationError("untagged boundary edge");
    if (count > 2) throw ValidationError("edge shared by more than two triangles");
  }
  if (!has_clamped) throw ValidationError("clamped boundary part is empty (meas > 0 required)");
}

Mesh generate_rect_mesh(int nx, int ny, double width, double height, RectBoundary sides) {
  if (nx < 1 || ny < 1) throw ArgumentError("rectangle mesh needs nx, ny >= 1");
  if (!(width > 0.0) || !(height > 0.0)) throw ArgumentError("rectangle mesh needs positive dimensions");
  Mesh mesh;
  auto id = [nx](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i <= nx; ++i) {
      mesh.nodes.emplace_back(width * i / nx, height * j / ny);
    }
  }
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const int sw = id(i, j), se = id(i + 1, j), nw = id(i, j + 1), ne = id(i + 1, j + 1);
      if ((i + j) % 2 == 0) {
        mesh.triangles.push_back({sw, se, ne});
        mesh.triangles.push_back({sw, ne, nw});
      } else {
        mesh.triangles.push_back({sw, se, nw});
        mesh.triangles.push_back({se, ne, nw});
      }
    }
  }
  // Counterclockwise walk: bottom, right, top, left.
  for (int i = 0; i < nx; ++i) mesh.edges.push_back({id(i, 0), id(i + 1, 0), sides.bottom});
  for (int j = 0; j < ny; ++j) mesh.edges.push_back({id(nx, j), id(nx, j + 1), sides.right});
  for (int i = nx; i > 0; --i) mesh.edges.push_back({id(i, ny), id(i - 1, ny), sides.top});
  for (int j = ny; j > 0; --j) mesh.edges.push_back({id(0, j), id(0, j - 1), sides.left});
  return mesh;
}

namespace {

// Reads the next non-empty, non-comment line into a stream.
bool next_record(std::istream& in, std::istringstream& rec, int& line_no) {
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    rec.clear();
    rec.str(line);
    return true;
  }
  return false;
}

[[noreturn]] void parse_fail(int line_no, const std::string& what) {
  std::ostringstream msg;
  msg << "mesh file line " << line_no << ": " << what;
  throw ValidationError(msg.str());
}

}  // namespace

Mesh read_mesh(std::istream& in) {
  int line_no = 0;
  std::istringstream rec;
  if (!next_record(in, rec, line_no)) parse_fail(line_no, "missing header");
  long nn = 0, nt = 0, ne = 0;
  if (!(rec >> nn >> nt >> ne) || nn < 1 || nt < 1 || ne < 0) parse_fail(line_no, "bad `N T E` header");

  Mesh mesh;
  mesh.nodes.resize(static_cast<std::size_t>(nn));
  mesh.triangles.resize(static_cast<std::size_t>(nt));
  mesh.edges.resize(static_cast<std::size_t>(ne));
  std::vector<char> seen_n(static_cast<std::size_t>(nn)), seen_t(static_cast<std::size_t>(nt)),
      seen_e(static_cast<std::size_t>(ne));

  auto take_id = [&](long count, std::vector<char>& seen) {
    long id = -1;
    if (!(rec >> id) || id < 0 || id >= count) parse_fail(line_no, "id out of range");
    if (seen[static_cast<std::size_t>(id)]) parse_fail(line_no, "duplicate id");
    seen[static_cast<std::size_t>(id)] = 1;
    return static_cast<std::size_t>(id);
  };

  for (long i = 0; i < nn; ++i) {
    if (!next_record(in, rec, line_no)) parse_fail(line_no, "missing node record");
    const auto id = take_id(nn, seen_n);
    double x = 0, y = 0;
    if (!(rec >> x >> y)) parse_fail(line_no, "node needs `id x y`");
    mesh.nodes[id] = {x, y};
  }
  for (long i = 0; i < nt; ++i) {
    if (!next_record(in, rec, line_no)) parse_fail(line_no, "missing triangle record");
    const auto id = take_id(nt, seen_t);
    auto& t = mesh.triangles[id];
    if (!(rec >> t[0] >> t[1] >> t[2])) parse_fail(line_no, "triangle needs `id n1 n2 n3`");
  }
  for (long i = 0; i < ne; ++i) {
    if (!next_record(in, rec, line_no)) parse_fail(line_no, "missing edge record");
    const auto id = take_id(ne, seen_e);
    int a = 0, b = 0, tag = 0;
    if (!(rec >> a >> b >> tag)) parse_fail(line_no, "edge needs `id n1 n2 tag`");
    if (tag < 1 || tag > 3) parse_fail(line_no, "edge tag must be 1, 2 or 3");
    mesh.edges[id] = {a, b, static_cast<BoundaryPart>(tag)};
  }
  mesh.validate();
  return mesh;
}

Mesh read_mesh_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open mesh file " + path.string());
  return read_mesh(in);
}

void write_mesh(std::ostream& out, const Mesh& mesh) {
  out << mesh.nodes.size() << ' ' << mesh.triangles.size() << ' ' << mesh.edges.size() << '\n';
  out << std::setprecision(17);
  for (std::size_t i = 0; i < mesh.nodes.size(); ++i) {
    out << i << ' ' << mesh.nodes[i].x() << ' ' << mesh.nodes[i].y() << '\n';
  }
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
    const auto& t = mesh.triangles[i];
    out << i << ' ' << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  }
  for (std::size_t i = 0; i < mesh.edges.size(); ++i) {
    const auto& e = mesh.edges[i];
    out << i << ' ' << e.a << ' ' << e.b << ' ' << static_cast<int>(e.tag) << '\n';
  }
}

}  // namespace hdmix
