#include "hdmix/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>

namespace hdmix {

const char* command_name(Command c) {
  switch (c) {
    case Command::Solve:
      return "solve";
    case Command::StudyConvergence:
      return "study-convergence";
    case Command::Optimize:
      return "optimize";
    case Command::Verify:
      return "verify";
    case Command::DemoContact:
      return "demo-contact";
  }
  return "?";
}

std::optional<Command> parse_command(const std::string& s) {
  for (Command c : {Command::Solve, Command::StudyConvergence, Command::Optimize, Command::Verify,
                    Command::DemoContact}) {
    if (s == command_name(c)) return c;
  }
  return std::nullopt;
}

namespace {

std::string join(const std::vector<std::string>& errors) {
  std::string out = "invalid configuration";
  for (const auto& e : errors) out += "\n  " + e;
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::optional<double> to_double(const std::string& s) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<long long> to_int(const std::string& s) {
  long long v = 0;
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) return std::nullopt;
  return v;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  if (out.size() == 1 && out[0].empty()) out.clear();
  return out;
}

std::optional<std::vector<double>> to_doubles(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) {
    auto v = to_double(item);
    if (!v) return std::nullopt;
    out.push_back(*v);
  }
  return out;
}

std::optional<BoundaryPart> to_part(const std::string& s) {
  if (s == "clamped") return BoundaryPart::Clamped;
  if (s == "traction") return BoundaryPart::Traction;
  if (s == "contact") return BoundaryPart::Contact;
  return std::nullopt;
}

// A setter returns an error message, or an empty string on success.
using Setter = std::function<std::string(RunConfig&, const std::string&)>;

Setter real(double RunConfig::*field, double lo, bool strict, const char* assumption) {
  return [=](RunConfig& c, const std::string& v) -> std::string {
    auto x = to_double(v);
    if (!x) return "expected a number, got `" + v + "`";
    if (strict ? !(*x > lo) : !(*x >= lo)) {
      std::ostringstream msg;
      msg << "value " << *x << " violates " << assumption;
      return msg.str();
    }
    c.*field = *x;
    return {};
  };
}

Setter real_at(std::function<double&(RunConfig&)> ref, double lo, bool strict, const char* assumption) {
  return [=](RunConfig& c, const std::string& v) -> std::string {
    auto x = to_double(v);
    if (!x) return "expected a number, got `" + v + "`";
    if (strict ? !(*x > lo) : !(*x >= lo)) {
      std::ostringstream msg;
      msg << "value " << *x << " violates " << assumption;
      return msg.str();
    }
    ref(c) = *x;
    return {};
  };
}

Setter integer(std::function<int&(RunConfig&)> ref, long long lo, const char* assumption) {
  return [=](RunConfig& c, const std::string& v) -> std::string {
    auto x = to_int(v);
    if (!x) return "expected an integer, got `" + v + "`";
    if (*x < lo || *x > 1000000000LL) return std::string("value ") + v + " violates " + assumption;
    ref(c) = static_cast<int>(*x);
    return {};
  };
}

Setter choice(std::string RunConfig::*field, std::vector<std::string> allowed) {
  return [=](RunConfig& c, const std::string& v) -> std::string {
    for (const auto& a : allowed) {
      if (v == a) {
        c.*field = v;
        return {};
      }
    }
    std::string msg = "expected one of";
    for (const auto& a : allowed) msg += " " + a;
    return msg + ", got `" + v + "`";
  };
}

Setter vec2(Eigen::Vector2d RunConfig::*field) {
  return [=](RunConfig& c, const std::string& v) -> std::string {
    auto xs = to_doubles(v);
    if (!xs || xs->size() != 2) return "expected two numbers `x, y`, got `" + v + "`";
    c.*field = Eigen::Vector2d((*xs)[0], (*xs)[1]);
    return {};
  };
}

Setter point(std::function<ParameterPoint&(RunConfig&)> ref) {
  return [=](RunConfig& c, const std::string& v) -> std::string {
    auto xs = to_doubles(v);
    if (!xs || xs->size() != ParameterPoint::kDim) return "expected six numbers `beta, eta, omega, a0, a2, g`";
    std::array<double, ParameterPoint::kDim> a{};
    std::copy(xs->begin(), xs->end(), a.begin());
    ref(c) = ParameterPoint::from_array(a);
    return {};
  };
}

Setter part(BoundaryPart RectBoundary::*side) {
  return [=](RunConfig& c, const std::string& v) -> std::string {
    auto p = to_part(v);
    if (!p) return "expected clamped, traction or contact, got `" + v + "`";
    c.sides.*side = *p;
    return {};
  };
}

const std::map<std::string, Setter>& key_table() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    t["command"] = [](RunConfig& c, const std::string& v) -> std::string {
      auto cmd = parse_command(v);
      if (!cmd) return "unknown command `" + v + "` (solve, study-convergence, optimize, verify, demo-contact)";
      c.command = *cmd;
      return {};
    };
    t["mesh.file"] = [](RunConfig& c, const std::string& v) -> std::string {
      if (v.empty()) return "empty mesh path";
      c.mesh_file = v;
      return {};
    };
    t["mesh.nx"] = integer([](RunConfig& c) -> int& { return c.nx; }, 1, "nx >= 1");
    t["mesh.ny"] = integer([](RunConfig& c) -> int& { return c.ny; }, 1, "ny >= 1");
    t["mesh.width"] = real(&RunConfig::width, 0.0, true, "width > 0");
    t["mesh.height"] = real(&RunConfig::height, 0.0, true, "height > 0");
    t["mesh.bottom"] = part(&RectBoundary::bottom);
    t["mesh.right"] = part(&RectBoundary::right);
    t["mesh.top"] = part(&RectBoundary::top);
    t["mesh.left"] = part(&RectBoundary::left);

    t["material.beta"] = real_at([](RunConfig& c) -> double& { return c.material.beta; }, 0.0, false,
                                 "the material assumption beta >= 0");
    t["material.eta"] = real_at([](RunConfig& c) -> double& { return c.material.eta; }, 0.0, false,
                                "the material assumption eta >= 0");
    t["material.omega"] = real_at([](RunConfig& c) -> double& { return c.material.omega; }, 0.0, false,
                                  "the material assumption omega >= 0");
    t["loads.body"] = vec2(&RunConfig::body);
    t["loads.traction"] = vec2(&RunConfig::traction);
    t["loads.theta"] = choice(&RunConfig::theta, {"constant", "ramp", "sine"});
    t["loads.zeta"] = choice(&RunConfig::zeta, {"constant", "ramp", "sine"});
    t["contact.g"] = real(&RunConfig::g, 0.0, false, "the friction bound assumption g >= 0");

    t["time.T"] = real(&RunConfig::T, 0.0, true, "T > 0");
    t["time.N"] = integer([](RunConfig& c) -> int& { return c.N; }, 1, "N >= 1");

    t["solver.tol"] = real_at([](RunConfig& c) -> double& { return c.uzawa.tol; }, 0.0, true, "tol > 0");
    t["solver.inner_tol"] =
        real_at([](RunConfig& c) -> double& { return c.uzawa.inner_tol; }, 0.0, true, "inner_tol > 0");
    t["solver.max_iter"] = integer([](RunConfig& c) -> int& { return c.uzawa.max_iter; }, 1, "max_iter >= 1");
    t["solver.rho"] = [](RunConfig& c, const std::string& v) -> std::string {
      if (v == "auto") {
        c.uzawa.rho.reset();
        return {};
      }
      auto x = to_double(v);
      if (!x) return "expected a number or `auto`, got `" + v + "`";
      if (!(*x > 0.0)) return "value " + v + " violates rho > 0";
      c.uzawa.rho = *x;
      return {};
    };

    t["study.schedule"] = [](RunConfig& c, const std::string& v) -> std::string {
      std::vector<int> s;
      for (const auto& item : split_list(v)) {
        auto x = to_int(item);
        if (!x) return "expected a list of integers, got `" + v + "`";
        if (*x < 1) return "schedule indices must be >= 1";
        if (!s.empty() && *x <= s.back()) return "schedule must be strictly increasing";
        s.push_back(static_cast<int>(*x));
      }
      if (s.empty()) return "schedule must not be empty";
      c.schedule = std::move(s);
      return {};
    };
    t["study.probe_times"] = [](RunConfig& c, const std::string& v) -> std::string {
      auto xs = to_doubles(v);
      if (!xs || xs->empty()) return "expected a list of times, got `" + v + "`";
      c.probe_times = *xs;
      return {};
    };
    t["study.perturb"] = choice(&RunConfig::perturb, {"all", "g", "none"});

    t["optimize.cost"] = choice(&RunConfig::cost, {"tracking", "misfit"});
    t["optimize.c1"] = real(&RunConfig::c1, 0.0, false, "c1 >= 0");
    t["optimize.c2"] = real(&RunConfig::c2, 0.0, false, "c2 >= 0");
    t["optimize.c3"] = real(&RunConfig::c3, 0.0, false, "c3 >= 0");
    t["optimize.target"] = point([](RunConfig& c) -> ParameterPoint& { return c.target; });
    t["optimize.lo"] = point([](RunConfig& c) -> ParameterPoint& { return c.box.lo; });
    t["optimize.hi"] = point([](RunConfig& c) -> ParameterPoint& { return c.box.hi; });
    t["optimize.delta0"] =
        real_at([](RunConfig& c) -> double& { return c.box.delta0; }, 0.0, true, "delta0 > 0");
    t["optimize.budget"] = integer([](RunConfig& c) -> int& { return c.budget; }, 1, "budget >= 1");
    t["optimize.scan_points"] =
        integer([](RunConfig& c) -> int& { return c.scan_points; }, 1, "scan_points >= 1");
    t["optimize.time"] = [](RunConfig& c, const std::string& v) -> std::string {
      auto x = to_double(v);
      if (!x) return "expected a number, got `" + v + "`";
      if (!(*x >= 0.0)) return "value " + v + " violates time >= 0";
      c.cost_time = *x;
      return {};
    };

    t["verify.samples"] = integer([](RunConfig& c) -> int& { return c.samples; }, 1, "samples >= 1");
    t["output.dir"] = [](RunConfig& c, const std::string& v) -> std::string {
      if (v.empty()) return "empty output directory";
      c.out_dir = v;
      return {};
    };
    t["seed"] = [](RunConfig& c, const std::string& v) -> std::string {
      std::uint64_t s = 0;
      const char* end = v.data() + v.size();
      auto [p, ec] = std::from_chars(v.data(), end, s);
      if (ec != std::errc() || p != end) return "expected an unsigned 64-bit integer, got `" + v + "`";
      c.seed = s;
      return {};
    };
    return t;
  }();
  return table;
}

// Full key for `key` written under `section`; unqualified keys resolve by
// unique suffix.
std::optional<std::string> resolve_key(const std::string& section, const std::string& key) {
  const auto& table = key_table();
  const std::string full = section.empty() ? key : section + "." + key;
  if (table.count(full)) return full;
  if (!section.empty() || key.find('.') != std::string::npos) return std::nullopt;
  std::optional<std::string> found;
  for (const auto& [name, setter] : table) {
    const auto dot = name.rfind('.');
    if (dot != std::string::npos && name.substr(dot + 1) == key) {
      if (found) return std::nullopt;
      found = name;
    }
  }
  return found;
}

std::function<double(double)> modulation(const std::string& kind, double T) {
  if (kind == "constant") return [](double) { return 1.0; };
  if (kind == "sine") return [T](double t) { return std::sin(0.5 * std::numbers::pi * t / T); };
  return [T](double t) { return t / T; };
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> errors)
    : ValidationError(join(errors)), errors_(std::move(errors)) {}

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  std::vector<std::string> errors;
  std::map<std::string, int> seen;
  std::map<std::string, std::string> echo;
  std::string section;

  auto fail = [&](int line, const std::string& what) {
    std::ostringstream msg;
    if (line > 0) msg << "line " << line << ": ";
    msg << what;
    errors.push_back(msg.str());
  };

  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  int mesh_line = 0, box_line = 0, probe_line = 0, beta_line = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (auto pos = raw.find('#'); pos != std::string::npos) raw.erase(pos);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        fail(line_no, "malformed section header `" + line + "`");
      } else {
        section = trim(line.substr(1, line.size() - 2));
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(line_no, "expected `key = value`, got `" + line + "`");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto full = resolve_key(section, key);
    if (!full) {
      fail(line_no, "unknown key `" + (section.empty() ? key : section + "." + key) + "`");
      continue;
    }
    if (auto it = seen.find(*full); it != seen.end()) {
      std::ostringstream msg;
      msg << "duplicate key `" << *full << "` (first set on line " << it->second << ")";
      fail(line_no, msg.str());
      continue;
    }
    seen[*full] = line_no;
    if (std::string err = key_table().at(*full)(cfg, value); !err.empty()) {
      fail(line_no, "`" + *full + "`: " + err);
      continue;
    }
    echo[*full] = value;
    if (*full == "mesh.file") mesh_line = line_no;
    if (full->rfind("optimize.", 0) == 0) box_line = std::max(box_line, line_no);
    if (*full == "study.probe_times") probe_line = line_no;
    if (*full == "material.beta") beta_line = line_no;
  }

  if (!seen.count("command")) errors.push_back("missing required key `command`");

  // Cross-field checks run only on fields that parsed.
  if (cfg.mesh_file) {
    std::filesystem::path p = *cfg.mesh_file;
    if (p.is_relative()) p = base_dir / p;
    if (!std::filesystem::exists(p)) {
      fail(mesh_line, "mesh file `" + p.string() + "` does not exist");
    } else {
      cfg.mesh_file = p;
    }
  }
  if (seen.count("material.beta") && cfg.material.beta == 0.0) {
    fail(beta_line, "`material.beta`: the solver needs beta > 0 (m_A = 2 beta)");
  }
  {
    const TimeGrid grid = cfg.grid();
    for (double t : cfg.probe_times) {
      try {
        (void)grid.node_of(t);
      } catch (const std::exception& e) {
        fail(probe_line, std::string("`study.probe_times`: ") + e.what());
      }
    }
    if (cfg.cost_time) {
      try {
        (void)grid.node_of(*cfg.cost_time);
      } catch (const std::exception& e) {
        fail(seen.count("optimize.time") ? seen["optimize.time"] : 0, std::string("`optimize.time`: ") + e.what());
      }
    }
  }
  try {
    cfg.box.validate();
    if (!cfg.box.contains(cfg.target)) fail(box_line, "`optimize.target` lies outside the parameter box");
  } catch (const ValidationError& e) {
    fail(box_line, e.what());
  }

  if (!errors.empty()) throw ConfigError(std::move(errors));
  cfg.echo.assign(echo.begin(), echo.end());
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot open config file `" + path.string() + "`"});
  std::ostringstream text;
  text << in.rdbuf();
  const auto dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  return parse_config(text.str(), dir);
}

Mesh RunConfig::build_mesh() const {
  if (mesh_file) return read_mesh_file(*mesh_file);
  return generate_rect_mesh(nx, ny, width, height, sides);
}

ContactModel RunConfig::model() const {
  ContactModel m;
  m.mesh = build_mesh();
  m.material = material;
  m.loads = Loads::uniform(m.mesh.nodes.size(), body, traction);
  m.loads.theta = modulation(theta, T);
  m.loads.zeta = modulation(zeta, T);
  m.g = g;
  return m;
}

ModelTemplate RunConfig::model_template() const {
  ModelTemplate t;
  t.mesh = build_mesh();
  t.body_field.assign(t.mesh.nodes.size(), body);
  t.traction_field.assign(t.mesh.nodes.size(), traction);
  t.theta = modulation(theta, T);
  t.zeta = modulation(zeta, T);
  t.grid = grid();
  t.uzawa = uzawa;
  return t;
}

}  // namespace hdmix
