#include "hdmix/contact.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include "hdmix/errors.hpp"

namespace hdmix {

namespace {

using Vector2d = Eigen::Vector2d;
using Triplets = std::vector<Eigen::Triplet<double>>;

struct ElementGeometry {
  double area = 0.0;
  std::array<Vector2d, 3> grad;  // gradients of the barycentric shape functions
};

ElementGeometry geometry(const Mesh& mesh, std::size_t t) {
  const auto& tri = mesh.triangles[t];
  ElementGeometry geo;
  geo.area = mesh.area(t);
  for (int i = 0; i < 3; ++i) {
    const Vector2d& pj = mesh.nodes[static_cast<std::size_t>(tri[(i + 1) % 3])];
    const Vector2d& pk = mesh.nodes[static_cast<std::size_t>(tri[(i + 2) % 3])];
    geo.grad[static_cast<std::size_t>(i)] = Vector2d(pj.y() - pk.y(), pk.x() - pj.x()) / (2.0 * geo.area);
  }
  return geo;
}

// Local index 2a + p: node a, component p.
using ElementMatrix = Eigen::Matrix<double, 6, 6>;

ElementMatrix strain_gram(const ElementGeometry& geo) {
  ElementMatrix m;
  for (int a = 0; a < 3; ++a) {
    for (int p = 0; p < 2; ++p) {
      for (int b = 0; b < 3; ++b) {
        for (int q = 0; q < 2; ++q) {
          const Vector2d& ga = geo.grad[static_cast<std::size_t>(a)];
          const Vector2d& gb = geo.grad[static_cast<std::size_t>(b)];
          const double dot = ga.x() * gb.x() + ga.y() * gb.y();
          m(2 * a + p, 2 * b + q) = geo.area * 0.5 * ((p == q ? dot : 0.0) + ga[q] * gb[p]);
        }
      }
    }
  }
  return m;
}

ElementMatrix divergence_gram(const ElementGeometry& geo) {
  ElementMatrix m;
  for (int a = 0; a < 3; ++a) {
    for (int p = 0; p < 2; ++p) {
      for (int b = 0; b < 3; ++b) {
        for (int q = 0; q < 2; ++q) {
          m(2 * a + p, 2 * b + q) =
              geo.area * geo.grad[static_cast<std::size_t>(a)][p] * geo.grad[static_cast<std::size_t>(b)][q];
        }
      }
    }
  }
  return m;
}

// Where a full dof (node, component) lands in the reduced space.
struct Slot {
  int dof;
  double coef;
};

std::optional<Slot> slot(const DofMap& map, int node, int comp) {
  const auto i = static_cast<std::size_t>(node);
  switch (map.kind[i]) {
    case NodeKind::Clamped:
      return std::nullopt;
    case NodeKind::Free:
      return Slot{map.first_dof[i] + comp, 1.0};
    case NodeKind::Contact:
      return Slot{map.first_dof[i], map.tangent[i][comp]};
  }
  return std::nullopt;
}

void scatter(const DofMap& map, const std::array<int, 3>& nodes, const ElementMatrix& em,
             Triplets& out) {
  for (int a = 0; a < 3; ++a) {
    for (int p = 0; p < 2; ++p) {
      const auto sa = slot(map, nodes[static_cast<std::size_t>(a)], p);
      if (!sa) continue;
      for (int b = 0; b < 3; ++b) {
        for (int q = 0; q < 2; ++q) {
          const auto sb = slot(map, nodes[static_cast<std::size_t>(b)], q);
          if (!sb) continue;
          out.emplace_back(sa->dof, sb->dof, (sa->coef * sb->coef) * em(2 * a + p, 2 * b + q));
        }
      }
    }
  }
}

SpMat symmetric_from(int n, const Triplets& trips) {
  SpMat m(n, n);
  m.setFromTriplets(trips.begin(), trips.end());
  SpMat sym = 0.5 * (m + SpMat(m.transpose()));
  sym.makeCompressed();
  return sym;
}

Vector2d outward_normal(const Mesh& mesh, const BoundaryEdge& e,
                        const std::vector<std::vector<std::size_t>>& node_tris) {
  const Vector2d& pa = mesh.nodes[static_cast<std::size_t>(e.a)];
  const Vector2d& pb = mesh.nodes[static_cast<std::size_t>(e.b)];
  const Vector2d d = pb - pa;
  Vector2d nrm(d.y(), -d.x());
  for (std::size_t t : node_tris[static_cast<std::size_t>(e.a)]) {
    const auto& tri = mesh.triangles[t];
    const bool has_b = tri[0] == e.b || tri[1] == e.b || tri[2] == e.b;
    if (!has_b) continue;
    for (int v : tri) {
      if (v == e.a || v == e.b) continue;
      if (nrm.dot(mesh.nodes[static_cast<std::size_t>(v)] - pa) > 0.0) nrm = -nrm;
    }
    break;
  }
  return nrm.normalized();
}

DofMap build_dof_map(const Mesh& mesh) {
  const std::size_t nn = mesh.nodes.size();
  DofMap map;
  map.kind.assign(nn, NodeKind::Free);
  map.first_dof.assign(nn, -1);
  map.tangent.assign(nn, Vector2d::Zero());
  map.normal.assign(nn, Vector2d::Zero());

  std::vector<std::vector<std::size_t>> node_tris(nn);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    for (int v : mesh.triangles[t]) node_tris[static_cast<std::size_t>(v)].push_back(t);
  }
  for (const auto& e : mesh.edges) {
    if (e.tag == BoundaryPart::Clamped) {
      map.kind[static_cast<std::size_t>(e.a)] = NodeKind::Clamped;
      map.kind[static_cast<std::size_t>(e.b)] = NodeKind::Clamped;
    }
  }
  // Contact wins over traction at shared corners; clamped wins over contact.
  std::vector<Vector2d> normal_sum(nn, Vector2d::Zero());
  for (const auto& e : mesh.edges) {
    if (e.tag != BoundaryPart::Contact) continue;
    const Vector2d nrm = outward_normal(mesh, e, node_tris);
    const double len = (mesh.nodes[static_cast<std::size_t>(e.b)] - mesh.nodes[static_cast<std::size_t>(e.a)]).norm();
    for (int v : {e.a, e.b}) {
      const auto i = static_cast<std::size_t>(v);
      if (map.kind[i] == NodeKind::Clamped) continue;
      map.kind[i] = NodeKind::Contact;
      normal_sum[i] += len * nrm;
    }
  }
  int next = 0;
  for (std::size_t i = 0; i < nn; ++i) {
    switch (map.kind[i]) {
      case NodeKind::Clamped:
        break;
      case NodeKind::Free:
        map.first_dof[i] = next;
        next += 2;
        break;
      case NodeKind::Contact: {
        const Vector2d nu = normal_sum[i].normalized();
        map.normal[i] = nu;
        // Counterclockwise boundary orientation: tangent is the normal rotated by +90 degrees.
        map.tangent[i] = Vector2d(-nu.y(), nu.x());
        map.first_dof[i] = next;
        next += 1;
        map.contact_nodes.push_back(static_cast<int>(i));
        break;
      }
    }
  }
  map.n = next;
  return map;
}

Vec reduce_full(const DofMap& map, const Vec& full) {
  Vec out = Vec::Zero(map.n);
  for (std::size_t i = 0; i < map.kind.size(); ++i) {
    for (int p = 0; p < 2; ++p) {
      if (const auto s = slot(map, static_cast<int>(i), p)) out[s->dof] += s->coef * full[static_cast<Index>(2 * i) + p];
    }
  }
  return out;
}

// Consistent-mass load of a P1 field: exact for P1 data.
Vec body_load_full(const Mesh& mesh, const std::vector<Vector2d>& field) {
  Vec f = Vec::Zero(static_cast<Index>(2 * mesh.nodes.size()));
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const double c = mesh.area(t) / 12.0;
    const Vector2d sum = field[static_cast<std::size_t>(tri[0])] + field[static_cast<std::size_t>(tri[1])] +
                         field[static_cast<std::size_t>(tri[2])];
    for (int a = 0; a < 3; ++a) {
      const auto v = static_cast<std::size_t>(tri[static_cast<std::size_t>(a)]);
      const Vector2d contrib = c * (sum + field[v]);
      f[static_cast<Index>(2 * v)] += contrib.x();
      f[static_cast<Index>(2 * v + 1)] += contrib.y();
    }
  }
  return f;
}

Vec traction_load_full(const Mesh& mesh, const std::vector<Vector2d>& field) {
  Vec f = Vec::Zero(static_cast<Index>(2 * mesh.nodes.size()));
  for (const auto& e : mesh.edges) {
    if (e.tag != BoundaryPart::Traction) continue;
    const auto a = static_cast<std::size_t>(e.a), b = static_cast<std::size_t>(e.b);
    const double c = (mesh.nodes[b] - mesh.nodes[a]).norm() / 6.0;
    const Vector2d fa = c * (2.0 * field[a] + field[b]);
    const Vector2d fb = c * (field[a] + 2.0 * field[b]);
    f[static_cast<Index>(2 * a)] += fa.x();
    f[static_cast<Index>(2 * a + 1)] += fa.y();
    f[static_cast<Index>(2 * b)] += fb.x();
    f[static_cast<Index>(2 * b + 1)] += fb.y();
  }
  return f;
}

}  // namespace

void Material::validate() const {
  if (!(beta >= 0.0)) throw ValidationError("material: beta must be >= 0");
  if (!(eta >= 0.0)) throw ValidationError("material: eta must be >= 0");
  if (!(omega >= 0.0)) throw ValidationError("material: omega must be >= 0");
}

Loads Loads::uniform(std::size_t nodes, Eigen::Vector2d body, Eigen::Vector2d traction) {
  Loads l;
  l.body.assign(nodes, body);
  l.traction.assign(nodes, traction);
  return l;
}

void ContactModel::validate() const {
  mesh.validate();
  material.validate();
  if (!(g >= 0.0)) throw ValidationError("friction bound g must be >= 0");
  if (loads.body.size() != mesh.nodes.size() || loads.traction.size() != mesh.nodes.size()) {
    throw ArgumentError("load fields need one vector per mesh node");
  }
  for (const auto& v : loads.body) {
    if (!v.allFinite()) throw ValidationError("body force field must be finite");
  }
  for (const auto& v : loads.traction) {
    if (!v.allFinite()) throw ValidationError("traction field must be finite");
  }
  if (!loads.theta || !loads.zeta) throw ArgumentError("load modulations theta and zeta are required");
}

AssembledInstance assemble(const ContactModel& model) {
  model.validate();
  const Mesh& mesh = model.mesh;
  AssembledInstance inst;
  inst.dofs = build_dof_map(mesh);
  const DofMap& map = inst.dofs;
  const int n = map.n;
  if (n == 0) throw ValidationError("assemble: no free degrees of freedom");

  Triplets g_trips, d_trips, m_trips;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const ElementGeometry geo = geometry(mesh, t);
    scatter(map, mesh.triangles[t], strain_gram(geo), g_trips);
    scatter(map, mesh.triangles[t], divergence_gram(geo), d_trips);
    ElementMatrix mass = ElementMatrix::Zero();
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        const double c = geo.area / 12.0 * (a == b ? 2.0 : 1.0);
        mass(2 * a, 2 * b) = c;
        mass(2 * a + 1, 2 * b + 1) = c;
      }
    }
    scatter(map, mesh.triangles[t], mass, m_trips);
  }
  for (const auto& e : mesh.edges) {
    if (e.tag != BoundaryPart::Traction) continue;
    const double len = (mesh.nodes[static_cast<std::size_t>(e.b)] - mesh.nodes[static_cast<std::size_t>(e.a)]).norm();
    // Boundary part of pi: L2 mass on traction edges.
    const std::array<int, 2> ends{e.a, e.b};
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        const double c = len / 6.0 * (a == b ? 2.0 : 1.0);
        for (int p = 0; p < 2; ++p) {
          const auto sa = slot(map, ends[static_cast<std::size_t>(a)], p);
          const auto sb = slot(map, ends[static_cast<std::size_t>(b)], p);
          if (sa && sb) m_trips.emplace_back(sa->dof, sb->dof, (sa->coef * sb->coef) * c);
        }
      }
    }
  }
  inst.G = symmetric_from(n, g_trips);
  inst.div = symmetric_from(n, d_trips);
  inst.pi_gram = symmetric_from(n, m_trips);
  inst.material = model.material;
  inst.A = 2.0 * model.material.beta * inst.G + model.material.eta * inst.div;
  inst.A.makeCompressed();
  inst.inner = InnerProduct(inst.G);

  const auto m = static_cast<Index>(map.contact_nodes.size());
  inst.B = SpMat(m, n);
  inst.weights = Vec::Zero(m);
  {
    Triplets b_trips;
    std::vector<int> row_of(mesh.nodes.size(), -1);
    for (Index i = 0; i < m; ++i) {
      const int node = map.contact_nodes[static_cast<std::size_t>(i)];
      row_of[static_cast<std::size_t>(node)] = static_cast<int>(i);
      b_trips.emplace_back(i, map.first_dof[static_cast<std::size_t>(node)], 1.0);
    }
    inst.B.setFromTriplets(b_trips.begin(), b_trips.end());
    for (const auto& e : mesh.edges) {
      if (e.tag != BoundaryPart::Contact) continue;
      const double len = (mesh.nodes[static_cast<std::size_t>(e.b)] - mesh.nodes[static_cast<std::size_t>(e.a)]).norm();
      for (int v : {e.a, e.b}) {
        const int row = row_of[static_cast<std::size_t>(v)];
        if (row >= 0) inst.weights[row] += 0.5 * len;
      }
    }
  }
  inst.bounds = Vec::Constant(m, model.g);
  inst.body_load = reduce_full(map, body_load_full(mesh, model.loads.body));
  inst.traction_load = reduce_full(map, traction_load_full(mesh, model.loads.traction));
  inst.theta = model.loads.theta;
  inst.zeta = model.loads.zeta;
  return inst;
}

Vec AssembledInstance::load(double t) const { return theta(t) * body_load + zeta(t) * traction_load; }

PrimalOperator AssembledInstance::primal_operator() const {
  const double beta = material.beta;
  const double eta = material.eta;
  if (!(beta > 0.0)) throw ValidationError("solver needs beta > 0 (m_A = 2 beta)");
  return PrimalOperator(A, 2.0 * beta, 2.0 * beta + 2.0 * eta, std::nullopt, inner);
}

CouplingForm AssembledInstance::coupling() const {
  if (B.rows() == 0) return CouplingForm::empty(dim());
  return CouplingForm::measured(B, weights, inner);
}

MultiplierSet AssembledInstance::multiplier_set() const { return MultiplierSet(bounds); }

std::vector<Eigen::Vector2d> AssembledInstance::displacement(const Vec& u) const {
  if (u.size() != dim()) throw ArgumentError("displacement: dimension mismatch");
  std::vector<Vector2d> out(dofs.kind.size(), Vector2d::Zero());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int d = dofs.first_dof[i];
    switch (dofs.kind[i]) {
      case NodeKind::Clamped:
        break;
      case NodeKind::Free:
        out[i] = Vector2d(u[d], u[d + 1]);
        break;
      case NodeKind::Contact:
        out[i] = dofs.tangent[i] * u[d];
        break;
    }
  }
  return out;
}

Vec AssembledInstance::tangential(const Vec& u) const { return B * u; }

Vec AssembledInstance::normal_displacement(const Vec& u) const {
  const auto field = displacement(u);
  Vec out(static_cast<Index>(dofs.contact_nodes.size()));
  for (std::size_t i = 0; i < dofs.contact_nodes.size(); ++i) {
    const auto node = static_cast<std::size_t>(dofs.contact_nodes[i]);
    out[static_cast<Index>(i)] = dofs.normal[node].dot(field[node]);
  }
  return out;
}

SpMat full_stiffness(const Mesh& mesh, const Material& material) {
  const auto nd = static_cast<int>(2 * mesh.nodes.size());
  Triplets trips;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const ElementGeometry geo = geometry(mesh, t);
    const ElementMatrix em = 2.0 * material.beta * strain_gram(geo) + material.eta * divergence_gram(geo);
    const auto& tri = mesh.triangles[t];
    for (int a = 0; a < 3; ++a) {
      for (int p = 0; p < 2; ++p) {
        for (int b = 0; b < 3; ++b) {
          for (int q = 0; q < 2; ++q) {
            trips.emplace_back(2 * tri[static_cast<std::size_t>(a)] + p, 2 * tri[static_cast<std::size_t>(b)] + q,
                               em(2 * a + p, 2 * b + q));
          }
        }
      }
    }
  }
  return symmetric_from(nd, trips);
}

double patch_test_error(const Mesh& mesh, const Material& material, const Eigen::Matrix2d& grad,
                        const Eigen::Vector2d& shift) {
  const SpMat K = full_stiffness(mesh, material);
  const auto nn = mesh.nodes.size();
  std::vector<char> on_boundary(nn, 0);
  for (const auto& e : mesh.edges) on_boundary[static_cast<std::size_t>(e.a)] = on_boundary[static_cast<std::size_t>(e.b)] = 1;
  std::vector<int> interior_of(2 * nn, -1);
  int ni = 0;
  Vec exact(static_cast<Index>(2 * nn));
  for (std::size_t i = 0; i < nn; ++i) {
    const Vector2d v = grad * mesh.nodes[i] + shift;
    exact.segment<2>(static_cast<Index>(2 * i)) = v;
    if (!on_boundary[i]) {
      interior_of[2 * i] = ni++;
      interior_of[2 * i + 1] = ni++;
    }
  }
  if (ni == 0) return 0.0;
  Vec lifted = exact;
  for (std::size_t d = 0; d < 2 * nn; ++d) {
    if (interior_of[d] >= 0) lifted[static_cast<Index>(d)] = 0.0;
  }
  const Vec rhs_full = -(K * lifted);
  Triplets trips;
  Vec rhs(ni);
  for (int c = 0; c < K.outerSize(); ++c) {
    for (SpMat::InnerIterator it(K, c); it; ++it) {
      const int r = interior_of[static_cast<std::size_t>(it.row())];
      const int cc = interior_of[static_cast<std::size_t>(it.col())];
      if (r >= 0 && cc >= 0) trips.emplace_back(r, cc, it.value());
    }
  }
  for (std::size_t d = 0; d < 2 * nn; ++d) {
    if (interior_of[d] >= 0) rhs[interior_of[d]] = rhs_full[static_cast<Index>(d)];
  }
  SpMat Kii(ni, ni);
  Kii.setFromTriplets(trips.begin(), trips.end());
  Eigen::SimplicialLDLT<SpMat> ldlt(Kii);
  if (ldlt.info() != Eigen::Success) throw SolverError("patch test: interior stiffness is singular", 0.0);
  const Vec ui = ldlt.solve(rhs);
  double err = 0.0;
  for (std::size_t d = 0; d < 2 * nn; ++d) {
    if (interior_of[d] >= 0) err = std::max(err, std::abs(ui[interior_of[d]] - exact[static_cast<Index>(d)]));
  }
  return err;
}

double trace_constant(const AssembledInstance& inst) {
  const auto [lo, hi] = generalized_eig_range(inst.pi_gram, inst.inner);
  (void)lo;
  return std::sqrt(std::max(0.0, hi));
}

FrictionKktReport check_friction_kkt(const Vec& u_tau, const Vec& lambda, double g,
                                     const Vec& weights, double tol) {
  if (u_tau.size() != lambda.size() || weights.size() != lambda.size()) {
    throw ArgumentError("check_friction_kkt: size mismatch");
  }
  FrictionKktReport rep;
  rep.slipping.assign(static_cast<std::size_t>(lambda.size()), false);
  for (Index i = 0; i < lambda.size(); ++i) {
    const double bound = std::max(0.0, std::abs(lambda[i]) - g);
    rep.max_bound_residual = std::max(rep.max_bound_residual, bound);
    rep.weighted_bound_violation += weights[i] * bound;
    if (std::abs(u_tau[i]) > tol) {
      rep.slipping[static_cast<std::size_t>(i)] = true;
      ++rep.slip;
      const double target = u_tau[i] > 0.0 ? g : -g;
      rep.max_slip_residual = std::max(rep.max_slip_residual, std::abs(lambda[i] - target));
    } else {
      ++rep.stick;
    }
  }
  return rep;
}

EvolutionProblem to_evolution_problem(const AssembledInstance& inst, const TimeGrid& grid) {
  const Vec body = inst.body_load;
  const Vec traction = inst.traction_load;
  const auto theta = inst.theta;
  const auto zeta = inst.zeta;
  const Index n = inst.dim();
  return EvolutionProblem{
      inst.primal_operator(),
      MemoryKernel::exponential(inst.material.omega, inst.G),
      inst.coupling(),
      inst.multiplier_set(),
      [=](double t) -> Vec { return theta(t) * body + zeta(t) * traction; },
      [n](double) -> Vec { return Vec::Zero(n); },
      grid,
  };
}

EvolutionProblem to_evolution_problem(const ContactModel& model, const TimeGrid& grid) {
  return to_evolution_problem(assemble(model), grid);
}

double strain_error(const Mesh& mesh, const std::vector<Eigen::Vector2d>& uh,
                    const std::function<Eigen::Matrix2d(const Eigen::Vector2d&)>& exact_strain) {
  if (uh.size() != mesh.nodes.size()) throw ArgumentError("strain_error: one displacement per node");
  // Degree-4 symmetric rule, barycentric (a, a, 1 - 2a) orbits.
  constexpr double a1 = 0.445948490915965, w1 = 0.223381589678011;
  constexpr double a2 = 0.091576213509771, w2 = 0.109951743655322;
  const std::array<std::array<double, 3>, 6> bary{{{1 - 2 * a1, a1, a1},
                                                    {a1, 1 - 2 * a1, a1},
                                                    {a1, a1, 1 - 2 * a1},
                                                    {1 - 2 * a2, a2, a2},
                                                    {a2, 1 - 2 * a2, a2},
                                                    {a2, a2, 1 - 2 * a2}}};
  const std::array<double, 6> weight{w1, w1, w1, w2, w2, w2};
  double acc = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const ElementGeometry geo = geometry(mesh, t);
    const auto& tri = mesh.triangles[t];
    Eigen::Matrix2d grad = Eigen::Matrix2d::Zero();  // grad(i, j) = d u_i / d x_j
    for (int a = 0; a < 3; ++a) {
      grad += uh[static_cast<std::size_t>(tri[static_cast<std::size_t>(a)])] *
              geo.grad[static_cast<std::size_t>(a)].transpose();
    }
    const Eigen::Matrix2d eps_h = 0.5 * (grad + grad.transpose());
    for (std::size_t q = 0; q < bary.size(); ++q) {
      Vector2d x = Vector2d::Zero();
      for (int a = 0; a < 3; ++a) {
        x += bary[q][static_cast<std::size_t>(a)] * mesh.nodes[static_cast<std::size_t>(tri[static_cast<std::size_t>(a)])];
      }
      acc += geo.area * weight[q] * (exact_strain(x) - eps_h).squaredNorm();
    }
  }
  return std::sqrt(acc);
}

}  // namespace hdmix
