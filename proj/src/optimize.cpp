#include "hdmix/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "hdmix/errors.hpp"
#include "hdmix/parallel.hpp"

namespace hdmix {

namespace {

constexpr int D = ParameterPoint::kDim;
using Arr = std::array<double, D>;
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::array<const char*, D> kNames{"beta", "eta", "omega", "a0", "a2", "g"};
// Coordinates that carry the delta0 floor.
constexpr std::array<bool, D> kFloored{true, true, true, false, false, true};

}  // namespace

ParameterPoint ParameterPoint::from_array(const std::array<double, kDim>& v) {
  return ParameterPoint{v[0], v[1], v[2], v[3], v[4], v[5]};
}

void ParameterBox::validate() const {
  if (!(delta0 > 0.0)) throw ValidationError("parameter box: delta0 must be > 0");
  const Arr l = lo.to_array(), h = hi.to_array();
  std::ostringstream errs;
  for (int i = 0; i < D; ++i) {
    if (!std::isfinite(l[i]) || !std::isfinite(h[i])) {
      errs << kNames[i] << " bounds must be finite; ";
    } else if (l[i] > h[i]) {
      errs << kNames[i] << " has lo > hi (empty box); ";
    } else if (kFloored[i] && l[i] < delta0) {
      errs << kNames[i] << " lower bound " << l[i] << " is below delta0 = " << delta0 << "; ";
    }
  }
  if (const std::string s = errs.str(); !s.empty()) throw ValidationError("parameter box: " + s);
}

bool ParameterBox::contains(const ParameterPoint& p) const {
  const Arr l = lo.to_array(), h = hi.to_array(), v = p.to_array();
  for (int i = 0; i < D; ++i) {
    if (!(v[i] >= l[i] && v[i] <= h[i])) return false;
  }
  return true;
}

ParameterPoint ParameterBox::clip(const ParameterPoint& p) const {
  const Arr l = lo.to_array(), h = hi.to_array();
  Arr v = p.to_array();
  for (int i = 0; i < D; ++i) v[i] = std::clamp(v[i], l[i], h[i]);
  return ParameterPoint::from_array(v);
}

ParameterPoint ParameterBox::center() const {
  const Arr l = lo.to_array(), h = hi.to_array();
  Arr v{};
  for (int i = 0; i < D; ++i) v[i] = 0.5 * (l[i] + h[i]);
  return ParameterPoint::from_array(v);
}

ContactModel ModelTemplate::instantiate(const ParameterPoint& p) const {
  ContactModel model;
  model.mesh = mesh;
  model.material = Material{p.beta, p.eta, p.omega};
  model.g = p.g;
  model.loads.body = body_field;
  model.loads.traction = traction_field;
  for (auto& v : model.loads.body) v *= p.a0;
  for (auto& v : model.loads.traction) v *= p.a2;
  model.loads.theta = theta;
  model.loads.zeta = zeta;
  return model;
}

CostSpec CostSpec::tracking(double c1, double c2, double c3, Vec u0, Vec lambda0, double t) {
  CostSpec s;
  s.kind = CostKind::Tracking;
  s.c1 = c1;
  s.c2 = c2;
  s.c3 = c3;
  s.u0 = std::move(u0);
  s.lambda0 = std::move(lambda0);
  s.t = t;
  return s;
}

CostSpec CostSpec::boundary_misfit(std::vector<Eigen::Vector2d> u0, double t) {
  CostSpec s;
  s.kind = CostKind::BoundaryMisfit;
  s.c1 = 1.0;
  s.c2 = 0.0;
  s.c3 = 0.0;
  s.u0_boundary = std::move(u0);
  s.t = t;
  return s;
}

void CostSpec::validate() const {
  if (!(c1 >= 0.0) || !(c2 >= 0.0) || !(c3 >= 0.0)) throw ValidationError("cost weights must be >= 0");
  for (double w : p_weights) {
    if (!(w >= 0.0)) throw ValidationError("parameter norm weights must be >= 0");
  }
  if (!(t >= 0.0)) throw ValidationError("cost evaluation time must be >= 0");
}

bool CostSpec::needs_solve() const {
  return kind == CostKind::BoundaryMisfit || c1 > 0.0 || c2 > 0.0;
}

ForwardState forward_solve(const ParameterPoint& p, const ModelTemplate& tmpl, double t) {
  ForwardState st{assemble(tmpl.instantiate(p)), {}, {}};
  EvolutionOptions eo;
  eo.uzawa = tmpl.uzawa;
  const int node = tmpl.grid.node_of(t);
  eo.last_node = node;
  Trajectory traj = solve_evolution(to_evolution_problem(st.instance, tmpl.grid), eo);
  st.u = std::move(traj.u[static_cast<std::size_t>(node)]);
  st.lambda = std::move(traj.lambda[static_cast<std::size_t>(node)]);
  return st;
}

double parameter_norm2(const ParameterPoint& p, const std::array<double, ParameterPoint::kDim>& w) {
  const Arr v = p.to_array();
  double s = 0.0;
  for (int i = 0; i < D; ++i) s += w[i] * v[i] * v[i];
  return s;
}

double boundary_misfit(const Mesh& mesh, const std::vector<Eigen::Vector2d>& u,
                       const std::vector<Eigen::Vector2d>& u0) {
  if (u.size() != mesh.nodes.size() || u0.size() != mesh.nodes.size()) {
    throw ArgumentError("boundary_misfit: one vector per mesh node");
  }
  double s = 0.0;
  for (const auto& e : mesh.edges) {
    if (e.tag != BoundaryPart::Contact) continue;
    const auto a = static_cast<std::size_t>(e.a), b = static_cast<std::size_t>(e.b);
    const double len = (mesh.nodes[b] - mesh.nodes[a]).norm();
    const Eigen::Vector2d da = u[a] - u0[a], db = u[b] - u0[b];
    s += len / 3.0 * (da.squaredNorm() + da.dot(db) + db.squaredNorm());
  }
  return s;
}

double evaluate_cost(const ParameterPoint& p, const CostSpec& spec, const ModelTemplate& tmpl) {
  spec.validate();
  double cost = spec.c3 > 0.0 ? spec.c3 * parameter_norm2(p, spec.p_weights) : 0.0;
  if (!spec.needs_solve()) return cost;

  ForwardState st;
  try {
    st = forward_solve(p, tmpl, spec.t);
  } catch (const SolverError& e) {
    throw CostEvaluationError(std::string("cost evaluation: forward solve failed: ") + e.what());
  } catch (const ValidationError& e) {
    throw CostEvaluationError(std::string("cost evaluation: invalid model: ") + e.what());
  }

  if (spec.kind == CostKind::BoundaryMisfit) {
    return cost + spec.c1 * boundary_misfit(tmpl.mesh, st.instance.displacement(st.u), spec.u0_boundary);
  }
  const Index n = st.instance.dim(), m = st.instance.multipliers();
  const Vec u0 = spec.u0.size() == 0 ? Vec(Vec::Zero(n)) : spec.u0;
  const Vec l0 = spec.lambda0.size() == 0 ? Vec(Vec::Zero(m)) : spec.lambda0;
  if (u0.size() != n || l0.size() != m) throw ArgumentError("tracking targets do not match the assembled sizes");
  if (spec.c1 > 0.0) {
    const double eu = st.instance.inner.norm(st.u - u0);
    cost += spec.c1 * eu * eu;
  }
  if (spec.c2 > 0.0) {
    const Vec dl = st.lambda - l0;
    cost += spec.c2 * dl.dot(st.instance.weights.cwiseProduct(dl));
  }
  return cost;
}

namespace {

// Evaluations in box-normalized coordinates over the free (non-degenerate) axes.
class Evaluator {
 public:
  Evaluator(const CostSpec& spec, const ParameterBox& box, const ModelTemplate& tmpl, int budget)
      : spec_(spec), box_(box), tmpl_(tmpl), budget_(budget) {
    lo_ = box.lo.to_array();
    hi_ = box.hi.to_array();
    for (int i = 0; i < D; ++i) {
      if (hi_[i] > lo_[i]) free_.push_back(i);
    }
  }

  int free_dim() const { return static_cast<int>(free_.size()); }
  int remaining() const { return budget_ - static_cast<int>(trace_.size()); }
  const std::vector<TraceEntry>& trace() const { return trace_; }
  std::vector<TraceEntry>& trace() { return trace_; }
  int failures() const { return failures_; }

  ParameterPoint point(const std::vector<double>& y) const {
    Arr v = lo_;
    for (std::size_t j = 0; j < free_.size(); ++j) {
      const int i = free_[j];
      v[i] = lo_[i] + std::clamp(y[j], 0.0, 1.0) * (hi_[i] - lo_[i]);
    }
    return box_.clip(ParameterPoint::from_array(v));
  }

  // Evaluates a batch concurrently and appends it to the trace in order.
  std::vector<double> batch(const std::vector<std::vector<double>>& ys) {
    const std::size_t count = std::min<std::size_t>(ys.size(), static_cast<std::size_t>(std::max(0, remaining())));
    std::vector<TraceEntry> entries(count);
    parallel_for(count, [&](std::size_t k) {
      TraceEntry& e = entries[k];
      e.p = point(ys[k]);
      try {
        e.cost = evaluate_cost(e.p, spec_, tmpl_);
      } catch (const CostEvaluationError& err) {
        e.cost = kInf;
        e.failure = err.what();
      }
      e.feasible = std::isfinite(e.cost) && box_.contains(e.p);
    });
    std::vector<double> out;
    for (auto& e : entries) {
      record(std::move(e));
      out.push_back(trace_.back().cost);
    }
    return out;
  }

  double eval(const std::vector<double>& y) {
    if (remaining() <= 0) return kInf;
    return batch({y}).front();
  }

  // Index of the best entry; ties keep the first one found.
  std::size_t best_index() const { return best_; }

 private:
  void record(TraceEntry e) {
    e.eval_id = static_cast<int>(trace_.size());
    if (!e.feasible) ++failures_;
    const double prev = trace_.empty() ? kInf : trace_.back().best_so_far;
    if (e.feasible && e.cost < prev) best_ = trace_.size();
    e.best_so_far = e.feasible ? std::min(prev, e.cost) : prev;
    trace_.push_back(std::move(e));
  }

  const CostSpec& spec_;
  const ParameterBox& box_;
  const ModelTemplate& tmpl_;
  int budget_;
  Arr lo_{}, hi_{};
  std::vector<int> free_;
  std::vector<TraceEntry> trace_;
  std::size_t best_ = 0;
  int failures_ = 0;
};

// Cell-centred factorial points, first free axis slowest.
std::vector<std::vector<double>> scan_points(int dim, int k) {
  std::vector<std::vector<double>> pts;
  long total = 1;
  for (int i = 0; i < dim; ++i) total *= k;
  for (long idx = 0; idx < total; ++idx) {
    std::vector<double> y(static_cast<std::size_t>(dim));
    long rest = idx;
    for (int i = dim - 1; i >= 0; --i) {
      y[static_cast<std::size_t>(i)] = (static_cast<double>(rest % k) + 0.5) / k;
      rest /= k;
    }
    pts.push_back(std::move(y));
  }
  return pts;
}

// Largest k <= wanted whose k^dim scan fits in a fifth of the budget.
int scan_resolution(int dim, int wanted, int budget) {
  int k = 1;
  for (int c = 2; c <= wanted; ++c) {
    if (std::pow(static_cast<double>(c), dim) <= budget / 5.0) k = c;
  }
  return k;
}

struct Vertex {
  std::vector<double> y;
  double f = kInf;
};

std::vector<double> clamp01(std::vector<double> y) {
  for (double& v : y) v = std::clamp(v, 0.0, 1.0);
  return y;
}

std::vector<double> affine(const std::vector<double>& a, const std::vector<double>& b, double t) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + t * (b[i] - a[i]);
  return out;
}

// One Nelder-Mead run from y0. Returns true when the simplex collapsed.
bool nelder_mead(Evaluator& ev, const std::vector<double>& y0, double f0, const MinimizeOptions& opts) {
  constexpr double kReflect = 1.0, kExpand = 2.0, kContract = 0.5, kShrink = 0.5, kOffset = 0.05;
  const std::size_t d = y0.size();
  std::vector<Vertex> s{{y0, f0}};
  for (std::size_t i = 0; i < d; ++i) {
    std::vector<double> y = y0;
    y[i] = y[i] + kOffset <= 1.0 ? y[i] + kOffset : y[i] - kOffset;
    s.push_back({y, ev.eval(y)});
  }
  auto order = [&] {
    std::stable_sort(s.begin(), s.end(), [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
  };
  order();
  std::vector<double> last_snap;
  while (ev.remaining() > 0) {
    double diam = 0.0;
    for (std::size_t i = 1; i <= d; ++i) {
      double dist = 0.0;
      for (std::size_t j = 0; j < d; ++j) dist = std::max(dist, std::abs(s[i].y[j] - s[0].y[j]));
      diam = std::max(diam, dist);
    }
    const double spread = s[d].f - s[0].f;
    if (diam <= opts.x_tol || (std::isfinite(spread) && spread <= opts.f_tol * (1.0 + std::abs(s[0].f)))) {
      return true;
    }

    // Clipped vertices collapse onto faces, so a minimizer on the boundary is
    // approached slowly. Try the best vertex with coordinates closer than the
    // simplex diameter to a bound moved onto it, once per distinct point.
    std::vector<double> snapped = s[0].y;
    for (double& y : snapped) {
      if (y <= diam) y = 0.0;
      if (y >= 1.0 - diam) y = 1.0;
    }
    if (snapped != s[0].y && snapped != last_snap) {
      last_snap = snapped;
      const double fs = ev.eval(snapped);
      if (fs < s[d].f) {
        s[d] = {snapped, fs};
        order();
        continue;
      }
    }

    std::vector<double> c(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) c[j] += s[i].y[j] / static_cast<double>(d);
    }
    const std::vector<double> yr = clamp01(affine(c, s[d].y, -kReflect));
    const double fr = ev.eval(yr);
    if (fr < s[0].f) {
      const std::vector<double> ye = clamp01(affine(c, yr, kExpand));
      const double fe = ev.eval(ye);
      s[d] = fe < fr ? Vertex{ye, fe} : Vertex{yr, fr};
    } else if (fr < s[d - 1].f) {
      s[d] = {yr, fr};
    } else {
      const bool outside = fr < s[d].f;
      const std::vector<double> yc = clamp01(affine(c, outside ? yr : s[d].y, kContract));
      const double fc = ev.eval(yc);
      if (fc < (outside ? fr : s[d].f)) {
        s[d] = {yc, fc};
      } else {
        for (std::size_t i = 1; i <= d && ev.remaining() > 0; ++i) {
          s[i].y = affine(s[0].y, s[i].y, kShrink);
          s[i].f = ev.eval(s[i].y);
        }
      }
    }
    order();
  }
  return false;
}

}  // namespace

MinimizeResult minimize(const CostSpec& spec, const ParameterBox& box, const ModelTemplate& tmpl,
                        const MinimizeOptions& opts) {
  box.validate();
  spec.validate();
  if (opts.budget < 1) throw ArgumentError("minimize: budget must be >= 1");

  Evaluator ev(spec, box, tmpl, opts.budget);
  const int d = ev.free_dim();
  MinimizeResult res;

  if (d == 0) {
    ev.eval({});
    res.converged = true;
  } else {
    std::vector<double> start(static_cast<std::size_t>(d), 0.5);
    double f_start = kInf;
    if (opts.strategy != Strategy::NelderMead) {
      const int k = scan_resolution(d, std::max(1, opts.scan_points), opts.budget);
      const auto pts = scan_points(d, k);
      const auto costs = ev.batch(pts);
      std::size_t best = 0;
      for (std::size_t i = 1; i < costs.size(); ++i) {
        if (costs[i] < costs[best]) best = i;
      }
      start = pts[best];
      f_start = costs[best];
    } else {
      f_start = ev.eval(start);
    }
    if (opts.strategy == Strategy::ScanOnly) {
      res.converged = ev.remaining() >= 0;
    } else {
      // Restart from the best vertex until a restart brings no improvement.
      double prev_best = kInf;
      while (ev.remaining() > 0) {
        const bool collapsed = nelder_mead(ev, start, f_start, opts);
        const TraceEntry& b = ev.trace()[ev.best_index()];
        const double gain = prev_best - b.cost;
        if (collapsed && std::isfinite(prev_best) && gain <= opts.f_tol * (1.0 + std::abs(b.cost))) {
          res.converged = true;
          break;
        }
        prev_best = b.cost;
        const Arr v = b.p.to_array(), l = box.lo.to_array(), h = box.hi.to_array();
        start.clear();
        for (int i = 0; i < D; ++i) {
          if (h[i] > l[i]) start.push_back((v[i] - l[i]) / (h[i] - l[i]));
        }
        f_start = b.cost;
        if (!collapsed) break;
      }
    }
  }

  res.trace = std::move(ev.trace());
  res.failures = ev.failures();
  const TraceEntry& best = res.trace[ev.best_index()];
  res.best = best.p;
  res.cost = best.feasible ? best.cost : kInf;
  return res;
}

std::vector<TraceEntry> grid_scan(const CostSpec& spec, const ParameterBox& box, const ModelTemplate& tmpl,
                                  int resolution) {
  box.validate();
  spec.validate();
  if (resolution < 2) throw ArgumentError("grid_scan: resolution must be >= 2");
  if (std::pow(static_cast<double>(resolution), D) > 1e5) {
    throw ArgumentError("grid_scan: resolution^6 exceeds the 1e5 evaluation cap");
  }
  const Arr l = box.lo.to_array(), h = box.hi.to_array();
  long total = 1;
  for (int i = 0; i < D; ++i) total *= resolution;
  std::vector<TraceEntry> rows(static_cast<std::size_t>(total));
  parallel_for(rows.size(), [&](std::size_t idx) {
    Arr v{};
    auto rest = static_cast<long>(idx);
    for (int i = D - 1; i >= 0; --i) {
      const double frac = static_cast<double>(rest % resolution) / (resolution - 1);
      v[i] = l[i] + frac * (h[i] - l[i]);
      rest /= resolution;
    }
    TraceEntry& e = rows[idx];
    e.eval_id = static_cast<int>(idx);
    e.p = box.clip(ParameterPoint::from_array(v));
    try {
      e.cost = evaluate_cost(e.p, spec, tmpl);
    } catch (const CostEvaluationError& err) {
      e.cost = kInf;
      e.failure = err.what();
    }
    e.feasible = std::isfinite(e.cost);
  });
  double best = kInf;
  for (auto& e : rows) {
    if (e.feasible) best = std::min(best, e.cost);
    e.best_so_far = best;
  }
  return rows;
}

void write_trace_csv(std::ostream& out, const std::vector<TraceEntry>& trace) {
  out << "eval_id,beta,eta,omega,a0,a2,g,cost,feasible\n";
  out << std::setprecision(17);
  for (const auto& e : trace) {
    out << e.eval_id << ',' << e.p.beta << ',' << e.p.eta << ',' << e.p.omega << ',' << e.p.a0 << ','
        << e.p.a2 << ',' << e.p.g << ',' << e.cost << ',' << (e.feasible ? 1 : 0) << '\n';
  }
}

}  // namespace hdmix
