#include "hdmix/convergence.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include "hdmix/errors.hpp"
#include "hdmix/parallel.hpp"

namespace hdmix {

ScalingLaw harmonic_law() {
  return [](double x, int n) { return x * (1.0 + 1.0 / n); };
}

ScalingLaw constant_law() {
  return [](double x, int) { return x; };
}

FamilyOverrides FamilyOverrides::only_g() {
  FamilyOverrides o;
  o.beta = o.eta = o.omega = o.body = o.traction = constant_law();
  return o;
}

FamilyOverrides FamilyOverrides::none_perturbed() {
  FamilyOverrides o = only_g();
  o.g = constant_law();
  return o;
}

std::vector<int> default_schedule() { return {1, 2, 4, 8, 16, 32}; }

namespace {

constexpr double kDim = 2.0;

void check_schedule(const std::vector<int>& schedule) {
  if (schedule.empty()) throw ArgumentError("schedule must not be empty");
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (schedule[i] < 1) throw ArgumentError("schedule indices must be >= 1");
    if (i > 0 && schedule[i] <= schedule[i - 1]) throw ArgumentError("schedule must be strictly increasing");
  }
}

double apply_law(const std::optional<ScalingLaw>& law, double x, int n) {
  return law ? (*law)(x, n) : harmonic_law()(x, n);
}

[[noreturn]] void rethrow_member(int n, const std::exception& e) {
  std::ostringstream msg;
  msg << "family index n=" << n << ": " << e.what();
  if (const auto* se = dynamic_cast<const SolverError*>(&e)) throw SolverError(msg.str(), se->last_residual());
  if (dynamic_cast<const ValidationError*>(&e)) throw ValidationError(msg.str());
  if (dynamic_cast<const ArgumentError*>(&e)) throw ArgumentError(msg.str());
  throw std::runtime_error(msg.str());
}

std::vector<int> probe_nodes(const TimeGrid& grid, const std::vector<double>& probe_times) {
  if (probe_times.empty()) throw ArgumentError("at least one probe time is required");
  std::vector<int> nodes;
  nodes.reserve(probe_times.size());
  for (double t : probe_times) nodes.push_back(grid.node_of(t));
  return nodes;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace

PerturbationFamily build_family(const ContactModel& base, const std::vector<int>& schedule,
                                const FamilyOverrides& overrides, int window) {
  check_schedule(schedule);
  if (window < 1) throw ArgumentError("history window must be >= 1");
  base.validate();

  PerturbationFamily fam;
  fam.base = base;
  fam.window = window;

  // b_n = b for every index: the coupling only depends on the mesh.
  const AssembledInstance inst = assemble(base);
  const CouplingSpectrum spec = coupling_spectrum(inst.coupling(), inst.inner);

  const Material& m = base.material;
  for (int n : schedule) {
    FamilyMember fm;
    fm.n = n;
    fm.beta = apply_law(overrides.beta, m.beta, n);
    fm.eta = apply_law(overrides.eta, m.eta, n);
    fm.omega = apply_law(overrides.omega, m.omega, n);
    fm.g = apply_law(overrides.g, base.g, n);
    fm.body_scale = apply_law(overrides.body, 1.0, n);
    fm.traction_scale = apply_law(overrides.traction, 1.0, n);
    if (!(fm.beta > 0.0)) {
      std::ostringstream msg;
      msg << "family index n=" << n << ": beta_n = " << fm.beta << " must be > 0 (uniform m_0 > 0)";
      throw ValidationError(msg.str());
    }
    if (base.g > 0.0 && !(fm.g > 0.0)) {
      std::ostringstream msg;
      msg << "family index n=" << n << ": g_n = " << fm.g << " must be > 0 for the scaled multiplier sets";
      throw ValidationError(msg.str());
    }
    fm.model = base;
    fm.model.material = Material{fm.beta, fm.eta, fm.omega};
    fm.model.g = fm.g;
    for (auto& v : fm.model.loads.body) v *= fm.body_scale;
    for (auto& v : fm.model.loads.traction) v *= fm.traction_scale;
    fm.model.validate();

    fm.F_n = 2.0 * std::abs(fm.beta - m.beta) + kDim * std::abs(fm.eta - m.eta);
    fm.F_n_m = window * std::abs(fm.omega - m.omega);
    fm.m_n = 2.0 * fm.beta;
    fm.L_n = 2.0 * fm.beta + kDim * fm.eta;
    fm.s_n = 1.0;
    fm.alpha_n = spec.sigma_min;
    fm.M_n = spec.sigma_max;
    fam.members.push_back(std::move(fm));
  }

  UniformWitnesses& w = fam.witnesses;
  w.m0 = fam.members.front().m_n;
  w.L0 = fam.members.front().L_n;
  for (const auto& fm : fam.members) {
    w.m0 = std::min(w.m0, fm.m_n);
    w.L0 = std::max(w.L0, fm.L_n);
  }
  w.s0 = 1.0;
  w.alpha0 = spec.sigma_min;
  w.M0 = spec.sigma_max;
  return fam;
}

double loglog_slope(const std::vector<int>& n, const std::vector<double>& e) {
  if (n.size() != e.size()) throw ArgumentError("loglog_slope: size mismatch");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int count = 0;
  for (std::size_t i = 0; i < n.size(); ++i) {
    if (!(e[i] > 0.0) || n[i] < 1) continue;
    const double x = std::log(static_cast<double>(n[i]));
    const double y = std::log(e[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++count;
  }
  if (count < 2) return 0.0;
  const double den = count * sxx - sx * sx;
  if (den == 0.0) return 0.0;
  return (count * sxy - sx * sy) / den;
}

namespace {

ConvergenceTable tabulate(const Trajectory& ref, const std::vector<Trajectory>& trajs,
                          const std::vector<int>& ns, const std::vector<double>& F,
                          const std::vector<double>& F_m, const std::vector<double>& g_n,
                          const std::vector<int>& nodes, const InnerProduct& inner, const Vec& w) {
  ConvergenceTable table;
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    for (int k : nodes) {
      const auto kk = static_cast<std::size_t>(k);
      ConvergenceRow row;
      row.n = ns[i];
      row.t = ref.grid.t(k);
      row.e_u = inner.norm(trajs[i].u[kk] - ref.u[kk]);
      const Vec dl = trajs[i].lambda[kk] - ref.lambda[kk];
      row.e_lambda = std::sqrt(dl.dot(w.cwiseProduct(dl)));
      row.F_n = F[i];
      row.F_n_m = F_m[i];
      row.g_n = g_n[i];
      table.rows.push_back(row);
    }
  }
  for (int k : nodes) {
    std::vector<double> eu, el;
    for (const auto& row : table.rows) {
      if (row.t == ref.grid.t(k)) {
        eu.push_back(row.e_u);
        el.push_back(row.e_lambda);
      }
    }
    table.slopes.push_back({ref.grid.t(k), loglog_slope(ns, eu), loglog_slope(ns, el)});
  }
  return table;
}

EvolutionOptions study_options(double tol, int max_iter, int last) {
  EvolutionOptions o;
  o.uzawa.tol = tol;
  o.uzawa.max_iter = max_iter;
  o.last_node = last;
  return o;
}

}  // namespace

ConvergenceTable run_convergence_study(const PerturbationFamily& family, const TimeGrid& grid,
                                       const std::vector<double>& probe_times,
                                       const StudyOptions& opts) {
  const std::vector<int> nodes = probe_nodes(grid, probe_times);
  const int last = *std::max_element(nodes.begin(), nodes.end());

  const AssembledInstance base = assemble(family.base);
  const Trajectory ref =
      solve_evolution(to_evolution_problem(base, grid), study_options(opts.reference_tol, opts.max_iter, last));

  const std::size_t K = family.members.size();
  std::vector<Trajectory> trajs(K);
  parallel_for(K, [&](std::size_t i) {
    const FamilyMember& fm = family.members[i];
    try {
      trajs[i] = solve_evolution(to_evolution_problem(fm.model, grid),
                                 study_options(opts.family_tol, opts.max_iter, last));
    } catch (const std::exception& e) {
      rethrow_member(fm.n, e);
    }
  });

  std::vector<int> ns;
  std::vector<double> F, F_m, g_n;
  for (const auto& fm : family.members) {
    ns.push_back(fm.n);
    F.push_back(fm.F_n);
    F_m.push_back(fm.F_n_m);
    g_n.push_back(fm.g);
  }
  return tabulate(ref, trajs, ns, F, F_m, g_n, nodes, base.inner, base.weights);
}

ConvergenceTable run_convergence_study(const EvolutionProblem& reference,
                                       const std::vector<AbstractMember>& members,
                                       const std::vector<double>& probe_times,
                                       const StudyOptions& opts) {
  const std::vector<int> nodes = probe_nodes(reference.grid, probe_times);
  const int last = *std::max_element(nodes.begin(), nodes.end());
  std::vector<int> ns;
  for (const auto& m : members) ns.push_back(m.n);
  check_schedule(ns);

  const Trajectory ref = solve_evolution(reference, study_options(opts.reference_tol, opts.max_iter, last));
  std::vector<Trajectory> trajs(members.size());
  parallel_for(members.size(), [&](std::size_t i) {
    try {
      if (members[i].problem.grid.dt != reference.grid.dt) throw ArgumentError("members must share the base grid");
      trajs[i] = solve_evolution(members[i].problem, study_options(opts.family_tol, opts.max_iter, last));
    } catch (const std::exception& e) {
      rethrow_member(members[i].n, e);
    }
  });

  std::vector<double> F(members.size(), 0.0), F_m(members.size(), 0.0), g_n;
  for (const auto& m : members) g_n.push_back(m.g_n);
  return tabulate(ref, trajs, ns, F, F_m, g_n, nodes, reference.A.inner(), reference.B.weights());
}

std::vector<AbstractMember> build_coupling_family(const EvolutionProblem& base, const SpMat& E,
                                                  const std::vector<int>& schedule) {
  check_schedule(schedule);
  if (E.rows() != base.B.rows() || E.cols() != base.B.cols()) {
    throw ArgumentError("coupling perturbation must have the shape of B");
  }
  const double g = base.Lambda.dim() > 0 ? base.Lambda.bounds().maxCoeff() : 0.0;
  std::vector<AbstractMember> out;
  for (int n : schedule) {
    SpMat Bn = base.B.matrix() + E / static_cast<double>(n);
    Bn.makeCompressed();
    EvolutionProblem p = base;
    p.B = CouplingForm::measured(std::move(Bn), base.B.weights(), base.A.inner());
    out.push_back(AbstractMember{n, std::move(p), g});
  }
  return out;
}

CvbReport check_cvb(const CouplingForm& base, const SpMat& E, const std::vector<int>& schedule,
                    int samples, std::uint64_t seed) {
  check_schedule(schedule);
  if (samples < 1) throw ArgumentError("check_cvb: samples must be >= 1");
  if (E.rows() != base.rows() || E.cols() != base.cols()) {
    throw ArgumentError("coupling perturbation must have the shape of B");
  }
  const Index n = base.cols();
  const Index m = base.rows();
  const Vec& w = base.weights();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  auto rand_vec = [&](Index k) {
    Vec v(k);
    for (Index i = 0; i < k; ++i) v[i] = nd(rng);
    return v;
  };

  CvbReport rep;
  rep.excess.assign(schedule.size(), -std::numeric_limits<double>::infinity());
  for (int s = 0; s < samples; ++s) {
    const Vec wv = rand_vec(n), z = rand_vec(n), dz = rand_vec(n);
    const Vec mu = rand_vec(m), dmu = rand_vec(m);
    const double limit = mu.dot(w.cwiseProduct(base.matrix() * (wv - z)));
    for (std::size_t i = 0; i < schedule.size(); ++i) {
      const double inv = 1.0 / schedule[i];
      const Vec zn = z + inv * dz;
      const Vec mun = mu + inv * dmu;
      const Vec Bv = base.matrix() * (wv - zn) + inv * (E * (wv - zn));
      const double val = mun.dot(w.cwiseProduct(Bv));
      rep.excess[i] = std::max(rep.excess[i], val - limit);
    }
  }
  const std::size_t half = schedule.size() / 2;
  rep.tail_max = *std::max_element(rep.excess.begin() + static_cast<std::ptrdiff_t>(half), rep.excess.end());
  const double first = std::max(0.0, rep.excess.front());
  const double last = std::max(0.0, rep.excess.back());
  rep.consistent = last <= 0.25 * first + 1e-12;
  rep.note = "sampled sequences only: necessary evidence for the upper-limit condition, not a proof";
  return rep;
}

MoscoReport mosco_check(const std::vector<double>& g_schedule, double g, const std::vector<Vec>& samples,
                        const std::vector<int>& indices) {
  if (!(g > 0.0)) throw ArgumentError("mosco_check: g must be > 0");
  if (!indices.empty() && indices.size() != g_schedule.size()) {
    throw ArgumentError("mosco_check: one index per g_n");
  }
  MoscoReport rep;
  double prev_proj = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < g_schedule.size(); ++i) {
    const double gn = g_schedule[i];
    if (!(gn > 0.0)) throw ArgumentError("mosco_check: g_n must be > 0");
    MoscoRow row;
    row.n = indices.empty() ? static_cast<int>(i) + 1 : indices[i];
    row.g_n = gn;
    const double c = gn / g;
    Index m = 0;
    for (const Vec& mu : samples) {
      m = std::max(m, mu.size());
      const MultiplierSet base = MultiplierSet::uniform(mu.size(), g);
      const MultiplierSet scaled = base.scaled(c);
      if (base.contains(mu)) {
        const Vec mun = c * mu;
        const double dist = (mun - mu).norm();
        row.recovery_max = std::max(row.recovery_max, dist);
        row.recovery_formula_gap = std::max(row.recovery_formula_gap, std::abs(dist - std::abs(c - 1.0) * mu.norm()));
        row.recovery_in_set = row.recovery_in_set && scaled.contains(mun, 1e-14 * (1.0 + gn));
      }
      const double proj = (project_multiplier(mu, scaled) - project_multiplier(mu, base)).norm();
      row.projection_max = std::max(row.projection_max, proj);
    }
    row.hausdorff = std::abs(gn - g) * std::sqrt(static_cast<double>(m));
    if (row.projection_max > prev_proj) rep.projection_monotone = false;
    prev_proj = row.projection_max;
    rep.rows.push_back(row);
  }
  return rep;
}

namespace {

StabilityReport compare(const StaticMixedInstance& a, const StaticMixedInstance& b,
                        const SaddleSolution& sa, const SaddleSolution& sb, double tol) {
  const InnerProduct& inner = a.A.inner();
  StabilityReport rep;
  rep.lhs = inner.norm(sa.u - sb.u) + a.B.dual_norm(sa.lambda - sb.lambda);
  rep.rhs = inner.dual_norm(a.eta - b.eta) + inner.dual_norm(a.rhs - b.rhs) + inner.norm(a.k - b.k);
  if (rep.rhs > 0.0) {
    rep.ratio = rep.lhs / rep.rhs;
  } else {
    rep.ratio = 0.0;
    const double scale = 1.0 + inner.norm(sa.u) + a.B.dual_norm(sa.lambda);
    rep.uniqueness_violation = rep.lhs > 2.0 * tol * scale;
  }
  return rep;
}

void check_shared(const StaticMixedInstance& a, const StaticMixedInstance& b) {
  a.check_dimensions();
  b.check_dimensions();
  if (a.A.dim() != b.A.dim() || a.B.rows() != b.B.rows()) {
    throw ArgumentError("stability_ratio: instances must share A, B and Lambda");
  }
}

}  // namespace

StabilityReport stability_ratio(const StaticMixedInstance& a, const StaticMixedInstance& b,
                                const UzawaOptions& opts) {
  check_shared(a, b);
  const UzawaSolver solver(a.A, a.B, a.Lambda, opts);
  const SaddleSolution sa = solver.solve(a.eta, a.rhs, a.k);
  const SaddleSolution sb = solver.solve(b.eta, b.rhs, b.k);
  return compare(a, b, sa, sb, opts.tol);
}

StabilitySweep stability_sweep(const StaticMixedInstance& base, const Vec& d_eta, const Vec& d_rhs,
                               const Vec& d_k, const std::vector<double>& scales, const UzawaOptions& opts) {
  base.check_dimensions();
  const Index n = base.A.dim();
  if (d_eta.size() != n || d_rhs.size() != n || d_k.size() != n) {
    throw ArgumentError("stability_sweep: perturbation sizes must match the primal dimension");
  }
  if (scales.empty()) throw ArgumentError("stability_sweep: no scales");
  const UzawaSolver solver(base.A, base.B, base.Lambda, opts);
  const SaddleSolution s0 = solver.solve(base.eta, base.rhs, base.k);

  StabilitySweep sweep;
  sweep.scales = scales;
  double largest = -1.0;
  for (double eps : scales) {
    StaticMixedInstance p = base;
    p.eta = base.eta + eps * d_eta;
    p.rhs = base.rhs + eps * d_rhs;
    p.k = base.k + eps * d_k;
    const SaddleSolution s1 = solver.solve(p.eta, p.rhs, p.k);
    const StabilityReport r = compare(base, p, s0, s1, opts.tol);
    sweep.ratios.push_back(r.ratio);
    if (std::abs(eps) > largest) {
      largest = std::abs(eps);
      sweep.coarse_ratio = r.ratio;
    }
  }
  sweep.max_ratio = *std::max_element(sweep.ratios.begin(), sweep.ratios.end());
  sweep.median_ratio = median(sweep.ratios);
  return sweep;
}

void write_convergence_csv(std::ostream& out, const ConvergenceTable& table) {
  out << "n,t,e_u,e_lambda,F_n,F_n_m,g_n\n";
  out << std::setprecision(17);
  for (const auto& r : table.rows) {
    out << r.n << ',' << r.t << ',' << r.e_u << ',' << r.e_lambda << ',' << r.F_n << ',' << r.F_n_m << ','
        << r.g_n << '\n';
  }
}

}  // namespace hdmix
