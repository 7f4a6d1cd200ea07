#include "hdmix/runner.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

#include "hdmix/convergence.hpp"
#include "hdmix/errors.hpp"
#include "hdmix/history.hpp"

namespace hdmix {

namespace {

namespace fs = std::filesystem;

// Stick/slip threshold on |u_tau| for the KKT report.
constexpr double kSlipTol = 1e-7;
constexpr double kKktTol = 1e-6;

struct Manifest {
  std::vector<std::pair<std::string, std::string>> constants;
  std::vector<std::pair<std::string, std::string>> results;
  std::vector<std::string> outputs;

  template <typename T>
  void constant(const std::string& k, const T& v) {
    constants.emplace_back(k, fmt(v));
  }
  template <typename T>
  void result(const std::string& k, const T& v) {
    results.emplace_back(k, fmt(v));
  }

  template <typename T>
  static std::string fmt(const T& v) {
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
  }
};

std::ofstream open_out(const RunConfig& cfg, const std::string& name, Manifest& man) {
  const fs::path p = cfg.out_dir / name;
  std::ofstream out(p);
  if (!out) throw ArgumentError("cannot write " + p.string());
  man.outputs.push_back(name);
  return out;
}

void write_manifest(const RunConfig& cfg, Manifest& man) {
  std::ofstream out = open_out(cfg, "manifest.txt", man);
  out << "# hdmix run manifest\n";
  out << "command = " << command_name(cfg.command) << "\n";
  out << "seed = " << cfg.seed << "\n\n[config]\n";
  for (const auto& [k, v] : cfg.echo) {
    if (k != "command" && k != "seed") out << k << " = " << v << "\n";
  }
  out << "\n[constants]\n";
  for (const auto& [k, v] : man.constants) out << k << " = " << v << "\n";
  out << "\n[results]\n";
  for (const auto& [k, v] : man.results) out << k << " = " << v << "\n";
  out << "\n[outputs]\n";
  for (const auto& f : man.outputs) out << "file = " << f << "\n";
}

void record_constants(const RunConfig& cfg, const AssembledInstance& inst, Manifest& man) {
  const PrimalOperator A = inst.primal_operator();
  const CouplingForm B = inst.coupling();
  const ConstantsReport rep = verify_constants(A, B, cfg.samples, cfg.seed);
  man.constant("m_A_declared", A.m_A());
  man.constant("L_A_declared", A.L_A());
  man.constant("m_hat_A", rep.m_hat);
  man.constant("L_hat_A", rep.L_hat);
  man.constant("alpha_hat_b", rep.alpha_hat);
  man.constant("M_hat_b", rep.M_hat);
  man.constant("c0_hat", trace_constant(inst));
  man.constant("primal_dofs", inst.dim());
  man.constant("multipliers", inst.multipliers());
  man.constant("constant_violations", rep.violations.size());
}

EvolutionOptions evolution_options(const RunConfig& cfg) {
  EvolutionOptions o;
  o.uzawa = cfg.uzawa;
  return o;
}

void write_trajectory(const RunConfig& cfg, const AssembledInstance& inst, const Trajectory& traj, Manifest& man) {
  std::ofstream uo = open_out(cfg, "trajectory_u.csv", man);
  uo << "t,node_id,ux,uy\n" << std::setprecision(17);
  std::ofstream lo = open_out(cfg, "trajectory_lambda.csv", man);
  lo << "t,mult_id,lambda\n" << std::setprecision(17);
  for (std::size_t k = 0; k < traj.u.size(); ++k) {
    const double t = traj.grid.t(static_cast<int>(k));
    const auto field = inst.displacement(traj.u[k]);
    for (std::size_t i = 0; i < field.size(); ++i) {
      uo << t << ',' << i << ',' << field[i].x() << ',' << field[i].y() << '\n';
    }
    for (Index j = 0; j < traj.lambda[k].size(); ++j) lo << t << ',' << j << ',' << traj.lambda[k][j] << '\n';
  }
}

int cmd_solve(const RunConfig& cfg, std::ostream& log, Manifest& man, bool kkt) {
  const AssembledInstance inst = assemble(cfg.model());
  record_constants(cfg, inst, man);
  const Trajectory traj = solve_evolution(to_evolution_problem(inst, cfg.grid()), evolution_options(cfg));
  write_trajectory(cfg, inst, traj, man);

  int max_it = 0;
  for (const auto& s : traj.stats) max_it = std::max(max_it, s.iterations);
  log << "solved " << traj.u.size() << " time nodes, " << inst.dim() << " primal dofs, " << inst.multipliers()
      << " multipliers; max Uzawa iterations per node " << max_it << "\n";
  man.result("time_nodes", traj.u.size());
  man.result("max_uzawa_iterations", max_it);
  if (!kkt) return kExitOk;

  std::ofstream ko = open_out(cfg, "friction_kkt.csv", man);
  ko << "t,stick,slip,max_bound_residual,max_slip_residual,max_abs_normal\n" << std::setprecision(17);
  double worst_bound = 0.0, worst_slip = 0.0, worst_normal = 0.0;
  int any_stick = 0, any_slip = 0;
  for (std::size_t k = 0; k < traj.u.size(); ++k) {
    const FrictionKktReport r =
        check_friction_kkt(inst.tangential(traj.u[k]), traj.lambda[k], cfg.g, inst.weights, kSlipTol);
    const double normal = inst.multipliers() ? inst.normal_displacement(traj.u[k]).cwiseAbs().maxCoeff() : 0.0;
    ko << traj.grid.t(static_cast<int>(k)) << ',' << r.stick << ',' << r.slip << ',' << r.max_bound_residual << ','
       << r.max_slip_residual << ',' << normal << '\n';
    worst_bound = std::max(worst_bound, r.max_bound_residual);
    worst_slip = std::max(worst_slip, r.max_slip_residual);
    worst_normal = std::max(worst_normal, normal);
    any_stick = std::max(any_stick, r.stick);
    any_slip = std::max(any_slip, r.slip);
  }
  const bool ok = worst_bound <= kKktTol && worst_slip <= kKktTol && worst_normal == 0.0;
  log << "friction KKT: max bound residual " << worst_bound << ", max slip residual " << worst_slip
      << ", max |u_nu| " << worst_normal << "; peak stick nodes " << any_stick << ", peak slip nodes " << any_slip
      << "\n";
  log << (ok ? "PASS" : "FAIL") << " friction KKT residuals <= " << kKktTol << "\n";
  man.result("kkt_max_bound_residual", worst_bound);
  man.result("kkt_max_slip_residual", worst_slip);
  man.result("kkt_max_abs_normal", worst_normal);
  man.result("kkt_peak_stick", any_stick);
  man.result("kkt_peak_slip", any_slip);
  return ok ? kExitOk : kExitSolver;
}

int cmd_study(const RunConfig& cfg, std::ostream& log, Manifest& man) {
  const ContactModel base = cfg.model();
  record_constants(cfg, assemble(base), man);
  FamilyOverrides ov;
  if (cfg.perturb == "g") ov = FamilyOverrides::only_g();
  if (cfg.perturb == "none") ov = FamilyOverrides::none_perturbed();
  const PerturbationFamily fam = build_family(base, cfg.schedule, ov);
  std::vector<double> probes = cfg.probe_times;
  if (probes.empty()) probes = {0.5 * cfg.T, cfg.T};

  StudyOptions so;
  so.family_tol = cfg.uzawa.tol;
  so.reference_tol = std::min(1e-12, cfg.uzawa.tol);
  so.max_iter = std::max(cfg.uzawa.max_iter, 100000);
  const ConvergenceTable table = run_convergence_study(fam, cfg.grid(), probes, so);
  std::ofstream out = open_out(cfg, "convergence.csv", man);
  write_convergence_csv(out, table);

  man.constant("m0", fam.witnesses.m0);
  man.constant("L0", fam.witnesses.L0);
  man.constant("s0", fam.witnesses.s0);
  man.constant("alpha0", fam.witnesses.alpha0);
  man.constant("M0", fam.witnesses.M0);
  log << std::setprecision(6);
  for (const auto& r : table.rows) {
    log << "n=" << r.n << " t=" << r.t << " e_u=" << r.e_u << " e_lambda=" << r.e_lambda << "\n";
  }
  for (const auto& s : table.slopes) {
    log << "slope at t=" << s.t << ": e_u " << s.slope_u << ", e_lambda " << s.slope_lambda << "\n";
    man.result("slope_u_t" + Manifest::fmt(s.t), s.slope_u);
    man.result("slope_lambda_t" + Manifest::fmt(s.t), s.slope_lambda);
  }
  return kExitOk;
}

int cmd_optimize(const RunConfig& cfg, std::ostream& log, Manifest& man) {
  const ModelTemplate tmpl = cfg.model_template();
  record_constants(cfg, assemble(tmpl.instantiate(cfg.target)), man);
  const double t = cfg.cost_time.value_or(cfg.T);
  const ForwardState target = forward_solve(cfg.target, tmpl, t);
  CostSpec spec = cfg.cost == "misfit"
                      ? CostSpec::boundary_misfit(target.instance.displacement(target.u), t)
                      : CostSpec::tracking(cfg.c1, cfg.c2, 0.0, target.u, target.lambda, t);
  spec.c3 = cfg.c3;

  MinimizeOptions mo;
  mo.budget = cfg.budget;
  mo.scan_points = cfg.scan_points;
  const MinimizeResult res = minimize(spec, cfg.box, tmpl, mo);
  std::ofstream out = open_out(cfg, "optimize_trace.csv", man);
  write_trace_csv(out, res.trace);

  const auto p = res.best.to_array();
  log << std::setprecision(10) << "best cost " << res.cost << " after " << res.trace.size() << " evaluations ("
      << (res.converged ? "converged" : "budget exhausted") << ", " << res.failures << " failed)\n";
  log << "p* = (" << p[0] << ", " << p[1] << ", " << p[2] << ", " << p[3] << ", " << p[4] << ", " << p[5] << ")\n";
  man.result("best_cost", res.cost);
  man.result("evaluations", res.trace.size());
  man.result("converged", res.converged ? "true" : "false");
  man.result("failures", res.failures);
  const char* names[] = {"beta", "eta", "omega", "a0", "a2", "g"};
  for (int i = 0; i < ParameterPoint::kDim; ++i) man.result(std::string("best_") + names[i], p[static_cast<std::size_t>(i)]);
  return kExitOk;
}

// Max nodal error of the scalar Volterra benchmark u + int_0^t u = 1.
double volterra_error(int N, HistoryScheme scheme) {
  SpMat one(1, 1);
  one.insert(0, 0) = 1.0;
  const TimeGrid grid = TimeGrid::from_horizon(1.0, N);
  EvolutionProblem p{PrimalOperator(one, 1.0, 1.0),
                     MemoryKernel::exponential(0.0, one),
                     CouplingForm::empty(1),
                     MultiplierSet(Vec(0)),
                     [](double) { return Vec::Ones(1); },
                     [](double) { return Vec::Zero(1); },
                     grid};
  EvolutionOptions o;
  o.scheme = scheme;
  const Trajectory traj = solve_evolution(p, o);
  double err = 0.0;
  for (int k = 0; k <= N; ++k) err = std::max(err, std::abs(traj.u[static_cast<std::size_t>(k)][0] - std::exp(-grid.t(k))));
  return err;
}

int cmd_verify(const RunConfig& cfg, std::ostream& log, Manifest& man) {
  int failed = 0;
  auto check = [&](const std::string& name, bool ok, const std::string& detail) {
    log << (ok ? "PASS " : "FAIL ") << name << ": " << detail << "\n";
    man.result("check_" + name, ok ? "pass" : "fail");
    if (!ok) ++failed;
  };
  auto num = [](double v) { return Manifest::fmt(v); };

  const ContactModel model = cfg.model();
  const AssembledInstance inst = assemble(model);
  record_constants(cfg, inst, man);
  const double beta = model.material.beta, eta = model.material.eta;

  {
    const auto [lo, hi] = generalized_eig_range(inst.A, inst.inner);
    check("eigen_bounds", lo >= 2 * beta - 1e-10 && hi <= 2 * beta + 2 * eta + 1e-10,
          "generalized eigenvalues in [" + num(lo) + ", " + num(hi) + "]");
  }
  {
    const double sa = SpMat(inst.A - SpMat(inst.A.transpose())).norm();
    const double sg = SpMat(inst.G - SpMat(inst.G.transpose())).norm();
    check("symmetry", sa == 0.0 && sg == 0.0, "|A - A^T| = " + num(sa) + ", |G - G^T| = " + num(sg));
  }
  {
    const ConstantsReport rep = verify_constants(inst.primal_operator(), inst.coupling(), cfg.samples, cfg.seed);
    std::string detail = rep.violations.empty() ? "no declared constant violated" : rep.violations.front();
    check("declared_constants", rep.violations.empty(), detail);
  }
  {
    const MemoryKernel kernel = MemoryKernel::exponential(model.material.omega, inst.G);
    const TimeGrid grid = cfg.grid();
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> nd;
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<Vec> u;
      double scale = 0.0;
      for (int k = 0; k <= grid.steps; ++k) {
        Vec v(inst.dim());
        for (Index i = 0; i < v.size(); ++i) v[i] = nd(rng);
        scale = std::max(scale, (inst.G * v).cwiseAbs().maxCoeff());
        u.push_back(std::move(v));
      }
      HistoryState st{Vec::Zero(inst.dim()), 0};
      for (int k = 1; k <= grid.steps; ++k) {
        st = advance_recursive(st, u[static_cast<std::size_t>(k - 1)], u[static_cast<std::size_t>(k)], kernel, grid.dt);
        const Vec direct = eval_history_direct(u, kernel, grid, k);
        worst = std::max(worst, (st.H - direct).cwiseAbs().maxCoeff() / std::max(1.0, scale * grid.horizon()));
      }
    }
    check("history_recursion", worst <= 1e-12, "max scaled difference " + num(worst));
  }
  {
    const LipschitzReport rep =
        history_lipschitz_check(MemoryKernel::exponential(model.material.omega, inst.G), cfg.grid(), 100, cfg.seed);
    check("history_lipschitz", rep.worst_ratio <= 1.0 + 1e-12, "worst ratio " + num(rep.worst_ratio));
  }
  {
    const double e10 = volterra_error(10, HistoryScheme::Implicit), e20 = volterra_error(20, HistoryScheme::Implicit),
                 e40 = volterra_error(40, HistoryScheme::Implicit);
    const double o1 = std::log2(e10 / e20), o2 = std::log2(e20 / e40);
    check("volterra_implicit_order", std::min(o1, o2) >= 1.9, "orders " + num(o1) + ", " + num(o2));
    const double x10 = volterra_error(10, HistoryScheme::Explicit), x20 = volterra_error(20, HistoryScheme::Explicit),
                 x40 = volterra_error(40, HistoryScheme::Explicit);
    const double p1 = std::log2(x10 / x20), p2 = std::log2(x20 / x40);
    check("volterra_explicit_order", std::min(p1, p2) >= 0.9, "orders " + num(p1) + ", " + num(p2));
  }
  {
    Eigen::Matrix2d grad;
    grad << 0.3, -0.2, 0.15, 0.4;
    const double err = patch_test_error(model.mesh, model.material, grad, Eigen::Vector2d(0.1, -0.05));
    check("patch_test", err <= 1e-12, "max nodal error " + num(err));
  }
  {
    const SpMat K = full_stiffness(model.mesh, model.material);
    Vec v(K.cols());
    for (Index i = 0; i < v.size(); ++i) v[i] = i % 2 ? -0.7 : 1.3;
    const double r = (K * v).cwiseAbs().maxCoeff();
    check("rigid_translation", r <= 1e-12 * (1.0 + K.norm()), "max |K v| " + num(r));
  }
  log << (failed ? "verify: " + std::to_string(failed) + " check(s) failed\n" : std::string("verify: all checks passed\n"));
  return failed ? kExitSolver : kExitOk;
}

}  // namespace

int run(const RunConfig& cfg, std::ostream& log, std::ostream& err) {
  Manifest man;
  try {
    fs::create_directories(cfg.out_dir);
    int code = kExitOk;
    switch (cfg.command) {
      case Command::Solve:
        code = cmd_solve(cfg, log, man, false);
        break;
      case Command::DemoContact:
        code = cmd_solve(cfg, log, man, true);
        break;
      case Command::StudyConvergence:
        code = cmd_study(cfg, log, man);
        break;
      case Command::Optimize:
        code = cmd_optimize(cfg, log, man);
        break;
      case Command::Verify:
        code = cmd_verify(cfg, log, man);
        break;
    }
    write_manifest(cfg, man);
    return code;
  } catch (const SolverError& e) {
    err << "solver error: " << e.what() << " (last residual " << e.last_residual() << ")\n";
    return kExitSolver;
  } catch (const CostEvaluationError& e) {
    err << "optimization error: " << e.what() << "\n";
    return kExitSolver;
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ArgumentError& e) {
    err << "argument error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    err << "output error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitSolver;
  }
}

}  // namespace hdmix
