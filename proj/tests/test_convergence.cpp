#include <cmath>
#include <random>
#include <sstream>
#include <string>

#include "doctest.h"
#include "hdmix/convergence.hpp"
#include "hdmix/errors.hpp"
#include "oracles.hpp"

using namespace hdmix;

namespace {

ContactModel small_model(double g = 0.1) {
  ContactModel m;
  m.mesh = generate_rect_mesh(4, 4, 1.0, 1.0);
  m.material = Material{1.0, 0.5, 1.0};
  m.loads = Loads::uniform(m.mesh.nodes.size(), {0.0, -1.0}, {1.0, 0.0});
  m.loads.theta = [](double t) { return t; };
  m.loads.zeta = [](double t) { return t; };
  m.g = g;
  return m;
}

std::vector<const ConvergenceRow*> rows_at(const ConvergenceTable& t, double time) {
  std::vector<const ConvergenceRow*> out;
  for (const auto& r : t.rows) {
    if (std::abs(r.t - time) < 1e-12) out.push_back(&r);
  }
  return out;
}

}  // namespace

TEST_CASE("scaling laws") {
  CHECK(harmonic_law()(2.0, 4) == doctest::Approx(2.5));
  CHECK(harmonic_law()(2.0, 1) == doctest::Approx(4.0));
  CHECK(constant_law()(2.0, 7) == 2.0);
  CHECK(default_schedule() == std::vector<int>{1, 2, 4, 8, 16, 32});
}

TEST_CASE("family members and declared perturbation sizes") {
  const ContactModel base = small_model();
  const PerturbationFamily fam = build_family(base, {1, 2, 4});
  REQUIRE(fam.members.size() == 3);
  for (const auto& m : fam.members) {
    const double s = 1.0 + 1.0 / m.n;
    CHECK(m.beta == doctest::Approx(s));
    CHECK(m.eta == doctest::Approx(0.5 * s));
    CHECK(m.g == doctest::Approx(0.1 * s));
    CHECK(m.F_n == doctest::Approx(2 * (s - 1) + 2 * 0.5 * (s - 1)));
    CHECK(m.F_n_m == doctest::Approx(s - 1));
    CHECK(m.delta_n == 0.0);
    CHECK(m.m_n == doctest::Approx(2 * m.beta));
    CHECK(m.L_n == doctest::Approx(2 * m.beta + 2 * m.eta));
    CHECK(m.model.loads.body.front().y() == doctest::Approx(-s));
  }
  // Uniform witnesses bound every member.
  for (const auto& m : fam.members) {
    CHECK(fam.witnesses.m0 <= m.m_n + 1e-12);
    CHECK(fam.witnesses.L0 >= m.L_n - 1e-12);
    CHECK(fam.witnesses.alpha0 <= m.alpha_n + 1e-12);
    CHECK(fam.witnesses.M0 >= m.M_n - 1e-12);
  }
  CHECK(fam.witnesses.m0 == doctest::Approx(2 * 1.25));
  CHECK(fam.witnesses.s0 == 1.0);
}

TEST_CASE("family validation") {
  const ContactModel base = small_model();
  CHECK_THROWS_AS(build_family(base, {}), ArgumentError);
  CHECK_THROWS_AS(build_family(base, {0, 1}), ArgumentError);
  CHECK_THROWS_AS(build_family(base, {2, 1}), ArgumentError);
  FamilyOverrides ov;
  ov.beta = [](double x, int n) { return x * (1.0 - 2.0 / n); };
  CHECK_THROWS_AS(build_family(base, {1, 4}, ov), ValidationError);
  FamilyOverrides og;
  og.g = [](double x, int n) { return x - 1.0 / n; };
  CHECK_THROWS_AS(build_family(base, {1}, og), ValidationError);
}

TEST_CASE("friction-only family leaves the operator unperturbed") {
  const PerturbationFamily fam = build_family(small_model(), {1, 2}, FamilyOverrides::only_g());
  for (const auto& m : fam.members) {
    CHECK(m.F_n == 0.0);
    CHECK(m.F_n_m == 0.0);
    CHECK(m.g == doctest::Approx(0.1 * (1.0 + 1.0 / m.n)));
  }
}

TEST_CASE("loglog slope") {
  CHECK(loglog_slope({1, 2, 4, 8}, {3.0, 0.75, 0.1875, 0.046875}) == doctest::Approx(-2.0));
  CHECK(loglog_slope({1, 2, 4}, {1.0, 0.0, 0.25}) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(loglog_slope({1, 2}, {1.0}), ArgumentError);
}

TEST_CASE("unperturbed family reproduces the reference") {
  const ContactModel base = small_model();
  const PerturbationFamily fam = build_family(base, {1, 4}, FamilyOverrides::none_perturbed());
  const ConvergenceTable t = run_convergence_study(fam, TimeGrid::from_horizon(1.0, 10), {0.5, 1.0});
  CHECK(t.rows.size() == 4);
  for (const auto& r : t.rows) {
    CHECK(r.e_u <= 1e-8);
    CHECK(r.e_lambda <= 1e-8);
  }
}

TEST_CASE("default family converges to the base solution") {
  const PerturbationFamily fam = build_family(small_model(), {1, 2, 4, 8, 16});
  const ConvergenceTable t = run_convergence_study(fam, TimeGrid::from_horizon(1.0, 10), {0.5, 1.0});
  REQUIRE(t.slopes.size() == 2);
  for (double time : {0.5, 1.0}) {
    const auto rows = rows_at(t, time);
    REQUIRE(rows.size() == 5);
    for (std::size_t i = 1; i < rows.size(); ++i) {
      CHECK(rows[i]->e_u < rows[i - 1]->e_u);
      CHECK(rows[i]->F_n < rows[i - 1]->F_n);
    }
  }
  for (const auto& s : t.slopes) {
    CHECK(s.slope_u < -0.5);
    CHECK(s.slope_lambda < -0.5);
  }
  std::ostringstream out;
  write_convergence_csv(out, t);
  const std::string csv = out.str();
  CHECK(csv.rfind("n,t,e_u,e_lambda,F_n,F_n_m,g_n\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 11);
}

TEST_CASE("probe times off the grid are rejected") {
  const PerturbationFamily fam = build_family(small_model(), {1});
  CHECK_THROWS_AS(run_convergence_study(fam, TimeGrid::from_horizon(1.0, 10), {0.33}), ArgumentError);
}

TEST_CASE("abstract coupling family") {
  // Mixed stick and slip. With a small bound every node slips and coarse
  // members can flip a slip direction, so the error need not drop at first.
  const AssembledInstance inst = assemble(small_model(1.0));
  const EvolutionProblem base = to_evolution_problem(inst, TimeGrid::from_horizon(1.0, 8));
  std::mt19937_64 rng(41);
  Mat E = Mat::Zero(inst.multipliers(), inst.dim());
  for (Index i = 0; i < E.rows(); ++i) E.row(i) = 0.2 * oracle::random_vec(rng, E.cols()).transpose();
  const SpMat Es = E.sparseView();
  const auto members = build_coupling_family(base, Es, {2, 4, 8, 16});
  REQUIRE(members.size() == 4);
  const ConvergenceTable t = run_convergence_study(base, members, {1.0});
  const auto rows = rows_at(t, 1.0);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i]->e_u < rows[i - 1]->e_u);
  CHECK_THROWS_AS(build_coupling_family(base, SpMat(1, 1), {1}), ArgumentError);

  const CvbReport cvb = check_cvb(base.B, Es, {1, 2, 4, 8, 16, 32, 64}, 20);
  CHECK(cvb.consistent);
  CHECK(cvb.excess.size() == 7);
  CHECK(std::abs(cvb.excess.back()) < std::abs(cvb.excess.front()));
  CHECK_FALSE(cvb.note.empty());
}

TEST_CASE("mosco check on scaled boxes") {
  std::vector<Vec> samples;
  Vec a(2), b(2);
  a << 0.5, -1.0;  // inside {|mu_i| <= 1}
  b << 3.0, 0.2;   // outside
  samples = {a, b};
  const MoscoReport r = mosco_check({2.0, 1.5, 1.25}, 1.0, samples, {1, 2, 4});
  REQUIRE(r.rows.size() == 3);
  CHECK(r.rows[0].recovery_max == doctest::Approx(a.norm()));
  CHECK(r.rows[0].recovery_formula_gap <= 1e-15);
  CHECK(r.rows[0].recovery_in_set);
  // P_n(b) - P(b) = (g_n - 1, 0).
  CHECK(r.rows[1].projection_max == doctest::Approx(0.5));
  CHECK(r.rows[2].hausdorff == doctest::Approx(0.25 * std::sqrt(2.0)));
  CHECK(r.projection_monotone);
  const MoscoReport bad = mosco_check({1.25, 1.5}, 1.0, samples);
  CHECK_FALSE(bad.projection_monotone);
  CHECK_THROWS_AS(mosco_check({1.0}, 0.0, samples), ArgumentError);
  CHECK_THROWS_AS(mosco_check({-1.0}, 1.0, samples), ArgumentError);
}

TEST_CASE("stability ratio") {
  std::mt19937_64 rng(77);
  const auto s = oracle::random_instance(rng, 4, 2);
  const StaticMixedInstance a = oracle::to_static(s);
  UzawaOptions o;
  o.tol = 1e-13;
  o.max_iter = 1000000;
  const StabilityReport same = stability_ratio(a, a, o);
  CHECK(same.lhs == 0.0);
  CHECK(same.rhs == 0.0);
  CHECK(same.ratio == 0.0);

  StaticMixedInstance b = a;
  b.rhs += 0.01 * oracle::random_vec(rng, 4);
  const StabilityReport r = stability_ratio(a, b, o);
  CHECK(r.rhs == doctest::Approx((b.rhs - a.rhs).norm()));
  CHECK(r.ratio > 0.0);
  // Primal part alone is bounded by ||df|| / m_A.
  const SaddleSolution sa = uzawa_solve(a, o), sb = uzawa_solve(b, o);
  CHECK((sa.u - sb.u).norm() <= r.rhs / a.A.m_A() + 1e-9);

  const StabilitySweep sw = stability_sweep(a, oracle::random_vec(rng, 4), oracle::random_vec(rng, 4),
                                            oracle::random_vec(rng, 4), {1e-1, 1e-3, 1e-5}, o);
  CHECK(sw.ratios.size() == 3);
  CHECK(sw.coarse_ratio == sw.ratios.front());
  CHECK(sw.max_ratio >= sw.median_ratio);
  CHECK_THROWS_AS(stability_sweep(a, Vec::Zero(3), Vec::Zero(4), Vec::Zero(4), {0.1}, o), ArgumentError);
}

TEST_CASE("zero loads give zero solutions for every member") {
  ContactModel base = small_model();
  base.loads = Loads::uniform(base.mesh.nodes.size(), {0.0, 0.0}, {0.0, 0.0});
  const PerturbationFamily fam = build_family(base, {1, 2, 4});
  const TimeGrid grid = TimeGrid::from_horizon(1.0, 5);
  for (const auto& m : fam.members) {
    const Trajectory t = solve_evolution(to_evolution_problem(m.model, grid));
    for (const auto& u : t.u) CHECK(u.norm() == 0.0);
  }
  const ConvergenceTable table = run_convergence_study(fam, grid, {1.0});
  for (const auto& r : table.rows) CHECK(r.e_u == 0.0);
}
