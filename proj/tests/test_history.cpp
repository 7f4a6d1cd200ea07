#include <cmath>
#include <random>
#include <string>

#include "doctest.h"
#include "hdmix/errors.hpp"
#include "hdmix/history.hpp"
#include "oracles.hpp"

using namespace hdmix;

namespace {

SpMat identity(Index n) {
  SpMat I(n, n);
  I.setIdentity();
  return I;
}

EvolutionProblem scalar_problem(double a, double omega, std::function<double(double)> f, double g, int N) {
  SpMat A(1, 1), B(1, 1);
  A.insert(0, 0) = a;
  B.insert(0, 0) = 1.0;
  return EvolutionProblem{PrimalOperator(A, a, a),
                          MemoryKernel::exponential(omega, identity(1)),
                          CouplingForm::measured(B, Vec::Ones(1), InnerProduct()),
                          MultiplierSet(Vec::Constant(1, g)),
                          [f](double t) { return Vec::Constant(1, f(t)); },
                          [](double) { return Vec::Zero(1); },
                          TimeGrid::from_horizon(1.0, N)};
}

}  // namespace

TEST_CASE("time grid") {
  const TimeGrid g = TimeGrid::from_horizon(2.0, 8);
  CHECK(g.dt == doctest::Approx(0.25));
  CHECK(g.nodes() == 9);
  CHECK(g.node_of(1.5) == 6);
  CHECK_THROWS_AS(g.node_of(1.6), ArgumentError);
  CHECK_THROWS_AS(g.node_of(2.5), ArgumentError);
  CHECK_THROWS_AS(TimeGrid::from_horizon(0.0, 4), ArgumentError);
  CHECK_THROWS_AS(TimeGrid::from_horizon(1.0, 0), ArgumentError);
}

TEST_CASE("trapezoid history of cos converges at second order") {
  const double omega = 1.7;
  const double exact = ((omega * std::cos(1.0) + std::sin(1.0)) - omega * std::exp(-omega)) / (omega * omega + 1);
  const MemoryKernel kernel = MemoryKernel::exponential(omega, identity(1));
  double prev = 0.0;
  for (int N : {10, 20, 40, 80}) {
    const TimeGrid grid = TimeGrid::from_horizon(1.0, N);
    std::vector<Vec> u;
    for (int k = 0; k <= N; ++k) u.push_back(Vec::Constant(1, std::cos(grid.t(k))));
    const double err = std::abs(eval_history_direct(u, kernel, grid, N)[0] - exact);
    if (prev > 0.0) CHECK(std::log2(prev / err) == doctest::Approx(2.0).epsilon(0.05));
    prev = err;
  }
}

TEST_CASE("trapezoid history agrees with a fine quadrature of the interpolant") {
  std::mt19937_64 rng(5);
  const MemoryKernel kernel = MemoryKernel::exponential(0.8, identity(3));
  const TimeGrid grid = TimeGrid::from_horizon(1.0, 50);
  std::vector<Vec> u;
  // Smooth trajectory so that the trapezoid and exact integral differ by O(dt^2).
  const Vec a = oracle::random_vec(rng, 3), b = oracle::random_vec(rng, 3);
  for (int k = 0; k <= grid.steps; ++k) u.push_back(a * std::sin(grid.t(k)) + b);
  const Vec direct = eval_history_direct(u, kernel, grid, grid.steps);
  const Vec fine = oracle::riemann_history(u, grid.dt, grid.steps, 0.8, 200);
  CHECK((direct - fine).cwiseAbs().maxCoeff() <= 1e-4);
}

TEST_CASE("recursive update equals the direct sum") {
  std::mt19937_64 rng(8);
  Mat Gd = Mat::Identity(4, 4) * 2.0;
  Gd(0, 3) = Gd(3, 0) = 0.4;
  const MemoryKernel kernel = MemoryKernel::exponential(2.5, Gd.sparseView());
  const TimeGrid grid = TimeGrid::from_horizon(3.0, 40);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Vec> u;
    for (int k = 0; k <= grid.steps; ++k) u.push_back(oracle::random_vec(rng, 4));
    HistoryState s{Vec::Zero(4), 0};
    for (int k = 1; k <= grid.steps; ++k) {
      s = advance_recursive(s, u[static_cast<std::size_t>(k - 1)], u[static_cast<std::size_t>(k)], kernel, grid.dt);
      CHECK(s.k == k);
      const Vec d = eval_history_direct(u, kernel, grid, k);
      CHECK((s.H - d).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + d.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("history at node zero vanishes and direct evaluation checks its range") {
  const MemoryKernel kernel = MemoryKernel::exponential(1.0, identity(2));
  const TimeGrid grid = TimeGrid::from_horizon(1.0, 4);
  std::vector<Vec> u(3, Vec::Ones(2));
  CHECK(eval_history_direct(u, kernel, grid, 0).norm() == 0.0);
  CHECK_THROWS_AS(eval_history_direct(u, kernel, grid, 3), ArgumentError);
}

TEST_CASE("general kernels") {
  const double omega = 0.7;
  const MemoryKernel gen = MemoryKernel::general(
      [omega](double t, double s) { return std::exp(-omega * (t - s)); }, identity(1), 1.0);
  CHECK_FALSE(gen.is_exponential());
  CHECK_THROWS_AS(advance_recursive(HistoryState{Vec::Zero(1), 0}, Vec::Zero(1), Vec::Zero(1), gen, 0.1),
                  UnsupportedKernelError);

  EvolutionProblem p = scalar_problem(2.0, omega, [](double t) { return 1.0 + t; }, 0.3, 20);
  const Trajectory a = solve_evolution(p);
  p.S = gen;
  const Trajectory b = solve_evolution(p);
  for (std::size_t k = 0; k < a.u.size(); ++k) {
    CHECK(std::abs(a.u[k][0] - b.u[k][0]) <= 1e-10);
    CHECK(std::abs(a.lambda[k][0] - b.lambda[k][0]) <= 1e-10);
  }
}

TEST_CASE("zero data gives the zero trajectory") {
  const Trajectory t = solve_evolution(scalar_problem(1.0, 1.0, [](double) { return 0.0; }, 0.5, 10));
  for (const auto& u : t.u) CHECK(u.norm() == 0.0);
  for (const auto& l : t.lambda) CHECK(l.norm() == 0.0);
}

TEST_CASE("solutions are causal") {
  EvolutionProblem p = scalar_problem(2.0, 1.0, [](double t) { return std::sin(3 * t); }, 0.4, 20);
  const Trajectory a = solve_evolution(p);
  p.f = [](double t) { return Vec::Constant(1, t <= 0.5 + 1e-12 ? std::sin(3 * t) : 7.0); };
  const Trajectory b = solve_evolution(p);
  for (int k = 0; k <= 10; ++k) CHECK(a.u[static_cast<std::size_t>(k)][0] == b.u[static_cast<std::size_t>(k)][0]);
  CHECK(a.u[11][0] != b.u[11][0]);
}

TEST_CASE("fast relaxation approaches the static problem") {
  // 2u + lambda = 5 with |lambda| <= 1 has u = 2. For constant u the memory
  // term is about u / omega once omega dt is small, so the gap shrinks with omega.
  auto gap = [](double omega) {
    const Trajectory t = solve_evolution(scalar_problem(2.0, omega, [](double) { return 5.0; }, 1.0, 4000));
    CHECK(t.lambda.back()[0] == doctest::Approx(1.0));
    return std::abs(t.u.back()[0] - 2.0);
  };
  const double g10 = gap(10.0), g100 = gap(100.0);
  CHECK(g10 == doctest::Approx(2.0 - 4.0 / (2.0 + 0.1)).epsilon(1e-3));
  CHECK(g100 < g10 / 8.0);
}

TEST_CASE("last_node stops the march") {
  EvolutionOptions o;
  o.last_node = 4;
  const Trajectory t = solve_evolution(scalar_problem(1.0, 1.0, [](double) { return 1.0; }, 0.5, 10), o);
  CHECK(t.u.size() == 5);
}

TEST_CASE("solver failures name the time node") {
  EvolutionOptions o;
  o.uzawa.max_iter = 1;
  o.uzawa.tol = 1e-15;
  try {
    solve_evolution(scalar_problem(2.0, 1.0, [](double t) { return 5.0 + t; }, 1.0, 10), o);
    FAIL("expected SolverError");
  } catch (const SolverError& e) {
    CHECK(std::string(e.what()).find("time node") != std::string::npos);
  }
}

TEST_CASE("volterra benchmark orders") {
  auto err = [](int N, HistoryScheme scheme) {
    SpMat one = identity(1);
    const TimeGrid grid = TimeGrid::from_horizon(1.0, N);
    EvolutionProblem p{PrimalOperator(one, 1, 1), MemoryKernel::exponential(0.0, one), CouplingForm::empty(1),
                       MultiplierSet(Vec(0)), [](double) { return Vec::Ones(1); },
                       [](double) { return Vec::Zero(1); }, grid};
    EvolutionOptions o;
    o.scheme = scheme;
    const Trajectory t = solve_evolution(p, o);
    return std::abs(t.u.back()[0] - std::exp(-1.0));
  };
  CHECK(std::log2(err(20, HistoryScheme::Implicit) / err(40, HistoryScheme::Implicit)) >= 1.9);
  CHECK(std::log2(err(20, HistoryScheme::Explicit) / err(40, HistoryScheme::Explicit)) >= 0.9);
}

TEST_CASE("lipschitz check stays within the unit constant") {
  const MemoryKernel kernel = MemoryKernel::exponential(0.5, identity(3));
  const LipschitzReport r = history_lipschitz_check(kernel, TimeGrid::from_horizon(2.0, 30), 40);
  CHECK(r.trials == 40);
  CHECK(r.worst_ratio <= 1.0 + 1e-12);
  CHECK(r.worst_ratio > 0.0);
  CHECK_THROWS_AS(history_lipschitz_check(kernel, TimeGrid::from_horizon(1.0, 2), 0), ArgumentError);
  CHECK_THROWS_AS(MemoryKernel::exponential(-1.0, identity(1)), ValidationError);
}
