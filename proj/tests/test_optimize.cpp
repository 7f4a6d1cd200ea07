#include <cmath>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "hdmix/errors.hpp"
#include "hdmix/optimize.hpp"

using namespace hdmix;

namespace {

ModelTemplate small_template() {
  ModelTemplate t;
  t.mesh = generate_rect_mesh(3, 3, 1.0, 1.0);
  t.body_field.assign(t.mesh.nodes.size(), Eigen::Vector2d(0.0, -1.0));
  t.traction_field.assign(t.mesh.nodes.size(), Eigen::Vector2d(1.0, 0.0));
  t.theta = [](double s) { return s; };
  t.zeta = [](double s) { return s; };
  t.grid = TimeGrid::from_horizon(1.0, 4);
  return t;
}

ParameterBox default_box() {
  return ParameterBox{ParameterPoint{0.5, 0.25, 0.5, 0.5, 0.5, 0.05}, ParameterPoint{2.0, 1.0, 2.0, 1.5, 1.5, 0.2},
                      1e-3};
}

CostSpec tracking_at(const ParameterPoint& p, const ModelTemplate& tmpl) {
  const ForwardState st = forward_solve(p, tmpl, 1.0);
  return CostSpec::tracking(1.0, 1.0, 0.0, st.u, st.lambda, 1.0);
}

}  // namespace

TEST_CASE("parameter point and box") {
  const ParameterPoint p{1, 2, 3, 4, 5, 6};
  CHECK(ParameterPoint::from_array(p.to_array()).to_array() == p.to_array());
  ParameterBox box = default_box();
  CHECK_NOTHROW(box.validate());
  CHECK(box.contains(box.center()));
  CHECK_FALSE(box.contains(p));
  const ParameterPoint c = box.clip(p);
  CHECK(c.beta == 1.0);
  CHECK(c.g == 0.2);
  CHECK(box.contains(c));
  box.lo.beta = 3.0;
  CHECK_THROWS_AS(box.validate(), ValidationError);
  box = default_box();
  box.lo.g = 0.0;
  CHECK_THROWS_AS(box.validate(), ValidationError);
  box = default_box();
  box.delta0 = 0.0;
  CHECK_THROWS_AS(box.validate(), ValidationError);
  // Amplitudes carry no floor.
  box = default_box();
  box.lo.a0 = -1.0;
  CHECK_NOTHROW(box.validate());
}

TEST_CASE("cost at the generating point is zero") {
  const ModelTemplate tmpl = small_template();
  const ParameterPoint target{1.2, 0.6, 1.5, 1.0, 0.8, 0.12};
  const CostSpec spec = tracking_at(target, tmpl);
  CHECK(evaluate_cost(target, spec, tmpl) == 0.0);
  ParameterPoint other = target;
  other.beta = 1.3;
  CHECK(evaluate_cost(other, spec, tmpl) > 0.0);
}

TEST_CASE("cost specifications") {
  CHECK_THROWS_AS(CostSpec::tracking(-1.0, 0, 0, {}, {}, 0).validate(), ValidationError);
  CHECK(CostSpec::tracking(0, 0, 1, {}, {}, 0).needs_solve() == false);
  CHECK(CostSpec::tracking(1, 0, 0, {}, {}, 0).needs_solve());
  const ModelTemplate tmpl = small_template();
  const ParameterPoint p{1, 1, 1, 1, 1, 0.1};
  CHECK(evaluate_cost(p, CostSpec::tracking(0, 0, 2, {}, {}, 1.0), tmpl) == doctest::Approx(2 * 5.01));
  CHECK_THROWS_AS(evaluate_cost(p, CostSpec::tracking(1, 0, 0, Vec::Zero(3), {}, 1.0), tmpl), ArgumentError);
  CHECK_THROWS_AS(evaluate_cost(p, CostSpec::tracking(1, 0, 0, {}, {}, 0.3), tmpl), ArgumentError);
}

TEST_CASE("boundary misfit integrates exactly") {
  const Mesh m = generate_rect_mesh(4, 2, 2.0, 1.0);
  std::vector<Eigen::Vector2d> u(m.nodes.size(), Eigen::Vector2d(0.3, -0.4)), u0(m.nodes.size(), Eigen::Vector2d::Zero());
  // Constant difference of magnitude 0.5 over the contact side of length 2.
  CHECK(boundary_misfit(m, u, u0) == doctest::Approx(0.25 * 2.0));
  // Linear difference x on [0, 2]: integral of x^2 = 8/3.
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = Eigen::Vector2d(m.nodes[i].x(), 0.0);
  CHECK(boundary_misfit(m, u, u0) == doctest::Approx(8.0 / 3.0));
  u.pop_back();
  CHECK_THROWS_AS(boundary_misfit(m, u, u0), ArgumentError);
}

TEST_CASE("pure parameter norm is minimized at the lower corner") {
  const ModelTemplate tmpl = small_template();
  const ParameterBox box = default_box();
  MinimizeOptions o;
  o.budget = 400;
  const MinimizeResult r = minimize(CostSpec::tracking(0, 0, 1, {}, {}, 1.0), box, tmpl, o);
  const double corner = parameter_norm2(box.lo, {1, 1, 1, 1, 1, 1});
  CHECK(r.cost == doctest::Approx(corner).epsilon(1e-6));
  CHECK(box.contains(r.best));
  CHECK(static_cast<int>(r.trace.size()) <= o.budget);
}

TEST_CASE("degenerate box evaluates its single point") {
  const ModelTemplate tmpl = small_template();
  const ParameterPoint p{1.0, 0.5, 1.0, 1.0, 1.0, 0.1};
  const ParameterBox box{p, p, 1e-3};
  const MinimizeResult r = minimize(tracking_at(p, tmpl), box, tmpl);
  CHECK(r.cost == 0.0);
  CHECK(r.best.to_array() == p.to_array());
  CHECK(r.trace.size() >= 1);
}

TEST_CASE("minimize rejects bad input") {
  const ModelTemplate tmpl = small_template();
  MinimizeOptions o;
  o.budget = 0;
  CHECK_THROWS_AS(minimize(CostSpec::tracking(0, 0, 1, {}, {}, 1.0), default_box(), tmpl, o), ArgumentError);
  ParameterBox bad = default_box();
  bad.hi.eta = 0.1;
  CHECK_THROWS_AS(minimize(CostSpec::tracking(0, 0, 1, {}, {}, 1.0), bad, tmpl), ValidationError);
}

TEST_CASE("grid scan layout") {
  const ModelTemplate tmpl = small_template();
  const ParameterBox box = default_box();
  const auto rows = grid_scan(CostSpec::tracking(0, 0, 1, {}, {}, 1.0), box, tmpl, 2);
  REQUIRE(rows.size() == 64);
  CHECK(rows[0].p.to_array() == box.lo.to_array());
  CHECK(rows[63].p.to_array() == box.hi.to_array());
  // First coordinate slowest, last fastest.
  CHECK(rows[1].p.g == box.hi.g);
  CHECK(rows[1].p.beta == box.lo.beta);
  CHECK(rows[32].p.beta == box.hi.beta);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].eval_id == static_cast<int>(i));
    CHECK(rows[i].cost == doctest::Approx(parameter_norm2(rows[i].p, {1, 1, 1, 1, 1, 1})));
  }
  CHECK_THROWS_AS(grid_scan(CostSpec::tracking(0, 0, 1, {}, {}, 1.0), box, tmpl, 1), ArgumentError);
  CHECK_THROWS_AS(grid_scan(CostSpec::tracking(0, 0, 1, {}, {}, 1.0), box, tmpl, 10), ArgumentError);
}

TEST_CASE("recovery run is deterministic with a monotone trace") {
  const ModelTemplate tmpl = small_template();
  const ParameterPoint target{1.2, 0.6, 1.5, 1.0, 0.8, 0.12};
  const CostSpec spec = tracking_at(target, tmpl);
  MinimizeOptions o;
  o.budget = 120;
  const MinimizeResult a = minimize(spec, default_box(), tmpl, o);
  const MinimizeResult b = minimize(spec, default_box(), tmpl, o);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].cost == b.trace[i].cost);
    CHECK(a.trace[i].p.to_array() == b.trace[i].p.to_array());
    if (i > 0) CHECK(a.trace[i].best_so_far <= a.trace[i - 1].best_so_far);
    CHECK(default_box().contains(a.trace[i].p));
  }
  CHECK(a.cost == a.trace.back().best_so_far);
  CHECK(a.cost < a.trace.front().cost);

  std::ostringstream csv;
  write_trace_csv(csv, a.trace);
  CHECK(csv.str().rfind("eval_id,beta,eta,omega,a0,a2,g,cost,feasible\n", 0) == 0);
}

TEST_CASE("failed forward solves are recorded, not fatal") {
  ModelTemplate tmpl = small_template();
  const ParameterPoint target{1.2, 0.6, 1.5, 1.0, 0.8, 0.12};
  const CostSpec spec = tracking_at(target, tmpl);
  tmpl.uzawa.max_iter = 1;
  tmpl.uzawa.tol = 1e-15;
  CHECK_THROWS_AS(evaluate_cost(target, spec, tmpl), CostEvaluationError);
  MinimizeOptions o;
  o.budget = 10;
  const MinimizeResult r = minimize(spec, default_box(), tmpl, o);
  CHECK(r.failures == static_cast<int>(r.trace.size()));
  for (const auto& e : r.trace) {
    CHECK(std::isinf(e.cost));
    CHECK_FALSE(e.failure.empty());
  }
}
