#pragma once

// History-dependent (Volterra) operator on a uniform time grid and the
// time-stepping driver for the evolution mixed problem
//
//   A u(t) + (S u)(t) + B^T W lambda(t) = f(t),
//   (mu - lambda(t))^T W B (u(t) - h(t)) <= 0   for all mu in Lambda,
//
// with (S u)(t) = int_0^t k(t, s) G u(s) ds.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hdmix/saddle.hpp"

namespace hdmix {

struct TimeGrid {
  double dt = 1.0;
  int steps = 0;  // N; nodes are t_0 .. t_N

  static TimeGrid from_horizon(double T, int N);
  int nodes() const { return steps + 1; }
  double t(int k) const { return k * dt; }
  double horizon() const { return steps * dt; }
  /// Index of the node closest to t. Throws ArgumentError if t is off-grid
  /// by more than 1e-9 * dt or outside [0, T].
  int node_of(double t) const;
};

class MemoryKernel {
 public:
  using ScalarKernel = std::function<double(double t, double s)>;

  /// k(t, s) = exp(-omega (t - s)).
  static MemoryKernel exponential(double omega, SpMat spatial);
  static MemoryKernel general(ScalarKernel k, SpMat spatial, double s_m);

  bool is_exponential() const { return !general_; }
  double omega() const { return omega_; }
  const SpMat& spatial() const { return G_; }
  /// Declared history Lipschitz constant on the whole grid window.
  double s_m() const { return s_m_; }
  double weight(double t, double s) const;

 private:
  MemoryKernel() = default;
  ScalarKernel general_;
  double omega_ = 0.0;
  double s_m_ = 1.0;
  SpMat G_;
};

struct EvolutionProblem {
  PrimalOperator A;
  MemoryKernel S;
  CouplingForm B;
  MultiplierSet Lambda;
  std::function<Vec(double)> f;
  std::function<Vec(double)> h;
  TimeGrid grid;
};

struct StepStats {
  int iterations = 0;
  double residual = 0.0;
  double equality_residual = 0.0;
  double inequality_residual = 0.0;
};

struct Trajectory {
  TimeGrid grid;
  std::vector<Vec> u;
  std::vector<Vec> lambda;
  std::vector<StepStats> stats;
};

struct HistoryState {
  Vec H;
  int k = 0;
};

/// Trapezoid history at node k from u_0..u_k (u.size() >= k + 1).
Vec eval_history_direct(std::span<const Vec> u, const MemoryKernel& kernel, const TimeGrid& grid,
                        int k);

/// O(1) update of the trapezoid history for the exponential kernel.
HistoryState advance_recursive(const HistoryState& state, const Vec& u_prev, const Vec& u_k,
                               const MemoryKernel& kernel, double dt);

enum class HistoryScheme {
  /// Trapezoid rule; the current-node weight is folded into the operator.
  Implicit,
  /// Left-rectangle rule over past nodes only.
  Explicit,
};

struct EvolutionOptions {
  UzawaOptions uzawa;
  HistoryScheme scheme = HistoryScheme::Implicit;
  /// Stop after this node (inclusive). Unset: whole grid.
  std::optional<int> last_node;
};

Trajectory solve_evolution(const EvolutionProblem& problem, const EvolutionOptions& opts = {});

struct LipschitzReport {
  double worst_ratio = 0.0;
  double s_m = 1.0;
  int trials = 0;
  std::string note;
};

/// Checks ||S u1(t_k) - S u2(t_k)||_G <= s_m dt sum_{j<=k} ||u1_j - u2_j||_G
/// on random trajectory pairs. One constant covers the whole grid window.
LipschitzReport history_lipschitz_check(const MemoryKernel& kernel, const TimeGrid& grid, int trials,
                                        std::uint64_t seed = 7);

}  // namespace hdmix
