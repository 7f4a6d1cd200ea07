#include "hdmix/history.hpp"

#include <cmath>
#include <memory>
#include <random>
#include <sstream>

#include "hdmix/errors.hpp"

namespace hdmix {

TimeGrid TimeGrid::from_horizon(double T, int N) {
  if (!(T > 0.0) || N < 1) throw ArgumentError("time grid needs T > 0 and N >= 1");
  return TimeGrid{T / N, N};
}

int TimeGrid::node_of(double t) const {
  const double x = t / dt;
  const long k = std::lround(x);
  if (k < 0 || k > steps || std::abs(x - static_cast<double>(k)) > 1e-9) {
    std::ostringstream msg;
    msg << "time " << t << " is not a grid node";
    throw ArgumentError(msg.str());
  }
  return static_cast<int>(k);
}

MemoryKernel MemoryKernel::exponential(double omega, SpMat spatial) {
  if (!(omega >= 0.0)) throw ValidationError("relaxation rate omega must be >= 0");
  if (spatial.rows() != spatial.cols()) throw ArgumentError("kernel spatial matrix must be square");
  MemoryKernel k;
  k.omega_ = omega;
  k.s_m_ = 1.0;
  k.G_ = std::move(spatial);
  return k;
}

MemoryKernel MemoryKernel::general(ScalarKernel kern, SpMat spatial, double s_m) {
  if (!kern) throw ArgumentError("general kernel needs a callable");
  if (spatial.rows() != spatial.cols()) throw ArgumentError("kernel spatial matrix must be square");
  if (!(s_m >= 0.0)) throw ValidationError("history constant s_m must be >= 0");
  MemoryKernel k;
  k.general_ = std::move(kern);
  k.s_m_ = s_m;
  k.G_ = std::move(spatial);
  return k;
}

double MemoryKernel::weight(double t, double s) const {
  if (general_) return general_(t, s);
  return std::exp(-omega_ * (t - s));
}

Vec eval_history_direct(std::span<const Vec> u, const MemoryKernel& kernel, const TimeGrid& grid,
                        int k) {
  const Index n = kernel.spatial().rows();
  if (k < 0 || static_cast<std::size_t>(k) >= u.size()) {
    throw ArgumentError("eval_history_direct: node index outside the trajectory prefix");
  }
  Vec acc = Vec::Zero(n);
  if (k == 0) return acc;
  const double tk = grid.t(k);
  for (int j = 0; j <= k; ++j) {
    const double half = (j == 0 || j == k) ? 0.5 : 1.0;
    acc += (half * kernel.weight(tk, grid.t(j))) * u[static_cast<std::size_t>(j)];
  }
  return grid.dt * (kernel.spatial() * acc);
}

HistoryState advance_recursive(const HistoryState& state, const Vec& u_prev, const Vec& u_k,
                               const MemoryKernel& kernel, double dt) {
  if (!kernel.is_exponential()) {
    throw UnsupportedKernelError("recursive history update needs the exponential kernel");
  }
  const SpMat& G = kernel.spatial();
  const double decay = std::exp(-kernel.omega() * dt);
  HistoryState next;
  next.H = decay * (state.H + (0.5 * dt) * (G * u_prev)) + (0.5 * dt) * (G * u_k);
  next.k = state.k + 1;
  return next;
}

namespace {

Vec rectangle_history_direct(std::span<const Vec> u, const MemoryKernel& kernel,
                             const TimeGrid& grid, int k) {
  Vec acc = Vec::Zero(kernel.spatial().rows());
  const double tk = grid.t(k);
  for (int j = 0; j < k; ++j) acc += kernel.weight(tk, grid.t(j)) * u[static_cast<std::size_t>(j)];
  return grid.dt * (kernel.spatial() * acc);
}

[[noreturn]] void rethrow_at(int node, const std::exception& e) {
  std::ostringstream msg;
  msg << "time node " << node << ": " << e.what();
  if (const auto* se = dynamic_cast<const SolverError*>(&e)) {
    throw SolverError(msg.str(), se->last_residual());
  }
  if (dynamic_cast<const ValidationError*>(&e)) throw ValidationError(msg.str());
  if (dynamic_cast<const ArgumentError*>(&e)) throw ArgumentError(msg.str());
  throw std::runtime_error(msg.str());
}

}  // namespace

Trajectory solve_evolution(const EvolutionProblem& p, const EvolutionOptions& opts) {
  const Index n = p.A.dim();
  const SpMat& G = p.S.spatial();
  if (G.rows() != n) throw ArgumentError("evolution: kernel spatial matrix must match the primal dimension");
  if (p.B.cols() != n) throw ArgumentError("evolution: coupling columns must match the primal dimension");
  if (p.Lambda.dim() != p.B.rows()) throw ArgumentError("evolution: multiplier set must match coupling rows");
  if (!p.f || !p.h) throw ArgumentError("evolution: load and constraint functions are required");
  if (!(p.grid.dt > 0.0) || p.grid.steps < 0) throw ArgumentError("evolution: invalid time grid");

  const int last = std::min(p.grid.steps, opts.last_node.value_or(p.grid.steps));
  const double dt = p.grid.dt;
  const bool implicit = opts.scheme == HistoryScheme::Implicit;

  // Bounds of G in the operator's inner product, for the shifted constants.
  const auto [g_lo, g_hi] = generalized_eig_range(G, p.A.inner());

  // Node 0 carries no history (empty integral), so its operator is A itself.
  std::unique_ptr<UzawaSolver> plain = std::make_unique<UzawaSolver>(p.A, p.B, p.Lambda, opts.uzawa);
  std::unique_ptr<UzawaSolver> folded;
  double folded_weight = -1.0;

  Trajectory traj;
  traj.grid = p.grid;
  traj.u.reserve(static_cast<std::size_t>(last + 1));
  traj.lambda.reserve(static_cast<std::size_t>(last + 1));
  traj.stats.reserve(static_cast<std::size_t>(last + 1));

  HistoryState state{Vec::Zero(n), 0};
  Vec rect = Vec::Zero(n);  // explicit-scheme running sum for the exponential kernel

  for (int k = 0; k <= last; ++k) {
    const double tk = p.grid.t(k);
    try {
      Vec eta = Vec::Zero(n);
      const UzawaSolver* solver = plain.get();
      if (k > 0) {
        if (implicit) {
          const double wkk = 0.5 * dt * p.S.weight(tk, tk);
          if (p.S.is_exponential()) {
            const double decay = std::exp(-p.S.omega() * dt);
            eta = decay * (state.H + (0.5 * dt) * (G * traj.u.back()));
          } else {
            Vec acc = Vec::Zero(n);
            for (int j = 0; j < k; ++j) {
              const double half = j == 0 ? 0.5 : 1.0;
              acc += (half * p.S.weight(tk, p.grid.t(j))) * traj.u[static_cast<std::size_t>(j)];
            }
            eta = dt * (G * acc);
          }
          if (wkk != folded_weight) {
            if (wkk < 0.0) throw ValidationError("kernel diagonal k(t,t) must be >= 0");
            folded = std::make_unique<UzawaSolver>(p.A.plus(SpMat(wkk * G), wkk * g_lo, wkk * g_hi),
                                                   p.B, p.Lambda, opts.uzawa);
            folded_weight = wkk;
          }
          solver = folded.get();
        } else if (p.S.is_exponential()) {
          const double decay = std::exp(-p.S.omega() * dt);
          rect = decay * (rect + dt * (G * traj.u.back()));
          eta = rect;
        } else {
          eta = rectangle_history_direct(traj.u, p.S, p.grid, k);
        }
      }

      const Vec fk = p.f(tk);
      const Vec hk = p.h(tk);
      if (fk.size() != n || hk.size() != n) throw ArgumentError("load/constraint size mismatch");
      const Vec* warm = traj.lambda.empty() ? nullptr : &traj.lambda.back();
      SaddleSolution sol = solver->solve(eta, fk, hk, warm);

      if (implicit && p.S.is_exponential()) {
        if (k == 0) {
          state = HistoryState{Vec::Zero(n), 0};
        } else {
          state = advance_recursive(state, traj.u.back(), sol.u, p.S, dt);
        }
      }
      traj.stats.push_back(
          StepStats{sol.iterations, sol.residual, sol.equality_residual, sol.inequality_residual});
      traj.u.push_back(std::move(sol.u));
      traj.lambda.push_back(std::move(sol.lambda));
    } catch (const std::exception& e) {
      rethrow_at(k, e);
    }
  }
  return traj;
}

LipschitzReport history_lipschitz_check(const MemoryKernel& kernel, const TimeGrid& grid, int trials,
                                        std::uint64_t seed) {
  if (trials < 1) throw ArgumentError("history_lipschitz_check: trials must be >= 1");
  const SpMat& G = kernel.spatial();
  const Index n = G.rows();
  auto gnorm = [&](const Vec& v) { return std::sqrt(std::max(0.0, v.dot(G * v))); };

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  LipschitzReport rep;
  rep.s_m = kernel.s_m();
  rep.trials = trials;
  rep.note = "single constant over the grid window [0, T]";

  std::vector<Vec> diff(static_cast<std::size_t>(grid.nodes()), Vec(n));
  for (int trial = 0; trial < trials; ++trial) {
    for (auto& d : diff) {
      for (Index i = 0; i < n; ++i) d[i] = normal(rng) - normal(rng);
    }
    double rhs_sum = 0.0;
    for (int k = 0; k <= grid.steps; ++k) {
      rhs_sum += gnorm(diff[static_cast<std::size_t>(k)]);
      if (k == 0) continue;
      // S is linear, so S u1 - S u2 = S (u1 - u2); take the X-representative.
      Vec acc = Vec::Zero(n);
      const double tk = grid.t(k);
      for (int j = 0; j <= k; ++j) {
        const double half = (j == 0 || j == k) ? 0.5 : 1.0;
        acc += (half * kernel.weight(tk, grid.t(j))) * diff[static_cast<std::size_t>(j)];
      }
      const double lhs = grid.dt * gnorm(acc);
      const double rhs = rep.s_m * grid.dt * rhs_sum;
      if (rhs > 0.0) rep.worst_ratio = std::max(rep.worst_ratio, lhs / rhs);
    }
  }
  return rep;
}

}  // namespace hdmix
