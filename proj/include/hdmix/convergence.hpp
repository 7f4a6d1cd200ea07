#pragma once

// Data-perturbation studies: indexed families of contact models (or abstract
// evolution problems) whose data converge to a base instance, paired solves
// against the base, Mosco checks for scaled multiplier sets and the static
// stability ratio.

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hdmix/contact.hpp"
#include "hdmix/history.hpp"
#include "hdmix/saddle.hpp"

namespace hdmix {

/// x_n as a function of the base value x and the index n.
using ScalingLaw = std::function<double(double x, int n)>;

/// x_n = x (1 + 1/n).
ScalingLaw harmonic_law();
/// x_n = x.
ScalingLaw constant_law();

struct FamilyOverrides {
  std::optional<ScalingLaw> beta;
  std::optional<ScalingLaw> eta;
  std::optional<ScalingLaw> omega;
  std::optional<ScalingLaw> g;
  /// Applied to the amplitude of the body force and traction fields (x = 1).
  std::optional<ScalingLaw> body;
  std::optional<ScalingLaw> traction;

  /// Every parameter held at its base value except the friction bound.
  static FamilyOverrides only_g();
  static FamilyOverrides none_perturbed();
};

struct FamilyMember {
  int n = 1;
  ContactModel model;
  double beta = 0.0, eta = 0.0, omega = 0.0, g = 0.0;
  double body_scale = 1.0, traction_scale = 1.0;
  /// ||A_n v - A v|| <= F_n (||v|| + delta_n) with delta_n = 0.
  double F_n = 0.0;
  double delta_n = 0.0;
  /// History perturbation on the window [0, m]: F_n^m = m |omega_n - omega|.
  double F_n_m = 0.0;
  double delta_n_m = 0.0;
  // Per-index structural constants.
  double m_n = 0.0, L_n = 0.0, s_n = 1.0, alpha_n = 0.0, M_n = 0.0;
};

struct UniformWitnesses {
  double m0 = 0.0, L0 = 0.0, s0 = 1.0, alpha0 = 0.0, M0 = 0.0;
};

struct PerturbationFamily {
  ContactModel base;
  std::vector<FamilyMember> members;
  UniformWitnesses witnesses;
  int window = 1;  // m in F_n^m
};

std::vector<int> default_schedule();

/// Throws ArgumentError for a bad schedule and ValidationError when some
/// beta_n <= 0 or g_n <= 0 (with g > 0).
PerturbationFamily build_family(const ContactModel& base, const std::vector<int>& schedule,
                                const FamilyOverrides& overrides = {}, int window = 1);

struct ConvergenceRow {
  int n = 0;
  double t = 0.0;
  double e_u = 0.0;       // ||u_n(t) - u(t)||_X
  double e_lambda = 0.0;  // ||lambda_n(t) - lambda(t)||_w, strong norm (weak = strong here)
  double F_n = 0.0;
  double F_n_m = 0.0;
  double g_n = 0.0;
};

struct ConvergenceSlope {
  double t = 0.0;
  double slope_u = 0.0;
  double slope_lambda = 0.0;
};

struct ConvergenceTable {
  std::vector<ConvergenceRow> rows;  // ordered by (n, t)
  std::vector<ConvergenceSlope> slopes;
};

struct StudyOptions {
  double reference_tol = 1e-12;
  double family_tol = 1e-10;
  int max_iter = 100000;
};

/// Least-squares slope of log(e) against log(n); zero errors are skipped.
double loglog_slope(const std::vector<int>& n, const std::vector<double>& e);

ConvergenceTable run_convergence_study(const PerturbationFamily& family, const TimeGrid& grid,
                                       const std::vector<double>& probe_times,
                                       const StudyOptions& opts = {});

/// Abstract path: members are arbitrary evolution problems on the base grid.
struct AbstractMember {
  int n = 1;
  EvolutionProblem problem;
  double g_n = 0.0;
};

ConvergenceTable run_convergence_study(const EvolutionProblem& reference,
                                       const std::vector<AbstractMember>& members,
                                       const std::vector<double>& probe_times,
                                       const StudyOptions& opts = {});

/// B_n = B + E / n with every other datum shared with the base problem.
std::vector<AbstractMember> build_coupling_family(const EvolutionProblem& base, const SpMat& E,
                                                  const std::vector<int>& schedule);

/// Sampled evidence for limsup b_n(w - z_n, mu_n) <= b(w - z, mu) along
/// z_n = z + dz / n, mu_n = mu + dmu / n. Necessary, not sufficient.
struct CvbReport {
  std::vector<double> excess;  // b_n(w - z_n, mu_n) - b(w - z, mu), per schedule index
  double tail_max = 0.0;       // max excess over the last half of the schedule
  bool consistent = false;     // excess decays toward a nonpositive limit
  std::string note;
};

CvbReport check_cvb(const CouplingForm& base, const SpMat& E, const std::vector<int>& schedule,
                    int samples, std::uint64_t seed = 11);

struct MoscoRow {
  int n = 0;
  double g_n = 0.0;
  double recovery_max = 0.0;           // max over samples of ||mu_n - mu||
  double recovery_formula_gap = 0.0;   // max | ||mu_n - mu|| - |g_n/g - 1| ||mu|| |
  bool recovery_in_set = true;         // mu_n in Lambda_n for all samples
  double projection_max = 0.0;         // max over samples of ||P_n(mu) - P(mu)||
  double hausdorff = 0.0;              // |g_n - g| sqrt(m)
};

struct MoscoReport {
  std::vector<MoscoRow> rows;
  bool projection_monotone = true;
};

/// Box sets Lambda_n = (g_n / g) Lambda with Lambda = {|mu_i| <= g}.
/// Recovery uses the samples that lie in Lambda; projections use all.
MoscoReport mosco_check(const std::vector<double>& g_schedule, double g,
                        const std::vector<Vec>& samples, const std::vector<int>& indices = {});

struct StabilityReport {
  double lhs = 0.0;    // ||u1 - u2||_X + ||lambda1 - lambda2||_w
  double rhs = 0.0;    // ||d eta||_X' + ||d f||_X' + ||d k||_X
  double ratio = 0.0;  // 0 when rhs == 0
  bool uniqueness_violation = false;
};

/// Instances must share A, B and Lambda (only eta, rhs, k differ).
StabilityReport stability_ratio(const StaticMixedInstance& a, const StaticMixedInstance& b,
                                const UzawaOptions& opts = {});

struct StabilitySweep {
  std::vector<double> scales;
  std::vector<double> ratios;
  double max_ratio = 0.0;
  double median_ratio = 0.0;
  double coarse_ratio = 0.0;  // ratio at the largest scale
};

StabilitySweep stability_sweep(const StaticMixedInstance& base, const Vec& d_eta, const Vec& d_rhs,
                               const Vec& d_k, const std::vector<double>& scales,
                               const UzawaOptions& opts = {});

/// Header `n,t,e_u,e_lambda,F_n,F_n_m,g_n`, one row per (n, t).
void write_convergence_csv(std::ostream& out, const ConvergenceTable& table);

}  // namespace hdmix
