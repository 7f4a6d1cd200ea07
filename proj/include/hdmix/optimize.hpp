#pragma once

// Parameter identification for the contact model: minimize a cost of the
// solved state at one time node over a closed box of
// p = (beta, eta, omega, a0, a2, g), where the body force and traction are
// a0 * F0 and a2 * F2 for fixed reference fields F0, F2.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdmix/contact.hpp"
#include "hdmix/history.hpp"
#include "hdmix/mesh.hpp"

namespace hdmix {

struct ParameterPoint {
  double beta = 1.0;
  double eta = 0.5;
  double omega = 1.0;
  double a0 = 1.0;
  double a2 = 1.0;
  double g = 0.1;

  static constexpr int kDim = 6;
  std::array<double, kDim> to_array() const { return {beta, eta, omega, a0, a2, g}; }
  static ParameterPoint from_array(const std::array<double, kDim>& v);
};

struct ParameterBox {
  ParameterPoint lo;
  ParameterPoint hi;
  double delta0 = 1e-3;  // floor for beta, eta, omega, g

  /// Throws ValidationError for lo > hi, delta0 <= 0, or a physical lower
  /// bound below delta0.
  void validate() const;
  bool contains(const ParameterPoint& p) const;
  ParameterPoint clip(const ParameterPoint& p) const;
  ParameterPoint center() const;
};

/// Fixed part of every forward solve.
struct ModelTemplate {
  Mesh mesh;
  std::vector<Eigen::Vector2d> body_field;      // F0, per node
  std::vector<Eigen::Vector2d> traction_field;  // F2, per node
  std::function<double(double)> theta = [](double) { return 1.0; };
  std::function<double(double)> zeta = [](double) { return 1.0; };
  TimeGrid grid;
  UzawaOptions uzawa;

  ContactModel instantiate(const ParameterPoint& p) const;
};

enum class CostKind { Tracking, BoundaryMisfit };

struct CostSpec {
  CostKind kind = CostKind::Tracking;
  double c1 = 1.0;
  double c2 = 0.0;
  double c3 = 0.0;
  Vec u0;                              // reduced displacement target (tracking)
  Vec lambda0;                         // multiplier target (tracking)
  std::vector<Eigen::Vector2d> u0_boundary;  // nodal target on the contact part (misfit)
  std::array<double, ParameterPoint::kDim> p_weights{1, 1, 1, 1, 1, 1};
  double t = 0.0;

  /// c1 ||u - u0||_X^2 + c2 ||lambda - lambda0||_w^2 + c3 ||p||_W^2.
  static CostSpec tracking(double c1, double c2, double c3, Vec u0, Vec lambda0, double t);
  /// int over the contact part of |u - u0|^2 (plus c3 ||p||_W^2 if set).
  static CostSpec boundary_misfit(std::vector<Eigen::Vector2d> u0, double t);

  void validate() const;
  bool needs_solve() const;
};

class CostEvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ForwardState {
  AssembledInstance instance;
  Vec u;
  Vec lambda;
};

/// Solves the model at p up to time t and returns the state there.
ForwardState forward_solve(const ParameterPoint& p, const ModelTemplate& tmpl, double t);

/// Weighted squared norm sum_i W_i p_i^2.
double parameter_norm2(const ParameterPoint& p, const std::array<double, ParameterPoint::kDim>& w);

/// Exact integral of |u - u0|^2 over the contact edges for P1 fields.
double boundary_misfit(const Mesh& mesh, const std::vector<Eigen::Vector2d>& u,
                       const std::vector<Eigen::Vector2d>& u0);

/// Throws CostEvaluationError when the forward solve fails.
double evaluate_cost(const ParameterPoint& p, const CostSpec& spec, const ModelTemplate& tmpl);

struct TraceEntry {
  int eval_id = 0;
  ParameterPoint p;
  double cost = 0.0;  // +inf when the evaluation failed
  bool feasible = true;
  double best_so_far = 0.0;
  std::string failure;
};

enum class Strategy { ScanThenNelderMead, NelderMead, ScanOnly };

struct MinimizeOptions {
  Strategy strategy = Strategy::ScanThenNelderMead;
  int budget = 300;
  int scan_points = 4;  // per axis, reduced until the scan fits in budget / 5
  double x_tol = 1e-9;  // simplex diameter in box-normalized coordinates
  double f_tol = 1e-15;
};

struct MinimizeResult {
  ParameterPoint best;
  double cost = 0.0;
  std::vector<TraceEntry> trace;
  bool converged = false;
  int failures = 0;
};

/// Throws ValidationError for an invalid box, ArgumentError for budget < 1.
MinimizeResult minimize(const CostSpec& spec, const ParameterBox& box, const ModelTemplate& tmpl,
                        const MinimizeOptions& opts = {});

/// Endpoint-inclusive full factorial, first coordinate slowest. Throws
/// ArgumentError for resolution < 2 or more than 1e5 points.
std::vector<TraceEntry> grid_scan(const CostSpec& spec, const ParameterBox& box, const ModelTemplate& tmpl,
                                  int resolution);

/// Header `eval_id,beta,eta,omega,a0,a2,g,cost,feasible`.
void write_trace_csv(std::ostream& out, const std::vector<TraceEntry>& trace);

}  // namespace hdmix
