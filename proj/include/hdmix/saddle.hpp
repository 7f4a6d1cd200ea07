#pragma once

// Static mixed problem with a box-constrained Lagrange multiplier:
//
//   A(u) + eta + B^T W lambda = rhs
//   (mu - lambda)^T W B (u - k) <= 0   for all mu in Lambda
//
// where W = diag(w) carries the dual pairing weights, so that
// b(v, mu) = mu^T W B v. Solved by projection-Uzawa with exact primal solves.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace hdmix {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;
using Index = Eigen::Index;

/// Coordinatewise monotone map added to the linear part of a PrimalOperator.
struct DiagonalNonlinearity {
  std::function<double(double)> value;
  std::function<double(double)> derivative;
};

/// Inner product on the primal space. Gram-matrix based when a matrix is
/// given, Euclidean otherwise. Holds a shared factorization for dual norms.
class InnerProduct {
 public:
  InnerProduct() = default;
  explicit InnerProduct(SpMat gram);

  bool is_euclidean() const { return !gram_; }
  const SpMat* gram() const { return gram_.get(); }

  double dot(const Vec& a, const Vec& b) const;
  double norm(const Vec& v) const;
  /// Norm of a dual (load-like) vector: sqrt(r^T G^{-1} r).
  double dual_norm(const Vec& r) const;
  /// Riesz map: solves G x = r.
  Vec riesz(const Vec& r) const;
  Mat riesz(const Mat& r) const;
  /// Dense copy of the Gram matrix (identity of size n when Euclidean).
  Mat dense(Index n) const;

 private:
  struct Factor;
  std::shared_ptr<const SpMat> gram_;
  std::shared_ptr<const Factor> factor_;
};

class PrimalOperator {
 public:
  PrimalOperator(SpMat linear, double m_A, double L_A,
                 std::optional<DiagonalNonlinearity> nonlinearity = std::nullopt,
                 InnerProduct inner = {});

  Index dim() const { return linear_.rows(); }
  const SpMat& linear() const { return linear_; }
  bool is_linear() const { return !nonlinearity_.has_value(); }
  const std::optional<DiagonalNonlinearity>& nonlinearity() const { return nonlinearity_; }
  const InnerProduct& inner() const { return inner_; }

  double m_A() const { return m_A_; }
  double L_A() const { return L_A_; }

  Vec apply(const Vec& u) const;
  SpMat jacobian(const Vec& u) const;

  /// A + extra, where extra is symmetric PSD with generalized eigenvalues in
  /// [extra_lo, extra_hi] w.r.t. the inner product.
  PrimalOperator plus(const SpMat& extra, double extra_lo, double extra_hi) const;

 private:
  SpMat linear_;
  double m_A_;
  double L_A_;
  std::optional<DiagonalNonlinearity> nonlinearity_;
  InnerProduct inner_;
};

class CouplingForm {
 public:
  CouplingForm(SpMat B, Vec weights, double M_b, double alpha_b);
  /// Degenerate form with no multiplier rows (m = 0).
  static CouplingForm empty(Index n);
  /// Declares M_b and alpha_b from the measured singular values in the
  /// given primal inner product.
  static CouplingForm measured(SpMat B, Vec weights, const InnerProduct& inner);

  Index rows() const { return B_.rows(); }
  Index cols() const { return B_.cols(); }
  const SpMat& matrix() const { return B_; }
  const Vec& weights() const { return w_; }
  double M_b() const { return M_b_; }
  double alpha_b() const { return alpha_b_; }

  /// B^T W lambda, the primal load generated by a multiplier.
  Vec transpose_pairing(const Vec& lambda) const;
  /// sqrt(sum w_i mu_i^2).
  double dual_norm(const Vec& mu) const;

 private:
  SpMat B_;
  Vec w_;
  double M_b_;
  double alpha_b_;
};

/// Box {mu : |mu_i| <= bound_i}.
class MultiplierSet {
 public:
  explicit MultiplierSet(Vec bounds);
  static MultiplierSet uniform(Index m, double bound);

  Index dim() const { return bounds_.size(); }
  const Vec& bounds() const { return bounds_; }
  bool contains(const Vec& mu, double tol = 0.0) const;
  MultiplierSet scaled(double factor) const;

 private:
  Vec bounds_;
};

Vec project_multiplier(const Vec& mu, const MultiplierSet& set);

struct StaticMixedInstance {
  PrimalOperator A;
  Vec eta;
  CouplingForm B;
  MultiplierSet Lambda;
  Vec rhs;
  Vec k;

  /// Throws ArgumentError on inconsistent sizes, ValidationError on
  /// non-finite data.
  void check_dimensions() const;
};

struct SaddleSolution {
  Vec u;
  Vec lambda;
  int iterations = 0;
  double residual = 0.0;  // final fixed-point increment
  double rho = 0.0;
  double equality_residual = 0.0;
  double inequality_residual = 0.0;
};

struct KktResiduals {
  double equality = 0.0;
  /// max_i |lambda_i - P(lambda_i + w_i (B(u-k))_i)|, zero iff the
  /// variational inequality holds.
  double inequality = 0.0;
  /// sup over mu in Lambda of b(u - k, mu - lambda).
  double gap = 0.0;
};

KktResiduals kkt_residuals(const StaticMixedInstance& inst, const Vec& u, const Vec& lambda);

/// Solves A(u) = rhs. Factorizes the linear part once; Newton for the
/// nonlinear case.
class PrimalSolver {
 public:
  explicit PrimalSolver(PrimalOperator op, double tol = 1e-12, int max_newton = 100);
  ~PrimalSolver();
  PrimalSolver(PrimalSolver&&) noexcept;
  PrimalSolver& operator=(PrimalSolver&&) noexcept;

  const PrimalOperator& op() const { return op_; }
  Vec solve(const Vec& rhs) const;

 private:
  struct Impl;
  PrimalOperator op_;
  double tol_;
  int max_newton_;
  std::unique_ptr<Impl> impl_;
};

Vec inner_solve_primal(const PrimalOperator& A, const Vec& rhs);

struct UzawaOptions {
  std::optional<double> rho;  // unset: m_A / (M_b^2 * max w)
  double tol = 1e-10;
  int max_iter = 10000;
  double inner_tol = 1e-12;
  int max_halvings = 20;
  int growth_window = 10;
};

/// Extreme singular values of B in the declared norms: the square roots of
/// the extreme eigenvalues of W^{1/2} B G^{-1} B^T W^{1/2}.
struct CouplingSpectrum {
  double sigma_min = 0.0;
  double sigma_max = 0.0;
  Index rank = 0;
};

CouplingSpectrum coupling_spectrum(const CouplingForm& B, const InnerProduct& inner);

/// Reusable Uzawa driver for a fixed (A, B, Lambda). The primal factorization
/// and coupling spectrum are computed once; solve() varies eta, rhs, k.
class UzawaSolver {
 public:
  UzawaSolver(PrimalOperator A, CouplingForm B, MultiplierSet Lambda, UzawaOptions opts = {});

  const PrimalOperator& A() const { return solver_.op(); }
  const CouplingForm& B() const { return B_; }
  const MultiplierSet& Lambda() const { return Lambda_; }
  const CouplingSpectrum& spectrum() const { return spectrum_; }
  double default_rho() const { return rho0_; }

  SaddleSolution solve(const Vec& eta, const Vec& rhs, const Vec& k,
                       const Vec* warm_start = nullptr) const;

 private:
  PrimalSolver solver_;
  CouplingForm B_;
  MultiplierSet Lambda_;
  UzawaOptions opts_;
  CouplingSpectrum spectrum_;
  double rho0_ = 1.0;
};

SaddleSolution uzawa_solve(const StaticMixedInstance& inst, const UzawaOptions& opts = {});

struct ConstantsReport {
  double m_hat = 0.0;  // exact generalized eigenvalue when linear, sampled otherwise
  double L_hat = 0.0;
  double sampled_m = 0.0;
  double sampled_L = 0.0;
  std::optional<double> eig_min;
  std::optional<double> eig_max;
  double alpha_hat = 0.0;
  double M_hat = 0.0;
  std::vector<std::string> violations;
};

ConstantsReport verify_constants(const PrimalOperator& A, const CouplingForm& B, int samples,
                                 std::uint64_t seed = 1);

/// Extreme generalized eigenvalues of a symmetric matrix w.r.t. an inner product.
std::pair<double, double> generalized_eig_range(const SpMat& K, const InnerProduct& inner);

}  // namespace hdmix
