#include "hdmix/saddle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include "hdmix/errors.hpp"

namespace hdmix {

namespace {

bool is_symmetric(const SpMat& M) {
  const double scale = std::max(1.0, M.cwiseAbs().sum());
  const SpMat diff = SpMat(M.transpose()) - M;
  return diff.cwiseAbs().sum() <= 1e-12 * scale;
}

bool all_finite(const Vec& v) { return v.allFinite(); }

}  // namespace

// ---------------------------------------------------------------------------
// InnerProduct

struct InnerProduct::Factor {
  Eigen::SimplicialLLT<SpMat> llt;
};

InnerProduct::InnerProduct(SpMat gram) {
  if (gram.rows() != gram.cols()) throw ArgumentError("Gram matrix must be square");
  if (!is_symmetric(gram)) throw ValidationError("Gram matrix must be symmetric");
  auto factor = std::make_shared<Factor>();
  factor->llt.compute(gram);
  if (factor->llt.info() != Eigen::Success) {
    throw ValidationError("Gram matrix is not positive definite");
  }
  gram_ = std::make_shared<const SpMat>(std::move(gram));
  factor_ = std::move(factor);
}

double InnerProduct::dot(const Vec& a, const Vec& b) const {
  if (!gram_) return a.dot(b);
  return a.dot(*gram_ * b);
}

double InnerProduct::norm(const Vec& v) const { return std::sqrt(std::max(0.0, dot(v, v))); }

double InnerProduct::dual_norm(const Vec& r) const {
  if (!gram_) return r.norm();
  return std::sqrt(std::max(0.0, r.dot(riesz(r))));
}

Vec InnerProduct::riesz(const Vec& r) const {
  if (!gram_) return r;
  return factor_->llt.solve(r);
}

Mat InnerProduct::riesz(const Mat& r) const {
  if (!gram_) return r;
  return factor_->llt.solve(r);
}

Mat InnerProduct::dense(Index n) const {
  if (!gram_) return Mat::Identity(n, n);
  return Mat(*gram_);
}

// ---------------------------------------------------------------------------
// PrimalOperator

PrimalOperator::PrimalOperator(SpMat linear, double m_A, double L_A,
                               std::optional<DiagonalNonlinearity> nonlinearity,
                               InnerProduct inner)
    : linear_(std::move(linear)),
      m_A_(m_A),
      L_A_(L_A),
      nonlinearity_(std::move(nonlinearity)),
      inner_(std::move(inner)) {
  if (linear_.rows() != linear_.cols()) throw ArgumentError("primal operator must be square");
  if (inner_.gram() && inner_.gram()->rows() != linear_.rows()) {
    throw ArgumentError("Gram matrix size does not match the primal operator");
  }
  if (!(m_A_ > 0.0)) throw ValidationError("primal operator needs m_A > 0 (strong monotonicity)");
  if (!(L_A_ >= m_A_)) throw ValidationError("primal operator needs L_A >= m_A");
  if (!is_symmetric(linear_)) throw ValidationError("linear part of the primal operator must be symmetric");
  if (nonlinearity_ && (!nonlinearity_->value || !nonlinearity_->derivative)) {
    throw ArgumentError("nonlinearity needs both value and derivative");
  }
  linear_.makeCompressed();
}

Vec PrimalOperator::apply(const Vec& u) const {
  if (u.size() != dim()) throw ArgumentError("primal operator: dimension mismatch");
  Vec out = linear_ * u;
  if (nonlinearity_) {
    for (Index i = 0; i < u.size(); ++i) out[i] += nonlinearity_->value(u[i]);
  }
  return out;
}

SpMat PrimalOperator::jacobian(const Vec& u) const {
  if (!nonlinearity_) return linear_;
  SpMat diag(dim(), dim());
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(dim()));
  for (Index i = 0; i < dim(); ++i) trips.emplace_back(i, i, nonlinearity_->derivative(u[i]));
  diag.setFromTriplets(trips.begin(), trips.end());
  return linear_ + diag;
}

PrimalOperator PrimalOperator::plus(const SpMat& extra, double extra_lo, double extra_hi) const {
  return PrimalOperator(SpMat(linear_ + extra), m_A_ + extra_lo, L_A_ + extra_hi, nonlinearity_,
                        inner_);
}

// ---------------------------------------------------------------------------
// CouplingForm, MultiplierSet

CouplingForm::CouplingForm(SpMat B, Vec weights, double M_b, double alpha_b)
    : B_(std::move(B)), w_(std::move(weights)), M_b_(M_b), alpha_b_(alpha_b) {
  if (w_.size() != B_.rows()) throw ArgumentError("coupling weights must have one entry per row");
  if (B_.rows() > 0 && !(w_.minCoeff() > 0.0)) throw ValidationError("coupling weights must be positive");
  if (!(alpha_b_ >= 0.0) || !(M_b_ >= alpha_b_)) {
    throw ValidationError("coupling constants need 0 <= alpha_b <= M_b");
  }
  B_.makeCompressed();
}

CouplingForm CouplingForm::empty(Index n) { return CouplingForm(SpMat(0, n), Vec(0), 0.0, 0.0); }

CouplingForm CouplingForm::measured(SpMat B, Vec weights, const InnerProduct& inner) {
  CouplingForm probe(B, weights, 0.0, 0.0);
  const CouplingSpectrum s = coupling_spectrum(probe, inner);
  return CouplingForm(std::move(B), std::move(weights), s.sigma_max, s.sigma_min);
}

Vec CouplingForm::transpose_pairing(const Vec& lambda) const {
  if (lambda.size() != rows()) throw ArgumentError("coupling: multiplier dimension mismatch");
  if (rows() == 0) return Vec::Zero(cols());
  return B_.transpose() * w_.cwiseProduct(lambda);
}

double CouplingForm::dual_norm(const Vec& mu) const {
  if (mu.size() != rows()) throw ArgumentError("coupling: multiplier dimension mismatch");
  return std::sqrt(w_.dot(mu.cwiseAbs2()));
}

MultiplierSet::MultiplierSet(Vec bounds) : bounds_(std::move(bounds)) {
  for (Index i = 0; i < bounds_.size(); ++i) {
    if (!(bounds_[i] >= 0.0)) throw ValidationError("multiplier bounds must be >= 0 so that 0 is in the set");
  }
}

MultiplierSet MultiplierSet::uniform(Index m, double bound) {
  return MultiplierSet(Vec::Constant(m, bound));
}

bool MultiplierSet::contains(const Vec& mu, double tol) const {
  if (mu.size() != dim()) return false;
  for (Index i = 0; i < dim(); ++i) {
    if (std::abs(mu[i]) > bounds_[i] + tol) return false;
  }
  return true;
}

MultiplierSet MultiplierSet::scaled(double factor) const {
  if (!(factor >= 0.0)) throw ArgumentError("multiplier set scale must be >= 0");
  return MultiplierSet(bounds_ * factor);
}

Vec project_multiplier(const Vec& mu, const MultiplierSet& set) {
  if (mu.size() != set.dim()) throw ArgumentError("project_multiplier: dimension mismatch");
  Vec out(mu.size());
  for (Index i = 0; i < mu.size(); ++i) {
    const double g = set.bounds()[i];
    out[i] = std::clamp(mu[i], -g, g);
  }
  return out;
}

void StaticMixedInstance::check_dimensions() const {
  const Index n = A.dim();
  const Index m = B.rows();
  if (eta.size() != n || rhs.size() != n || k.size() != n) {
    throw ArgumentError("static instance: vector sizes must match the primal dimension");
  }
  if (B.cols() != n) throw ArgumentError("static instance: coupling columns must match the primal dimension");
  if (Lambda.dim() != m) throw ArgumentError("static instance: multiplier set dimension must match coupling rows");
  if (!all_finite(eta) || !all_finite(rhs) || !all_finite(k)) {
    throw ValidationError("static instance: data must be finite");
  }
}

KktResiduals kkt_residuals(const StaticMixedInstance& inst, const Vec& u, const Vec& lambda) {
  KktResiduals out;
  out.equality =
      (inst.A.apply(u) + inst.eta + inst.B.transpose_pairing(lambda) - inst.rhs).norm();
  if (inst.B.rows() == 0) return out;
  const Vec r = inst.B.matrix() * (u - inst.k);
  const Vec& w = inst.B.weights();
  const Vec& g = inst.Lambda.bounds();
  for (Index i = 0; i < r.size(); ++i) {
    const double stepped = std::clamp(lambda[i] + w[i] * r[i], -g[i], g[i]);
    out.inequality = std::max(out.inequality, std::abs(lambda[i] - stepped));
    out.gap += w[i] * (g[i] * std::abs(r[i]) - lambda[i] * r[i]);
  }
  out.gap = std::max(0.0, out.gap);
  return out;
}

// ---------------------------------------------------------------------------
// PrimalSolver

struct PrimalSolver::Impl {
  Eigen::SimplicialLDLT<SpMat> ldlt;
};

PrimalSolver::PrimalSolver(PrimalOperator op, double tol, int max_newton)
    : op_(std::move(op)), tol_(tol), max_newton_(max_newton), impl_(std::make_unique<Impl>()) {
  if (op_.is_linear()) {
    impl_->ldlt.compute(op_.linear());
    if (impl_->ldlt.info() != Eigen::Success) {
      throw SolverError("primal factorization failed", std::numeric_limits<double>::infinity());
    }
    if (op_.dim() > 0 && !(impl_->ldlt.vectorD().minCoeff() > 0.0)) {
      throw SolverError("primal operator is not positive definite", std::numeric_limits<double>::infinity());
    }
  }
}

PrimalSolver::~PrimalSolver() = default;
PrimalSolver::PrimalSolver(PrimalSolver&&) noexcept = default;
PrimalSolver& PrimalSolver::operator=(PrimalSolver&&) noexcept = default;

Vec PrimalSolver::solve(const Vec& rhs) const {
  if (rhs.size() != op_.dim()) throw ArgumentError("primal solve: dimension mismatch");
  const double target = tol_ * (1.0 + rhs.norm());

  if (op_.is_linear()) {
    Vec u = impl_->ldlt.solve(rhs);
    double res = (op_.linear() * u - rhs).norm();
    // A few steps of iterative refinement recover digits lost to conditioning.
    for (int pass = 0; pass < 3 && res > target; ++pass) {
      u += impl_->ldlt.solve(rhs - op_.linear() * u);
      res = (op_.linear() * u - rhs).norm();
    }
    if (!std::isfinite(res) || res > std::sqrt(tol_) * (1.0 + rhs.norm())) {
      throw SolverError("primal direct solve lost accuracy", res);
    }
    return u;
  }

  Vec u = Vec::Zero(op_.dim());
  Vec residual = op_.apply(u) - rhs;
  double res = residual.norm();
  for (int it = 0; it < max_newton_; ++it) {
    if (res <= target) return u;
    Eigen::SimplicialLDLT<SpMat> jac(op_.jacobian(u));
    if (jac.info() != Eigen::Success) throw SolverError("Newton: Jacobian factorization failed", res);
    const Vec du = jac.solve(-residual);
    double step = 1.0;
    Vec trial = u + du;
    Vec trial_res = op_.apply(trial) - rhs;
    while (trial_res.norm() >= res && step > 1e-10) {
      step *= 0.5;
      trial = u + step * du;
      trial_res = op_.apply(trial) - rhs;
    }
    u = std::move(trial);
    residual = std::move(trial_res);
    res = residual.norm();
  }
  if (res <= target) return u;
  std::ostringstream msg;
  msg << "Newton did not converge in " << max_newton_ << " iterations (residual " << res << ")";
  throw SolverError(msg.str(), res);
}

Vec inner_solve_primal(const PrimalOperator& A, const Vec& rhs) {
  return PrimalSolver(A).solve(rhs);
}

// ---------------------------------------------------------------------------
// Coupling spectrum and Uzawa

CouplingSpectrum coupling_spectrum(const CouplingForm& B, const InnerProduct& inner) {
  CouplingSpectrum out;
  const Index m = B.rows();
  if (m == 0) return out;
  const Vec sqrt_w = B.weights().cwiseSqrt();
  // Columns of B^T W^{1/2}.
  const Mat bt = Mat(B.matrix().transpose()) * sqrt_w.asDiagonal();
  const Mat schur = bt.transpose() * inner.riesz(bt);
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (schur + schur.transpose()), Eigen::EigenvaluesOnly);
  const Vec ev = eig.eigenvalues().cwiseMax(0.0);
  out.sigma_min = std::sqrt(ev.minCoeff());
  out.sigma_max = std::sqrt(ev.maxCoeff());
  for (Index i = 0; i < ev.size(); ++i) {
    if (std::sqrt(ev[i]) > 1e-10 * out.sigma_max) ++out.rank;
  }
  return out;
}

UzawaSolver::UzawaSolver(PrimalOperator A, CouplingForm B, MultiplierSet Lambda, UzawaOptions opts)
    : solver_(std::move(A), opts.inner_tol),
      B_(std::move(B)),
      Lambda_(std::move(Lambda)),
      opts_(opts) {
  const PrimalOperator& op = solver_.op();
  if (B_.cols() != op.dim()) throw ArgumentError("uzawa: coupling columns must match the primal dimension");
  if (Lambda_.dim() != B_.rows()) throw ArgumentError("uzawa: multiplier set must match coupling rows");
  if (!(opts_.tol > 0.0)) throw ArgumentError("uzawa: tol must be positive");
  if (opts_.rho && !(*opts_.rho > 0.0)) throw ArgumentError("uzawa: rho must be positive");
  if (opts_.max_iter < 1) throw ArgumentError("uzawa: max_iter must be >= 1");
  if (B_.rows() > 0) {
    spectrum_ = coupling_spectrum(B_, op.inner());
    if (spectrum_.rank < B_.rows()) {
      throw ValidationError("uzawa: coupling matrix is rank deficient (inf-sup fails)");
    }
    rho0_ = op.m_A() / (spectrum_.sigma_max * spectrum_.sigma_max * B_.weights().maxCoeff());
  }
}

SaddleSolution UzawaSolver::solve(const Vec& eta, const Vec& rhs, const Vec& k,
                                  const Vec* warm_start) const {
  const Index n = A().dim();
  const Index m = B_.rows();
  if (eta.size() != n || rhs.size() != n || k.size() != n) {
    throw ArgumentError("uzawa: vector sizes must match the primal dimension");
  }
  if (!eta.allFinite() || !rhs.allFinite() || !k.allFinite()) {
    throw ValidationError("uzawa: data must be finite");
  }

  SaddleSolution out;
  const Vec base = rhs - eta;
  if (m == 0) {
    out.u = solver_.solve(base);
    out.lambda = Vec(0);
    out.equality_residual = (A().apply(out.u) + eta - rhs).norm();
    return out;
  }

  const Vec& w = B_.weights();
  const Vec lambda0 = warm_start && warm_start->size() == m ? project_multiplier(*warm_start, Lambda_)
                                                          : Vec(Vec::Zero(m));
  double rho = opts_.rho.value_or(rho0_);
  int halvings = 0;
  int growth = 0;
  double prev_inc = std::numeric_limits<double>::infinity();
  Vec lambda = lambda0;
  double inc = std::numeric_limits<double>::infinity();

  for (int it = 1; it <= opts_.max_iter; ++it) {
    Vec u = solver_.solve(base - B_.transpose_pairing(lambda));
    const Vec r = B_.matrix() * (u - k);
    const Vec next = project_multiplier(lambda + rho * w.cwiseProduct(r), Lambda_);
    inc = (next - lambda).norm();
    double natural = 0.0;
    for (Index i = 0; i < m; ++i) {
      const double g = Lambda_.bounds()[i];
      natural = std::max(natural, std::abs(lambda[i] - std::clamp(lambda[i] + w[i] * r[i], -g, g)));
    }
    const double scale = 1.0 + lambda.norm();
    if (inc <= opts_.tol * scale && natural <= opts_.tol * scale) {
      out.u = std::move(u);
      out.lambda = lambda;
      out.iterations = it;
      out.residual = inc;
      out.rho = rho;
      out.equality_residual = (A().apply(out.u) + eta + B_.transpose_pairing(lambda) - rhs).norm();
      out.inequality_residual = natural;
      return out;
    }
    growth = inc > prev_inc ? growth + 1 : 0;
    if (growth >= opts_.growth_window) {
      if (++halvings > opts_.max_halvings) {
        throw SolverError("uzawa: divergence persists after step halving", inc);
      }
      rho *= 0.5;
      lambda = lambda0;
      growth = 0;
      prev_inc = std::numeric_limits<double>::infinity();
      continue;
    }
    prev_inc = inc;
    lambda = next;
  }
  std::ostringstream msg;
  msg << "uzawa: no convergence after " << opts_.max_iter << " iterations (increment " << inc << ")";
  throw SolverError(msg.str(), inc);
}

SaddleSolution uzawa_solve(const StaticMixedInstance& inst, const UzawaOptions& opts) {
  inst.check_dimensions();
  const UzawaSolver solver(inst.A, inst.B, inst.Lambda, opts);
  return solver.solve(inst.eta, inst.rhs, inst.k);
}

// ---------------------------------------------------------------------------
// Constants

std::pair<double, double> generalized_eig_range(const SpMat& K, const InnerProduct& inner) {
  const Mat dk = Mat(K);
  if (dk.rows() == 0) return {0.0, 0.0};
  if (inner.is_euclidean()) {
    Eigen::SelfAdjointEigenSolver<Mat> eig(dk, Eigen::EigenvaluesOnly);
    return {eig.eigenvalues().minCoeff(), eig.eigenvalues().maxCoeff()};
  }
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> eig(dk, inner.dense(dk.rows()), Eigen::EigenvaluesOnly);
  return {eig.eigenvalues().minCoeff(), eig.eigenvalues().maxCoeff()};
}

ConstantsReport verify_constants(const PrimalOperator& A, const CouplingForm& B, int samples,
                                 std::uint64_t seed) {
  if (samples < 1) throw ArgumentError("verify_constants: samples must be >= 1");
  ConstantsReport rep;
  const InnerProduct& inner = A.inner();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index n = A.dim();

  rep.sampled_m = std::numeric_limits<double>::infinity();
  rep.sampled_L = 0.0;
  for (int s = 0; s < samples; ++s) {
    Vec u(n), v(n);
    for (Index i = 0; i < n; ++i) u[i] = normal(rng);
    for (Index i = 0; i < n; ++i) v[i] = normal(rng);
    const Vec d = u - v;
    const double dn = inner.norm(d);
    if (dn == 0.0) continue;
    const Vec diff = A.apply(u) - A.apply(v);
    rep.sampled_m = std::min(rep.sampled_m, diff.dot(d) / (dn * dn));
    rep.sampled_L = std::max(rep.sampled_L, inner.dual_norm(diff) / dn);
  }

  if (A.is_linear()) {
    const auto [lo, hi] = generalized_eig_range(A.linear(), inner);
    rep.eig_min = lo;
    rep.eig_max = hi;
    rep.m_hat = lo;
    rep.L_hat = hi;
  } else {
    rep.m_hat = rep.sampled_m;
    rep.L_hat = rep.sampled_L;
  }

  const CouplingSpectrum spec = coupling_spectrum(B, inner);
  rep.alpha_hat = spec.sigma_min;
  rep.M_hat = spec.sigma_max;

  constexpr double rel = 1e-10;
  auto flag = [&](const std::string& what, double declared, double observed) {
    std::ostringstream msg;
    msg << what << ": declared " << declared << ", observed " << observed;
    rep.violations.push_back(msg.str());
  };
  if (std::min(rep.sampled_m, rep.m_hat) < A.m_A() * (1.0 - rel)) {
    flag("m_A", A.m_A(), std::min(rep.sampled_m, rep.m_hat));
  }
  if (std::max(rep.sampled_L, rep.L_hat) > A.L_A() * (1.0 + rel)) {
    flag("L_A", A.L_A(), std::max(rep.sampled_L, rep.L_hat));
  }
  if (B.rows() > 0) {
    if (B.alpha_b() > rep.alpha_hat * (1.0 + rel)) flag("alpha_b", B.alpha_b(), rep.alpha_hat);
    if (B.M_b() < rep.M_hat * (1.0 - rel)) flag("M_b", B.M_b(), rep.M_hat);
  }
  return rep;
}

}  // namespace hdmix
