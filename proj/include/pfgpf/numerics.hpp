#pragma once

// Dense small-matrix kernels shared by the filters: jittered Cholesky,
// Gaussian log-densities, and (weighted) sample moments.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "pfgpf/errors.hpp"

namespace pfgpf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// N(mean, cov).
struct GaussianBelief {
  Vector mean;
  Matrix cov;

  [[nodiscard]] Eigen::Index dim() const { return mean.size(); }
};

/// Lower Cholesky factor together with the diagonal jitter that made it exist.
struct CholeskyResult {
  Matrix lower;
  double jitter = 0.0;
};

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

inline void require_square_symmetric(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) {
    throw DomainError(std::string(what) + ": matrix is not square");
  }
  if (m.size() == 0) return;
  const double scale = std::max(1.0, m.cwiseAbs().rowwise().sum().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
    throw DomainError(std::string(what) + ": matrix is not symmetric");
  }
}

/// Jitter scale used by the filters: 1e-9 of the mean diagonal entry, with an
/// absolute floor so that an all-zero covariance can still be factorized.
inline double default_base_jitter(const Matrix& m) {
  if (m.rows() == 0) return 1e-12;
  const double mean_diag = m.diagonal().cwiseAbs().mean();
  return std::max(1e-9 * mean_diag, 1e-12);
}

/// Factorizes m + jI for the smallest j in {0, base·10^k, k = 0..8} that works.
inline CholeskyResult cholesky_with_jitter(const Matrix& m, double base_jitter) {
  require_square_symmetric(m, "cholesky_with_jitter");
  if (!(base_jitter > 0.0) || !std::isfinite(base_jitter)) {
    throw DomainError("cholesky_with_jitter: base_jitter must be positive");
  }
  Eigen::LLT<Matrix> llt;
  double jitter = 0.0;
  for (int k = -1; k <= 8; ++k) {
    jitter = k < 0 ? 0.0 : base_jitter * std::pow(10.0, k);
    Matrix shifted = m;
    shifted.diagonal().array() += jitter;
    llt.compute(shifted);
    if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().allFinite()) {
      return {llt.matrixL(), jitter};
    }
  }
  throw NotPositiveDefinite("cholesky_with_jitter: jitter ladder exhausted");
}

inline CholeskyResult cholesky_with_jitter(const Matrix& m) {
  return cholesky_with_jitter(m, default_base_jitter(m));
}

/// A Gaussian prepared for repeated log-density evaluation.
class GaussianLogDensity {
 public:
  GaussianLogDensity(Vector mean, const Matrix& cov) : mean_(std::move(mean)) {
    if (cov.rows() != mean_.size()) {
      throw ShapeMismatch("GaussianLogDensity: mean/covariance dimension mismatch");
    }
    auto chol = cholesky_with_jitter(cov);
    lower_ = std::move(chol.lower);
    jitter_ = chol.jitter;
    const double log_det = 2.0 * lower_.diagonal().array().log().sum();
    log_norm_ = -0.5 * (static_cast<double>(mean_.size()) * std::log(2.0 * std::numbers::pi) + log_det);
  }

  [[nodiscard]] double operator()(const Eigen::Ref<const Vector>& x) const {
    if (x.size() != mean_.size()) throw ShapeMismatch("GaussianLogDensity: dimension mismatch");
    const Vector white = lower_.triangularView<Eigen::Lower>().solve(x - mean_);
    return log_norm_ - 0.5 * white.squaredNorm();
  }

  [[nodiscard]] double jitter() const { return jitter_; }
  [[nodiscard]] const Matrix& lower() const { return lower_; }

 private:
  Vector mean_;
  Matrix lower_;
  double jitter_ = 0.0;
  double log_norm_ = 0.0;
};

inline double log_gaussian_density(const Vector& x, const Vector& mean, const Matrix& cov) {
  if (x.size() != mean.size()) throw ShapeMismatch("log_gaussian_density: dimension mismatch");
  return GaussianLogDensity(mean, cov)(x);
}

/// Moments of column-stored particles under normalized weights. The
/// covariance uses divisor 1 (i.e. sum of weights), matching N_p for
/// uniform weights, and is symmetrized.
inline GaussianBelief weighted_mean_cov(const Matrix& states, const Vector& weights) {
  if (states.cols() == 0) throw EmptyParticleSet();
  if (weights.size() != states.cols()) {
    throw ShapeMismatch("weighted_mean_cov: one weight per particle required");
  }
  if (std::abs(weights.sum() - 1.0) > 1e-9) {
    throw DomainError("weighted_mean_cov: weights must sum to 1");
  }
  GaussianBelief out;
  out.mean = states * weights;
  const Matrix centered = states.colwise() - out.mean;
  out.cov = symmetrize(centered * weights.asDiagonal() * centered.transpose());
  return out;
}

/// Uniform-weight moments (divisor N_p).
inline GaussianBelief mean_cov(const Matrix& states) {
  if (states.cols() == 0) throw EmptyParticleSet();
  GaussianBelief out;
  out.mean = states.rowwise().mean();
  const Matrix centered = states.colwise() - out.mean;
  out.cov = symmetrize(centered * centered.transpose() / static_cast<double>(states.cols()));
  return out;
}

/// log|det(m)| via partial-pivot LU.
inline double log_abs_det(const Matrix& m) {
  Eigen::PartialPivLU<Matrix> lu(m);
  return lu.matrixLU().diagonal().cwiseAbs().array().log().sum();
}

}  // namespace pfgpf
