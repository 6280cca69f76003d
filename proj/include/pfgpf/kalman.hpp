#pragma once

// EKF/UKF moment propagation. The flow filters only need the predicted
// covariance from this track, but the full (m, P) pair is maintained.

#include <cmath>
#include <optional>

#include "pfgpf/models.hpp"
#include "pfgpf/numerics.hpp"

namespace pfgpf {

struct UkfParams {
  double alpha = 1.0;
  double beta = 2.0;
  /// Defaults to 3 - n when unset.
  std::optional<double> kappa;
};

enum class KalmanEngine { kEkf, kUkf };

namespace detail {

// Solves X S = B for X with S symmetric positive definite (jittered).
inline Matrix right_solve_spd(const Matrix& b, const Matrix& s) {
  const CholeskyResult chol = cholesky_with_jitter(symmetrize(s));
  const auto lower = chol.lower.triangularView<Eigen::Lower>();
  Matrix xt = lower.solve(b.transpose());
  lower.transpose().solveInPlace(xt);
  return xt.transpose();
}

struct SigmaPoints {
  Matrix points;  // n x (2n+1)
  Vector mean_weights;
  Vector cov_weights;
};

inline SigmaPoints sigma_points(const GaussianBelief& b, const UkfParams& p) {
  const auto n = b.dim();
  const double dn = static_cast<double>(n);
  const double kappa = p.kappa.value_or(3.0 - dn);
  if (!(p.alpha > 0.0 && p.alpha <= 1.0)) throw DomainError("UKF alpha must lie in (0, 1]");
  const double scale = p.alpha * p.alpha * (dn + kappa);
  if (!(scale > 0.0)) throw DomainError("UKF scaling n + lambda must be positive");
  const double lambda = scale - dn;

  const Matrix spread = std::sqrt(scale) * cholesky_with_jitter(b.cov).lower;
  SigmaPoints sp;
  sp.points.resize(n, 2 * n + 1);
  sp.points.col(0) = b.mean;
  for (Eigen::Index i = 0; i < n; ++i) {
    sp.points.col(1 + i) = b.mean + spread.col(i);
    sp.points.col(1 + n + i) = b.mean - spread.col(i);
  }
  sp.mean_weights = Vector::Constant(2 * n + 1, 0.5 / scale);
  sp.cov_weights = sp.mean_weights;
  sp.mean_weights(0) = lambda / scale;
  sp.cov_weights(0) = lambda / scale + (1.0 - p.alpha * p.alpha + p.beta);
  return sp;
}

}  // namespace detail

inline GaussianBelief ekf_predict(const GaussianBelief& b, const DynamicModel& dm) {
  if (b.dim() != dm.state_dim()) throw ShapeMismatch("ekf_predict: dimension mismatch");
  const Matrix g = dm.jacobian_at(b.mean);
  return {dm.transition(b.mean), symmetrize(g * b.cov * g.transpose() + dm.process_cov())};
}

/// EKF update linearized at the prior mean; Joseph-form covariance.
inline GaussianBelief ekf_update(const GaussianBelief& b, const Vector& z, const MeasurementModel& mm) {
  if (b.dim() != mm.state_dim() || z.size() != mm.obs_dim()) {
    throw ShapeMismatch("ekf_update: dimension mismatch");
  }
  const Matrix h = mm.jacobian_at(b.mean);
  const Matrix r = mm.noise_cov_at(b.mean);
  const Matrix pht = b.cov * h.transpose();
  const Matrix s = h * pht + r;
  const Matrix gain = detail::right_solve_spd(pht, s);
  const Matrix i_kh = Matrix::Identity(b.dim(), b.dim()) - gain * h;
  GaussianBelief out;
  out.mean = b.mean + gain * (z - mm.mean_measurement(b.mean));
  out.cov = symmetrize(i_kh * b.cov * i_kh.transpose() + gain * r * gain.transpose());
  return out;
}

inline GaussianBelief ukf_predict(const GaussianBelief& b, const DynamicModel& dm, const UkfParams& p = {}) {
  if (b.dim() != dm.state_dim()) throw ShapeMismatch("ukf_predict: dimension mismatch");
  const detail::SigmaPoints sp = detail::sigma_points(b, p);
  Matrix moved(b.dim(), sp.points.cols());
  for (Eigen::Index i = 0; i < sp.points.cols(); ++i) moved.col(i) = dm.transition(sp.points.col(i));
  GaussianBelief out;
  out.mean = moved * sp.mean_weights;
  const Matrix centered = moved.colwise() - out.mean;
  out.cov = symmetrize(centered * sp.cov_weights.asDiagonal() * centered.transpose() + dm.process_cov());
  return out;
}

inline GaussianBelief ukf_update(const GaussianBelief& b, const Vector& z, const MeasurementModel& mm,
                                 const UkfParams& p = {}) {
  if (b.dim() != mm.state_dim() || z.size() != mm.obs_dim()) {
    throw ShapeMismatch("ukf_update: dimension mismatch");
  }
  const detail::SigmaPoints sp = detail::sigma_points(b, p);
  Matrix predicted(mm.obs_dim(), sp.points.cols());
  for (Eigen::Index i = 0; i < sp.points.cols(); ++i) predicted.col(i) = mm.mean_measurement(sp.points.col(i));
  const Vector z_mean = predicted * sp.mean_weights;
  const Matrix dz = predicted.colwise() - z_mean;
  const Matrix dx = sp.points.colwise() - b.mean;
  const Matrix s = symmetrize(dz * sp.cov_weights.asDiagonal() * dz.transpose() + mm.noise_cov_at(b.mean));
  const Matrix cross = dx * sp.cov_weights.asDiagonal() * dz.transpose();
  const Matrix gain = detail::right_solve_spd(cross, s);
  GaussianBelief out;
  out.mean = b.mean + gain * (z - z_mean);
  out.cov = symmetrize(b.cov - gain * s * gain.transpose());
  return out;
}

/// Engine-dispatching wrappers used by the filter drivers.
struct KalmanTrack {
  KalmanEngine engine = KalmanEngine::kEkf;
  UkfParams ukf;

  [[nodiscard]] GaussianBelief predict(const GaussianBelief& b, const DynamicModel& dm) const {
    return engine == KalmanEngine::kEkf ? ekf_predict(b, dm) : ukf_predict(b, dm, ukf);
  }
  [[nodiscard]] GaussianBelief update(const GaussianBelief& b, const Vector& z, const MeasurementModel& mm) const {
    return engine == KalmanEngine::kEkf ? ekf_update(b, z, mm) : ukf_update(b, z, mm, ukf);
  }
};

}  // namespace pfgpf
