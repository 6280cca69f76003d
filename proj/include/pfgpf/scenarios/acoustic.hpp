#pragma once

// Multi-target acoustic tracking: M targets with constant-velocity dynamics
// in a square region, observed by a grid of sensors that record the
// superposition of the sound amplitudes psi / (distance + d0).

#include <cmath>
#include <memory>
#include <numbers>
#include <vector>

#include "pfgpf/errors.hpp"
#include "pfgpf/models.hpp"

namespace pfgpf {

struct AcousticConfig {
  int n_targets = 4;
  double region_size = 40.0;
  /// Sensor coordinates, one row per sensor.
  Eigen::MatrixX2d sensors = default_sensor_grid();
  double amplitude = 10.0;
  double distance_offset = 0.1;
  double measurement_variance = 0.01;
  /// Per-target process covariance of the simulated truth (V).
  Matrix truth_process_cov = default_truth_process_cov();
  /// Per-target process covariance assumed by the filters (Q).
  Matrix filter_process_cov = default_filter_process_cov();
  Vector true_initial_state = default_initial_state();
  double prior_position_std = 10.0;
  double prior_velocity_std = 1.0;
  /// Regenerate truth trajectories that leave the region.
  bool keep_targets_in_region = true;

  static Eigen::MatrixX2d default_sensor_grid() {
    Eigen::MatrixX2d s(25, 2);
    const double coords[5] = {4.0, 12.0, 20.0, 28.0, 36.0};
    int row = 0;
    for (double y : coords) {
      for (double x : coords) {
        s(row, 0) = x;
        s(row, 1) = y;
        ++row;
      }
    }
    return s;
  }

  static Matrix default_truth_process_cov() {
    Matrix v(4, 4);
    v << 1.0 / 3.0, 0.0, 0.5, 0.0,
         0.0, 1.0 / 3.0, 0.0, 0.5,
         0.5, 0.0, 1.0, 0.0,
         0.0, 0.5, 0.0, 1.0;
    return v / 20.0;
  }

  static Matrix default_filter_process_cov() {
    Matrix q(4, 4);
    q << 3.0, 0.0, 0.1, 0.0,
         0.0, 3.0, 0.0, 0.1,
         0.1, 0.0, 0.03, 0.0,
         0.0, 0.1, 0.0, 0.03;
    return q;
  }

  static Vector default_initial_state() {
    Vector x(16);
    x << 12.0, 6.0, 0.001, 0.001,
         32.0, 32.0, -0.001, -0.005,
         20.0, 13.0, -0.1, 0.01,
         15.0, 35.0, 0.002, 0.002;
    return x;
  }

  [[nodiscard]] Eigen::Index state_dim() const { return 4 * n_targets; }
  [[nodiscard]] Eigen::Index n_sensors() const { return sensors.rows(); }
};

/// Constant-velocity transition matrix of a single [x, y, vx, vy] target.
inline Matrix constant_velocity_matrix() {
  Matrix f = Matrix::Identity(4, 4);
  f(0, 2) = 1.0;
  f(1, 3) = 1.0;
  return f;
}

/// Block-diagonal constant-velocity dynamics with Gaussian noise whose
/// per-target covariance is either V (truth) or Q (filters).
class AcousticDynamics final : public DynamicModel {
 public:
  AcousticDynamics(int n_targets, Matrix per_target_cov)
      : n_targets_(n_targets), per_target_cov_(std::move(per_target_cov)) {
    if (n_targets_ < 1 || per_target_cov_.rows() != 4 || per_target_cov_.cols() != 4) {
      throw ShapeMismatch("AcousticDynamics: expects 4x4 per-target covariance");
    }
    const Eigen::Index n = state_dim();
    f_ = Matrix::Zero(n, n);
    cov_ = Matrix::Zero(n, n);
    const Matrix block = constant_velocity_matrix();
    for (int m = 0; m < n_targets_; ++m) {
      f_.block(4 * m, 4 * m, 4, 4) = block;
      cov_.block(4 * m, 4 * m, 4, 4) = per_target_cov_;
    }
    // A zero covariance gives deterministic motion and no density.
    if (per_target_cov_.isZero(0.0)) {
      block_lower_ = Matrix::Zero(4, 4);
    } else {
      block_lower_ = cholesky_with_jitter(per_target_cov_).lower;
      density_ = std::make_unique<GaussianLogDensity>(Vector::Zero(n), cov_);
    }
  }

  [[nodiscard]] Eigen::Index state_dim() const override { return 4 * n_targets_; }
  [[nodiscard]] Vector transition(const Vector& x) const override { return f_ * x; }
  [[nodiscard]] Vector sample_transition(const Vector& x, Rng& rng) const override {
    Vector out = f_ * x;
    for (int m = 0; m < n_targets_; ++m) out.segment<4>(4 * m) += block_lower_ * standard_normal(4, rng);
    return out;
  }
  [[nodiscard]] Matrix jacobian_at(const Vector&) const override { return f_; }
  [[nodiscard]] Matrix process_cov() const override { return cov_; }
  [[nodiscard]] bool has_transition_density() const override { return density_ != nullptr; }
  [[nodiscard]] double log_transition_density(const Vector& x, const Vector& prev) const override {
    if (!density_) throw MissingCapability("AcousticDynamics: zero process covariance has no density");
    return (*density_)(x - f_ * prev);
  }

 private:
  int n_targets_;
  Matrix per_target_cov_;
  Matrix f_;
  Matrix cov_;
  Matrix block_lower_;
  std::shared_ptr<const GaussianLogDensity> density_;
};

/// z_s = sum_m psi / (|p_m - r_s| + d0) + N(0, sigma_w^2).
class AcousticMeasurement final : public MeasurementModel {
 public:
  explicit AcousticMeasurement(const AcousticConfig& cfg)
      : n_targets_(cfg.n_targets),
        sensors_(cfg.sensors),
        amplitude_(cfg.amplitude),
        offset_(cfg.distance_offset),
        variance_(cfg.measurement_variance) {
    if (!(variance_ >= 0.0)) throw DomainError("AcousticMeasurement: variance must be non-negative");
  }

  [[nodiscard]] Eigen::Index obs_dim() const override { return sensors_.rows(); }
  [[nodiscard]] Eigen::Index state_dim() const override { return 4 * n_targets_; }

  [[nodiscard]] Vector mean_measurement(const Vector& x) const override {
    Vector z = Vector::Zero(obs_dim());
    for (Eigen::Index s = 0; s < obs_dim(); ++s) {
      for (int m = 0; m < n_targets_; ++m) {
        const double dx = x(4 * m) - sensors_(s, 0);
        const double dy = x(4 * m + 1) - sensors_(s, 1);
        z(s) += amplitude_ / (std::hypot(dx, dy) + offset_);
      }
    }
    return z;
  }

  [[nodiscard]] Vector sample_measurement(const Vector& x, Rng& rng) const override {
    return mean_measurement(x) + std::sqrt(variance_) * standard_normal(obs_dim(), rng);
  }

  /// Velocity columns are zero. At zero distance the gradient is taken as 0.
  [[nodiscard]] Matrix jacobian_at(const Vector& x) const override {
    Matrix h = Matrix::Zero(obs_dim(), state_dim());
    for (Eigen::Index s = 0; s < obs_dim(); ++s) {
      for (int m = 0; m < n_targets_; ++m) {
        const double dx = x(4 * m) - sensors_(s, 0);
        const double dy = x(4 * m + 1) - sensors_(s, 1);
        const double dist = std::hypot(dx, dy);
        if (dist == 0.0) continue;
        const double denom = dist + offset_;
        const double scale = -amplitude_ / (dist * denom * denom);
        h(s, 4 * m) = scale * dx;
        h(s, 4 * m + 1) = scale * dy;
      }
    }
    return h;
  }

  [[nodiscard]] Matrix noise_cov_at(const Vector&) const override {
    return variance_ * Matrix::Identity(obs_dim(), obs_dim());
  }

  [[nodiscard]] double log_likelihood(const Vector& z, const Vector& x) const override {
    if (variance_ == 0.0) throw DomainError("AcousticMeasurement: likelihood needs a positive variance");
    const double n = static_cast<double>(obs_dim());
    return -0.5 * (z - mean_measurement(x)).squaredNorm() / variance_ -
           0.5 * n * std::log(2.0 * std::numbers::pi * variance_);
  }

 private:
  int n_targets_;
  Eigen::MatrixX2d sensors_;
  double amplitude_;
  double offset_;
  double variance_;
};

/// Filter-side model pair: dynamics with Q, measurement with R = sigma_w^2 I.
inline ScenarioModel make_acoustic_filter_model(const AcousticConfig& cfg) {
  return {std::make_shared<AcousticDynamics>(cfg.n_targets, cfg.filter_process_cov),
          std::make_shared<AcousticMeasurement>(cfg)};
}

/// Truth dynamics with V.
inline std::shared_ptr<const DynamicModel> make_acoustic_truth_dynamics(const AcousticConfig& cfg) {
  return std::make_shared<AcousticDynamics>(cfg.n_targets, cfg.truth_process_cov);
}

/// Prior covariance: per target diag(std_pos^2, std_pos^2, std_vel^2, std_vel^2).
inline Matrix acoustic_prior_cov(const AcousticConfig& cfg) {
  Vector diag(cfg.state_dim());
  for (int m = 0; m < cfg.n_targets; ++m) {
    diag.segment<4>(4 * m) << cfg.prior_position_std * cfg.prior_position_std,
        cfg.prior_position_std * cfg.prior_position_std, cfg.prior_velocity_std * cfg.prior_velocity_std,
        cfg.prior_velocity_std * cfg.prior_velocity_std;
  }
  return diag.asDiagonal();
}

/// Prior for one rerun: mean drawn around the true initial state with the
/// prior standard deviations, covariance from acoustic_prior_cov.
inline GaussianBelief draw_acoustic_prior(const AcousticConfig& cfg, Rng& rng) {
  const Matrix cov = acoustic_prior_cov(cfg);
  const Vector std_dev = cov.diagonal().cwiseSqrt();
  GaussianBelief prior;
  prior.mean = cfg.true_initial_state + std_dev.cwiseProduct(standard_normal(cfg.state_dim(), rng));
  prior.cov = cov;
  return prior;
}

inline bool targets_in_region(const AcousticConfig& cfg, const Vector& x) {
  for (int m = 0; m < cfg.n_targets; ++m) {
    const double px = x(4 * m);
    const double py = x(4 * m + 1);
    if (px < 0.0 || px > cfg.region_size || py < 0.0 || py > cfg.region_size) return false;
  }
  return true;
}

}  // namespace pfgpf
