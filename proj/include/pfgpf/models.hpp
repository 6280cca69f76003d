#pragma once

// Behavioral contracts for state-space models: x_t = g(x_{t-1}, v_t),
// z_t = h(x_t, w_t). Implementations are immutable after construction and
// never store an rng.

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>

#include "pfgpf/errors.hpp"
#include "pfgpf/numerics.hpp"
#include "pfgpf/random.hpp"

namespace pfgpf {

class DynamicModel {
 public:
  virtual ~DynamicModel() = default;

  [[nodiscard]] virtual Eigen::Index state_dim() const = 0;
  /// g(x, 0).
  [[nodiscard]] virtual Vector transition(const Vector& x) const = 0;
  /// g(x, v) with v drawn from the filter-side process noise.
  [[nodiscard]] virtual Vector sample_transition(const Vector& x, Rng& rng) const = 0;
  /// dg/dx evaluated at x.
  [[nodiscard]] virtual Matrix jacobian_at(const Vector& x) const = 0;
  /// Additive process covariance used by the Kalman track.
  [[nodiscard]] virtual Matrix process_cov() const = 0;

  [[nodiscard]] virtual bool has_transition_density() const { return false; }
  /// log p(x | prev). Only valid when has_transition_density().
  [[nodiscard]] virtual double log_transition_density(const Vector& /*x*/, const Vector& /*prev*/) const {
    throw MissingCapability("dynamic model does not provide a transition density");
  }

  [[nodiscard]] Vector propagate(const Vector& x, Rng& rng, bool with_noise) const {
    return with_noise ? sample_transition(x, rng) : transition(x);
  }
};

class MeasurementModel {
 public:
  virtual ~MeasurementModel() = default;

  [[nodiscard]] virtual Eigen::Index obs_dim() const = 0;
  [[nodiscard]] virtual Eigen::Index state_dim() const = 0;
  /// h(x, 0).
  [[nodiscard]] virtual Vector mean_measurement(const Vector& x) const = 0;
  /// h(x, w) with w drawn from the measurement noise.
  [[nodiscard]] virtual Vector sample_measurement(const Vector& x, Rng& rng) const = 0;
  /// H = dh(x, 0)/dx.
  [[nodiscard]] virtual Matrix jacobian_at(const Vector& x) const = 0;
  /// R, possibly state dependent.
  [[nodiscard]] virtual Matrix noise_cov_at(const Vector& x) const = 0;
  [[nodiscard]] virtual double log_likelihood(const Vector& z, const Vector& x) const = 0;

  [[nodiscard]] Vector measure(const Vector& x, Rng& rng, bool with_noise) const {
    return with_noise ? sample_measurement(x, rng) : mean_measurement(x);
  }
};

/// The pair of models a filter runs against.
struct ScenarioModel {
  std::shared_ptr<const DynamicModel> dynamics;
  std::shared_ptr<const MeasurementModel> measurement;

  [[nodiscard]] Eigen::Index state_dim() const { return dynamics->state_dim(); }
};

/// Column-stored particles with optional log-weights (absent means uniform).
struct ParticleSet {
  Matrix states;
  std::optional<Vector> log_weights;

  [[nodiscard]] Eigen::Index size() const { return states.cols(); }
  [[nodiscard]] Eigen::Index dim() const { return states.rows(); }
};

/// Max-shifted exponentiation followed by division by the sum. Non-finite
/// entries other than +inf receive zero weight.
inline Vector normalize_log_weights(const Vector& log_weights) {
  double max_lw = -std::numeric_limits<double>::infinity();
  for (double lw : log_weights) {
    if (!std::isnan(lw) && lw > max_lw) max_lw = lw;
  }
  if (!std::isfinite(max_lw)) throw AllWeightsDegenerate();
  Vector w(log_weights.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double lw = log_weights(i);
    w(i) = std::isnan(lw) ? 0.0 : std::exp(lw - max_lw);
  }
  return w / w.sum();
}

inline Vector normalized_weights(const ParticleSet& ps) {
  if (!ps.log_weights) return Vector::Constant(ps.size(), 1.0 / static_cast<double>(ps.size()));
  return normalize_log_weights(*ps.log_weights);
}

}  // namespace pfgpf
