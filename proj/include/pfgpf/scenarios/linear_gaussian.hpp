#pragma once

// Linear-Gaussian models: x_t = F x_{t-1} + v, z_t = H x_t + w. Used as the
// closed-form reference against which every filter can be checked.

#include <numbers>

#include "pfgpf/models.hpp"

namespace pfgpf {

class LinearDynamics final : public DynamicModel {
 public:
  LinearDynamics(Matrix transition, Matrix process_cov)
      : f_(std::move(transition)), q_(std::move(process_cov)) {
    if (f_.rows() != f_.cols() || q_.rows() != f_.rows() || q_.cols() != f_.rows()) {
      throw ShapeMismatch("LinearDynamics: F and Q must be square and of equal size");
    }
    q_lower_ = cholesky_with_jitter(q_).lower;
  }

  [[nodiscard]] Eigen::Index state_dim() const override { return f_.rows(); }
  [[nodiscard]] Vector transition(const Vector& x) const override { return f_ * x; }
  [[nodiscard]] Vector sample_transition(const Vector& x, Rng& rng) const override {
    return f_ * x + q_lower_ * standard_normal(f_.rows(), rng);
  }
  [[nodiscard]] Matrix jacobian_at(const Vector&) const override { return f_; }
  [[nodiscard]] Matrix process_cov() const override { return q_; }
  [[nodiscard]] bool has_transition_density() const override { return true; }
  [[nodiscard]] double log_transition_density(const Vector& x, const Vector& prev) const override {
    return log_gaussian_density(x, f_ * prev, q_);
  }

  [[nodiscard]] const Matrix& matrix() const { return f_; }

 private:
  Matrix f_;
  Matrix q_;
  Matrix q_lower_;
};

class LinearMeasurement final : public MeasurementModel {
 public:
  LinearMeasurement(Matrix observation, Matrix noise_cov, Vector offset = {})
      : h_(std::move(observation)), r_(std::move(noise_cov)), offset_(std::move(offset)) {
    if (offset_.size() == 0) offset_ = Vector::Zero(h_.rows());
    if (r_.rows() != h_.rows() || r_.cols() != h_.rows() || offset_.size() != h_.rows()) {
      throw ShapeMismatch("LinearMeasurement: H, R and offset disagree");
    }
    r_lower_ = cholesky_with_jitter(r_).lower;
  }

  [[nodiscard]] Eigen::Index obs_dim() const override { return h_.rows(); }
  [[nodiscard]] Eigen::Index state_dim() const override { return h_.cols(); }
  [[nodiscard]] Vector mean_measurement(const Vector& x) const override { return h_ * x + offset_; }
  [[nodiscard]] Vector sample_measurement(const Vector& x, Rng& rng) const override {
    return mean_measurement(x) + r_lower_ * standard_normal(h_.rows(), rng);
  }
  [[nodiscard]] Matrix jacobian_at(const Vector&) const override { return h_; }
  [[nodiscard]] Matrix noise_cov_at(const Vector&) const override { return r_; }
  [[nodiscard]] double log_likelihood(const Vector& z, const Vector& x) const override {
    return log_gaussian_density(z, mean_measurement(x), r_);
  }

 private:
  Matrix h_;
  Matrix r_;
  Vector offset_;
  Matrix r_lower_;
};

}  // namespace pfgpf
