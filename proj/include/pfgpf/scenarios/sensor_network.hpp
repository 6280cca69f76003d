#pragma once

// Large spatial sensor network: a d-dimensional latent field on a sqrt(d) x
// sqrt(d) grid evolves under a generalized hyperbolic (GH) skewed-t
// transition and is observed through independent Poisson counts with rate
// m1 exp(m2 x).

#include <cmath>
#include <memory>
#include <numbers>
#include <random>

#include "pfgpf/bessel.hpp"
#include "pfgpf/errors.hpp"
#include "pfgpf/models.hpp"

namespace pfgpf {

struct SensorNetConfig {
  int dim = 144;
  double alpha0 = 3.0;
  double alpha1 = 0.01;
  double beta = 20.0;
  /// AR coefficient in mu_t = ar_coeff * x_{t-1}.
  double ar_coeff = 0.9;
  /// Skewness vector gamma; a single entry is broadcast to all dimensions.
  Vector gamma = Vector::Constant(1, 0.3);
  double nu = 7.0;
  double m1 = 1.0;
  double m2 = 1.0 / 3.0;
  /// Prior variance of the (known, zero) initial state used by the filters.
  double prior_variance = 0.01;

  [[nodiscard]] int grid_side() const { return static_cast<int>(std::lround(std::sqrt(static_cast<double>(dim)))); }

  [[nodiscard]] Vector gamma_vector() const {
    if (gamma.size() == 1) return Vector::Constant(dim, gamma(0));
    if (gamma.size() != dim) throw ShapeMismatch("SensorNetConfig: gamma length must be 1 or dim");
    return gamma;
  }

  void validate() const {
    const int side = grid_side();
    if (dim < 1 || side * side != dim) throw ConfigError("sensor network dim must be a perfect square");
    if (!(nu > 4.0)) throw ConfigError("sensor network nu must exceed 4 for a finite covariance");
    if (!(alpha1 > 0.0) || !(beta > 0.0)) throw ConfigError("sensor network alpha1 and beta must be positive");
    if (gamma.size() != 1 && gamma.size() != dim) throw ConfigError("sensor network gamma must have 1 or dim entries");
  }
};

/// Sigma_ij = alpha0 exp(-|R_i - R_j|^2 / beta) + alpha1 delta_ij on the grid
/// {1..sqrt(d)}^2, sensors ordered row-major.
inline Matrix sensornet_sigma(const SensorNetConfig& cfg) {
  const int side = cfg.grid_side();
  Matrix sigma(cfg.dim, cfg.dim);
  for (int i = 0; i < cfg.dim; ++i) {
    for (int j = 0; j < cfg.dim; ++j) {
      const double dr = static_cast<double>(i / side - j / side);
      const double dc = static_cast<double>(i % side - j % side);
      sigma(i, j) = cfg.alpha0 * std::exp(-(dr * dr + dc * dc) / cfg.beta) + (i == j ? cfg.alpha1 : 0.0);
    }
  }
  return sigma;
}

/// Covariance of the GH skewed-t transition:
///   nu/(nu-2) Sigma + nu^2 / ((2 nu - 8)(nu/2 - 1)^2) gamma gammaᵀ.
inline Matrix gh_covariance(const Matrix& sigma, const Vector& gamma, double nu) {
  const double half = nu / 2.0 - 1.0;
  return nu / (nu - 2.0) * sigma + nu * nu / ((2.0 * nu - 8.0) * half * half) * gamma * gamma.transpose();
}

/// The GH skewed-t transition x_t | x_{t-1} with cached factorization of Sigma.
///
/// Sampling uses the normal variance-mean mixture
///   x = mu + gamma W + sqrt(W) L xi,  W ~ InvGamma(nu/2, nu/2),  L Lᵀ = Sigma,
/// whose density is
///   c K_{(nu+d)/2}(sqrt((nu+Q) g)) exp((x-mu)ᵀ Sigma⁻¹ gamma)
///     / [ sqrt((nu+Q) g)^{-(nu+d)/2} (1 + Q/nu)^{(nu+d)/2} ],
///   c = 2^{1-(nu+d)/2} / (Gamma(nu/2) (pi nu)^{d/2} |Sigma|^{1/2}),
/// with Q = (x-mu)ᵀ Sigma⁻¹ (x-mu) and g = gammaᵀ Sigma⁻¹ gamma. For gamma = 0
/// the multivariate Student-t density is used.
class GhSkewedT {
 public:
  GhSkewedT(Matrix sigma, Vector gamma, double nu) : sigma_(std::move(sigma)), gamma_(std::move(gamma)), nu_(nu) {
    if (!(nu_ > 0.0)) throw DomainError("GhSkewedT: nu must be positive");
    if (gamma_.size() != sigma_.rows()) throw ShapeMismatch("GhSkewedT: gamma/Sigma dimension mismatch");
    const CholeskyResult chol = cholesky_with_jitter(sigma_);
    lower_ = chol.lower;
    sigma_inv_gamma_ = solve(gamma_);
    gamma_quad_ = gamma_.dot(sigma_inv_gamma_);
    const double d = static_cast<double>(dim());
    const double log_det = 2.0 * lower_.diagonal().array().log().sum();
    const double half_order = (nu_ + d) / 2.0;
    if (gamma_quad_ > 0.0) {
      log_norm_ = (1.0 - half_order) * std::log(2.0) - std::lgamma(nu_ / 2.0) -
                  0.5 * d * std::log(std::numbers::pi * nu_) - 0.5 * log_det;
    } else {
      log_norm_ = std::lgamma(half_order) - std::lgamma(nu_ / 2.0) - 0.5 * d * std::log(std::numbers::pi * nu_) -
                  0.5 * log_det;
    }
  }

  [[nodiscard]] Eigen::Index dim() const { return sigma_.rows(); }
  [[nodiscard]] const Matrix& sigma() const { return sigma_; }
  [[nodiscard]] const Vector& gamma() const { return gamma_; }
  [[nodiscard]] double nu() const { return nu_; }

  [[nodiscard]] Vector sample(const Vector& location, Rng& rng) const {
    std::gamma_distribution<double> mixing(nu_ / 2.0, 2.0 / nu_);
    const double w = 1.0 / mixing(rng);
    return location + w * gamma_ + std::sqrt(w) * (lower_ * standard_normal(dim(), rng));
  }

  [[nodiscard]] double log_density(const Vector& x, const Vector& location) const {
    const Vector delta = x - location;
    const Vector white = lower_.triangularView<Eigen::Lower>().solve(delta);
    const double q = white.squaredNorm();
    const double d = static_cast<double>(dim());
    const double half_order = (nu_ + d) / 2.0;
    if (gamma_quad_ <= 0.0) return log_norm_ - half_order * std::log1p(q / nu_);
    const double arg = std::sqrt((nu_ + q) * gamma_quad_);
    return log_norm_ + log_bessel_k(half_order, arg) + delta.dot(sigma_inv_gamma_) + half_order * std::log(arg) -
           half_order * std::log1p(q / nu_);
  }

 private:
  Vector solve(const Vector& v) const {
    const auto l = lower_.triangularView<Eigen::Lower>();
    Vector out = l.solve(v);
    l.transpose().solveInPlace(out);
    return out;
  }

  Matrix sigma_;
  Vector gamma_;
  double nu_;
  Matrix lower_;
  Vector sigma_inv_gamma_;
  double gamma_quad_ = 0.0;
  double log_norm_ = 0.0;
};

inline GhSkewedT make_gh_transition(const SensorNetConfig& cfg) {
  return GhSkewedT(sensornet_sigma(cfg), cfg.gamma_vector(), cfg.nu);
}

inline Vector gh_sample(const Vector& x_prev, const SensorNetConfig& cfg, Rng& rng) {
  return make_gh_transition(cfg).sample(cfg.ar_coeff * x_prev, rng);
}

inline double gh_log_density(const Vector& x_t, const Vector& x_prev, const SensorNetConfig& cfg) {
  return make_gh_transition(cfg).log_density(x_t, cfg.ar_coeff * x_prev);
}

class SensorNetDynamics final : public DynamicModel {
 public:
  explicit SensorNetDynamics(const SensorNetConfig& cfg)
      : ar_coeff_(cfg.ar_coeff), gh_(make_gh_transition(cfg)) {
    cov_ = gh_covariance(gh_.sigma(), gh_.gamma(), gh_.nu());
  }

  [[nodiscard]] Eigen::Index state_dim() const override { return gh_.dim(); }
  /// g(x, 0) = ar_coeff x.
  [[nodiscard]] Vector transition(const Vector& x) const override { return ar_coeff_ * x; }
  [[nodiscard]] Vector sample_transition(const Vector& x, Rng& rng) const override {
    return gh_.sample(ar_coeff_ * x, rng);
  }
  [[nodiscard]] Matrix jacobian_at(const Vector&) const override {
    return ar_coeff_ * Matrix::Identity(state_dim(), state_dim());
  }
  [[nodiscard]] Matrix process_cov() const override { return cov_; }
  [[nodiscard]] bool has_transition_density() const override { return true; }
  [[nodiscard]] double log_transition_density(const Vector& x, const Vector& prev) const override {
    return gh_.log_density(x, ar_coeff_ * prev);
  }

 private:
  double ar_coeff_;
  GhSkewedT gh_;
  Matrix cov_;
};

/// Largest exponent m2 x accepted before the Poisson rate is declared overflowed.
inline constexpr double kMaxRateExponent = 700.0;

inline Vector poisson_rates(const Vector& x, double m1, double m2) {
  Vector rates(x.size());
  for (Eigen::Index c = 0; c < x.size(); ++c) {
    const double exponent = m2 * x(c);
    if (exponent > kMaxRateExponent) throw RateOverflow("Poisson rate exponent exceeds 700");
    rates(c) = m1 * std::exp(exponent);
  }
  return rates;
}

struct PoissonGaussianApprox {
  Matrix h;
  Matrix r;
};

/// Moment-matched Gaussian surrogate of the Poisson likelihood at x:
/// H = diag(m2 lambda(x)), R = diag(max(lambda(x), 1e-6)).
inline PoissonGaussianApprox poisson_gaussian_approx(const Vector& x, const SensorNetConfig& cfg) {
  const Vector rates = poisson_rates(x, cfg.m1, cfg.m2);
  PoissonGaussianApprox out;
  out.h = (cfg.m2 * rates).asDiagonal();
  out.r = rates.cwiseMax(1e-6).asDiagonal();
  return out;
}

inline double poisson_log_likelihood(const Vector& z, const Vector& x, const SensorNetConfig& cfg) {
  if (z.size() != x.size()) throw ShapeMismatch("poisson_log_likelihood: dimension mismatch");
  const double log_m1 = std::log(cfg.m1);
  double total = 0.0;
  for (Eigen::Index c = 0; c < x.size(); ++c) {
    const double log_rate = log_m1 + cfg.m2 * x(c);
    total += z(c) * log_rate - std::exp(log_rate) - std::lgamma(z(c) + 1.0);
  }
  return total;
}

class PoissonMeasurement final : public MeasurementModel {
 public:
  explicit PoissonMeasurement(const SensorNetConfig& cfg) : cfg_(cfg) {}

  [[nodiscard]] Eigen::Index obs_dim() const override { return cfg_.dim; }
  [[nodiscard]] Eigen::Index state_dim() const override { return cfg_.dim; }
  /// The rate vector (conditional mean of the counts).
  [[nodiscard]] Vector mean_measurement(const Vector& x) const override {
    return poisson_rates(x, cfg_.m1, cfg_.m2);
  }
  [[nodiscard]] Vector sample_measurement(const Vector& x, Rng& rng) const override {
    const Vector rates = mean_measurement(x);
    Vector counts(rates.size());
    for (Eigen::Index c = 0; c < rates.size(); ++c) {
      std::poisson_distribution<long long> poisson(rates(c));
      counts(c) = static_cast<double>(poisson(rng));
    }
    return counts;
  }
  [[nodiscard]] Matrix jacobian_at(const Vector& x) const override { return poisson_gaussian_approx(x, cfg_).h; }
  [[nodiscard]] Matrix noise_cov_at(const Vector& x) const override { return poisson_gaussian_approx(x, cfg_).r; }
  [[nodiscard]] double log_likelihood(const Vector& z, const Vector& x) const override {
    return poisson_log_likelihood(z, x, cfg_);
  }

 private:
  SensorNetConfig cfg_;
};

inline ScenarioModel make_sensornet_filter_model(const SensorNetConfig& cfg) {
  cfg.validate();
  return {std::make_shared<SensorNetDynamics>(cfg), std::make_shared<PoissonMeasurement>(cfg)};
}

/// Filters start from the known zero state with a small isotropic spread.
inline GaussianBelief sensornet_prior(const SensorNetConfig& cfg) {
  return {Vector::Zero(cfg.dim), cfg.prior_variance * Matrix::Identity(cfg.dim, cfg.dim)};
}

}  // namespace pfgpf
