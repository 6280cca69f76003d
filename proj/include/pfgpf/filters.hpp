#pragma once

// Filter drivers: Gaussian particle filter (GPF), particle flow Gaussian
// particle filter (PFGPF), particle flow particle filter (PFPF) and the pure
// EDH/LEDH flow filters. All weight arithmetic happens in log space.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <string_view>

#include "pfgpf/errors.hpp"
#include "pfgpf/flow.hpp"
#include "pfgpf/kalman.hpp"
#include "pfgpf/models.hpp"
#include "pfgpf/numerics.hpp"
#include "pfgpf/random.hpp"

namespace pfgpf {

enum class FilterKind { kEdh, kLedh, kPfpfEdh, kPfpfLedh, kGpf, kPfgpfEdh, kPfgpfLedh };

inline constexpr std::array<FilterKind, 7> kAllFilters = {
    FilterKind::kEdh,     FilterKind::kLedh,     FilterKind::kPfpfEdh,   FilterKind::kPfpfLedh,
    FilterKind::kGpf,     FilterKind::kPfgpfEdh, FilterKind::kPfgpfLedh,
};

inline std::string_view filter_name(FilterKind kind) {
  switch (kind) {
    case FilterKind::kEdh: return "edh";
    case FilterKind::kLedh: return "ledh";
    case FilterKind::kPfpfEdh: return "pfpf_edh";
    case FilterKind::kPfpfLedh: return "pfpf_ledh";
    case FilterKind::kGpf: return "gpf";
    case FilterKind::kPfgpfEdh: return "pfgpf_edh";
    case FilterKind::kPfgpfLedh: return "pfgpf_ledh";
  }
  return "unknown";
}

inline std::optional<FilterKind> parse_filter(std::string_view name) {
  for (FilterKind k : kAllFilters) {
    if (filter_name(k) == name) return k;
  }
  return std::nullopt;
}

inline FlowKind flow_kind_of(FilterKind kind) {
  switch (kind) {
    case FilterKind::kLedh:
    case FilterKind::kPfpfLedh:
    case FilterKind::kPfgpfLedh: return FlowKind::kLedh;
    default: return FlowKind::kEdh;
  }
}

inline bool uses_gaussian_belief(FilterKind kind) {
  return kind == FilterKind::kGpf || kind == FilterKind::kPfgpfEdh || kind == FilterKind::kPfgpfLedh;
}

inline bool needs_transition_density(FilterKind kind) {
  return kind == FilterKind::kPfpfEdh || kind == FilterKind::kPfpfLedh;
}

/// Which covariance drives the flow equations.
enum class FlowCovariance { kKalman, kEnsemble };

struct FilterConfig {
  FilterKind kind = FilterKind::kPfgpfLedh;
  Eigen::Index n_particles = 100;
  FlowOptions flow;
  KalmanTrack kalman;
  FlowCovariance flow_covariance = FlowCovariance::kKalman;
  /// Keep the pre-flow particles and the applied flow maps in StepOutput.
  bool record_flow = false;
};

struct FilterState {
  std::optional<GaussianBelief> belief;  // GPF / PFGPF posterior N(mu, Sigma)
  std::optional<ParticleSet> particles;  // PFPF / pure flow
  std::optional<GaussianBelief> kalman;  // (x_hat, P) track for flow covariances
  Rng rng;
};

struct StepDiagnostics {
  double ess = 0.0;
  double ess_after_resampling = 0.0;
  double log_weight_variance = 0.0;
  bool degenerate_weights = false;
  bool resampled = false;
  double max_jitter = 0.0;
};

struct StepOutput {
  Vector estimate;
  std::optional<GaussianBelief> posterior;
  /// Post-flow particles with their normalized log-weights (uniform for the
  /// pure flow filters).
  ParticleSet particles;
  /// Pre-flow particles and flow maps, when FilterConfig::record_flow is set.
  std::optional<Matrix> pre_flow;
  std::optional<FlowRecord> flow;
  StepDiagnostics diagnostics;
};

inline double ess(const Vector& weights) { return 1.0 / weights.squaredNorm(); }

/// Systematic resampling with an explicit offset in [0, 1): particle copies
/// land at cumulative positions (offset + k) / N.
inline ParticleSet systematic_resample(const ParticleSet& ps, double offset) {
  const Eigen::Index n = ps.size();
  if (n == 0) throw EmptyParticleSet();
  const Vector w = normalized_weights(ps);
  // Absorbs rounding in the running sum so equal cells are not split early.
  const double tol = 64.0 * static_cast<double>(n) * std::numeric_limits<double>::epsilon();
  ParticleSet out;
  out.states.resize(ps.dim(), n);
  double cumulative = w(0);
  Eigen::Index src = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double position = (offset + static_cast<double>(k)) / static_cast<double>(n);
    while (src + 1 < n && cumulative <= position + tol) {
      ++src;
      cumulative += w(src);
    }
    out.states.col(k) = ps.states.col(src);
  }
  return out;
}

inline ParticleSet systematic_resample(const ParticleSet& ps, Rng& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  return systematic_resample(ps, uniform(rng));
}

namespace detail {

inline double log_weight_variance(const Vector& lw) {
  double mean = 0.0;
  Eigen::Index finite = 0;
  for (double v : lw) {
    if (std::isfinite(v)) {
      mean += v;
      ++finite;
    }
  }
  if (finite < 2) return 0.0;
  mean /= static_cast<double>(finite);
  double acc = 0.0;
  for (double v : lw) {
    if (std::isfinite(v)) acc += (v - mean) * (v - mean);
  }
  return acc / static_cast<double>(finite);
}

// Normalizes, falling back to uniform weights when nothing is finite.
inline Vector normalize_or_uniform(const Vector& lw, StepDiagnostics& diag) {
  diag.log_weight_variance = log_weight_variance(lw);
  try {
    return normalize_log_weights(lw);
  } catch (const AllWeightsDegenerate&) {
    diag.degenerate_weights = true;
    return Vector::Constant(lw.size(), 1.0 / static_cast<double>(lw.size()));
  }
}

struct Propagated {
  Matrix noisy;      // eta_0
  Matrix noiseless;  // eta-bar_0
};

inline Propagated propagate_all(const Matrix& x, const DynamicModel& dm, Rng& rng, bool with_noiseless) {
  Propagated out;
  out.noisy.resize(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.cols(); ++i) out.noisy.col(i) = dm.sample_transition(x.col(i), rng);
  if (with_noiseless) {
    out.noiseless.resize(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.cols(); ++i) out.noiseless.col(i) = dm.transition(x.col(i));
  }
  return out;
}

inline FlowOptions flow_options_for(const FilterConfig& cfg) {
  FlowOptions opts = cfg.flow;
  opts.kind = flow_kind_of(cfg.kind);
  opts.record = opts.record || cfg.record_flow;
  return opts;
}

// eta-bar_0 in the b equation: the Kalman predicted mean for EDH, the mean of
// the noiseless predicted ensemble for LEDH.
inline Vector flow_anchor(FlowKind kind, const GaussianBelief& kalman_pred, const Matrix& noiseless) {
  return kind == FlowKind::kEdh ? kalman_pred.mean : Vector(noiseless.rowwise().mean());
}

inline void check_state(const FilterState& fs, bool needs_belief) {
  if (needs_belief && !fs.belief) throw Error("filter state has no Gaussian belief");
  if (!needs_belief && !fs.particles) throw Error("filter state has no particle set");
}

}  // namespace detail

/// Initial state from the prior p0 = N(x0, P0).
inline FilterState initial_state(const FilterConfig& cfg, const GaussianBelief& prior, Rng rng) {
  FilterState fs;
  fs.rng = std::move(rng);
  fs.kalman = prior;
  if (uses_gaussian_belief(cfg.kind)) {
    fs.belief = prior;
  } else {
    ParticleSet ps;
    ps.states = sample_gaussian(prior, cfg.n_particles, fs.rng);
    fs.particles = std::move(ps);
  }
  return fs;
}

/// GPF with the predictive Gaussian as proposal: the propagated particles are
/// the proposal draws and their weights reduce to the likelihood.
inline StepOutput gpf_step(FilterState& fs, const Vector& z, const ScenarioModel& sm, Eigen::Index n_p) {
  detail::check_state(fs, true);
  const DynamicModel& dm = *sm.dynamics;
  const MeasurementModel& mm = *sm.measurement;
  StepOutput out;

  const CholeskyResult chol = cholesky_with_jitter(fs.belief->cov);
  out.diagnostics.max_jitter = chol.jitter;
  const Matrix x = sample_gaussian(fs.belief->mean, chol.lower, n_p, fs.rng);
  const detail::Propagated prop = detail::propagate_all(x, dm, fs.rng, false);

  Vector lw(n_p);
  for (Eigen::Index i = 0; i < n_p; ++i) lw(i) = mm.log_likelihood(z, prop.noisy.col(i));
  const Vector w = detail::normalize_or_uniform(lw, out.diagnostics);
  out.diagnostics.ess = ess(w);
  out.diagnostics.ess_after_resampling = out.diagnostics.ess;

  GaussianBelief post = weighted_mean_cov(prop.noisy, w);
  out.estimate = post.mean;
  out.particles.states = prop.noisy;
  out.particles.log_weights = w.array().log().matrix();
  out.posterior = post;
  fs.belief = std::move(post);
  return out;
}

/// One PFGPF step: sample from N(mu, Sigma), propagate with and without noise,
/// fit the predictive Gaussian, run the Kalman prediction, flow both particle
/// sets with shared recorded maps, weight by
///   N(eta1; mu_bar, Sigma_bar) p(z | eta1) |det T| / N(eta0; mu_bar, Sigma_bar),
/// refit the posterior Gaussian and update the Kalman track.
inline StepOutput pfgpf_step(FilterState& fs, const Vector& z, const ScenarioModel& sm, const FilterConfig& cfg) {
  detail::check_state(fs, true);
  if (!fs.kalman) throw Error("pfgpf_step: missing Kalman track");
  const DynamicModel& dm = *sm.dynamics;
  const MeasurementModel& mm = *sm.measurement;
  const Eigen::Index n_p = cfg.n_particles;
  const FlowOptions flow_opts = detail::flow_options_for(cfg);
  StepOutput out;

  const CholeskyResult chol = cholesky_with_jitter(fs.belief->cov);
  out.diagnostics.max_jitter = chol.jitter;
  const Matrix x = sample_gaussian(fs.belief->mean, chol.lower, n_p, fs.rng);
  const detail::Propagated prop = detail::propagate_all(x, dm, fs.rng, true);

  const GaussianBelief predictive = mean_cov(prop.noisy);
  const GaussianLogDensity predictive_density(predictive.mean, predictive.cov);
  out.diagnostics.max_jitter = std::max(out.diagnostics.max_jitter, predictive_density.jitter());

  const GaussianBelief kalman_pred = cfg.kalman.predict(*fs.kalman, dm);
  const Matrix& flow_cov = cfg.flow_covariance == FlowCovariance::kKalman ? kalman_pred.cov : predictive.cov;
  const Vector anchor = detail::flow_anchor(flow_opts.kind, kalman_pred, prop.noiseless);
  const FlowContext ctx{mm, flow_cov, z, anchor};
  FlowResult flow = run_flow(prop.noisy, prop.noiseless, ctx, flow_opts);

  Vector lw(n_p);
  for (Eigen::Index i = 0; i < n_p; ++i) {
    const double proposal_ratio = predictive_density(flow.eta1.col(i)) - predictive_density(prop.noisy.col(i));
    lw(i) = mm.log_likelihood(z, flow.eta1.col(i)) + proposal_ratio + flow.log_det(i);
  }
  const Vector w = detail::normalize_or_uniform(lw, out.diagnostics);
  out.diagnostics.ess = ess(w);
  out.diagnostics.ess_after_resampling = out.diagnostics.ess;

  GaussianBelief post = weighted_mean_cov(flow.eta1, w);
  const GaussianBelief kalman_post = cfg.kalman.update(kalman_pred, z, mm);
  fs.kalman = GaussianBelief{post.mean, kalman_post.cov};

  out.estimate = post.mean;
  out.posterior = post;
  out.particles.states = std::move(flow.eta1);
  out.particles.log_weights = w.array().log().matrix();
  if (cfg.record_flow) {
    out.pre_flow = prop.noisy;
    out.flow = std::move(flow.record);
  }
  fs.belief = std::move(post);
  return out;
}

/// PFPF: importance sampling with the invertible flow as proposal,
///   w_t ∝ w_{t-1} p(eta1 | x) p(z | eta1) |det T| / p(eta0 | x),
/// and systematic resampling once ESS drops below N_p / 2.
inline StepOutput pfpf_step(FilterState& fs, const Vector& z, const ScenarioModel& sm, const FilterConfig& cfg) {
  detail::check_state(fs, false);
  if (!fs.kalman) throw Error("pfpf_step: missing Kalman track");
  const DynamicModel& dm = *sm.dynamics;
  const MeasurementModel& mm = *sm.measurement;
  if (!dm.has_transition_density()) {
    throw MissingCapability("pfpf_step: dynamic model has no transition density");
  }
  const FlowOptions flow_opts = detail::flow_options_for(cfg);
  const ParticleSet& prev = *fs.particles;
  const Eigen::Index n_p = prev.size();
  StepOutput out;

  const Vector prev_lw = normalized_weights(prev).array().log().matrix();
  const detail::Propagated prop = detail::propagate_all(prev.states, dm, fs.rng, true);

  const GaussianBelief kalman_pred = cfg.kalman.predict(*fs.kalman, dm);
  const Matrix ensemble_cov =
      cfg.flow_covariance == FlowCovariance::kEnsemble ? mean_cov(prop.noisy).cov : Matrix();
  const Matrix& flow_cov = cfg.flow_covariance == FlowCovariance::kKalman ? kalman_pred.cov : ensemble_cov;
  const Vector anchor = detail::flow_anchor(flow_opts.kind, kalman_pred, prop.noiseless);
  const FlowContext ctx{mm, flow_cov, z, anchor};
  FlowResult flow = run_flow(prop.noisy, prop.noiseless, ctx, flow_opts);

  Vector lw(n_p);
  for (Eigen::Index i = 0; i < n_p; ++i) {
    const Vector x_prev = prev.states.col(i);
    const double proposal_ratio =
        dm.log_transition_density(flow.eta1.col(i), x_prev) - dm.log_transition_density(prop.noisy.col(i), x_prev);
    lw(i) = prev_lw(i) + mm.log_likelihood(z, flow.eta1.col(i)) + proposal_ratio + flow.log_det(i);
  }
  const Vector w = detail::normalize_or_uniform(lw, out.diagnostics);
  out.diagnostics.ess = ess(w);

  out.estimate = flow.eta1 * w;
  const GaussianBelief kalman_post = cfg.kalman.update(kalman_pred, z, mm);
  fs.kalman = GaussianBelief{out.estimate, kalman_post.cov};

  out.particles.states = flow.eta1;
  out.particles.log_weights = w.array().log().matrix();
  if (cfg.record_flow) {
    out.pre_flow = prop.noisy;
    out.flow = std::move(flow.record);
  }

  ParticleSet next;
  next.states = std::move(flow.eta1);
  next.log_weights = w.array().log().matrix();
  if (out.diagnostics.ess < 0.5 * static_cast<double>(n_p)) {
    next = systematic_resample(next, fs.rng);
    out.diagnostics.resampled = true;
  }
  out.diagnostics.ess_after_resampling = ess(normalized_weights(next));
  fs.particles = std::move(next);
  return out;
}

/// Pure EDH/LEDH flow filter: no importance weighting; the estimate is the
/// mean of the migrated particles.
inline StepOutput flow_filter_step(FilterState& fs, const Vector& z, const ScenarioModel& sm,
                                   const FilterConfig& cfg) {
  detail::check_state(fs, false);
  if (!fs.kalman) throw Error("flow_filter_step: missing Kalman track");
  const DynamicModel& dm = *sm.dynamics;
  const MeasurementModel& mm = *sm.measurement;
  const FlowOptions flow_opts = detail::flow_options_for(cfg);
  const Eigen::Index n_p = fs.particles->size();
  StepOutput out;

  const detail::Propagated prop = detail::propagate_all(fs.particles->states, dm, fs.rng, true);
  const GaussianBelief kalman_pred = cfg.kalman.predict(*fs.kalman, dm);
  const Matrix ensemble_cov =
      cfg.flow_covariance == FlowCovariance::kEnsemble ? mean_cov(prop.noisy).cov : Matrix();
  const Matrix& flow_cov = cfg.flow_covariance == FlowCovariance::kKalman ? kalman_pred.cov : ensemble_cov;
  const Vector anchor = detail::flow_anchor(flow_opts.kind, kalman_pred, prop.noiseless);
  const FlowContext ctx{mm, flow_cov, z, anchor};
  FlowResult flow = run_flow(prop.noisy, prop.noiseless, ctx, flow_opts);

  out.estimate = flow.eta1.rowwise().mean();
  const GaussianBelief kalman_post = cfg.kalman.update(kalman_pred, z, mm);
  fs.kalman = GaussianBelief{out.estimate, kalman_post.cov};
  out.diagnostics.ess = static_cast<double>(n_p);
  out.diagnostics.ess_after_resampling = out.diagnostics.ess;

  out.particles.states = flow.eta1;
  if (cfg.record_flow) {
    out.pre_flow = prop.noisy;
    out.flow = std::move(flow.record);
  }
  fs.particles = ParticleSet{std::move(flow.eta1), std::nullopt};
  return out;
}

/// Dispatches on cfg.kind.
inline StepOutput filter_step(FilterState& fs, const Vector& z, const ScenarioModel& sm, const FilterConfig& cfg) {
  switch (cfg.kind) {
    case FilterKind::kGpf: return gpf_step(fs, z, sm, cfg.n_particles);
    case FilterKind::kPfgpfEdh:
    case FilterKind::kPfgpfLedh: return pfgpf_step(fs, z, sm, cfg);
    case FilterKind::kPfpfEdh:
    case FilterKind::kPfpfLedh: return pfpf_step(fs, z, sm, cfg);
    case FilterKind::kEdh:
    case FilterKind::kLedh: return flow_filter_step(fs, z, sm, cfg);
  }
  throw Error("filter_step: unknown filter kind");
}

}  // namespace pfgpf
