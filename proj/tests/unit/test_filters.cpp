#include <cmath>
#include <limits>
#include <memory>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "pfgpf/filters.hpp"
#include "pfgpf/scenarios/linear_gaussian.hpp"
#include "pfgpf/scenarios/simulate.hpp"
#include "support/test_support.hpp"

namespace pfgpf {
namespace {

ScenarioModel linear_model(const Matrix& f, const Matrix& q, const Matrix& h, const Matrix& r) {
  return {std::make_shared<LinearDynamics>(f, q), std::make_shared<LinearMeasurement>(h, r)};
}

ScenarioModel scalar_model(double f, double q, double r) {
  return linear_model(Matrix::Constant(1, 1, f), Matrix::Constant(1, 1, q), Matrix::Identity(1, 1),
                      Matrix::Constant(1, 1, r));
}

ScenarioModel planar_model() {
  Matrix f(2, 2);
  f << 0.95, 0.1, -0.1, 0.95;
  Matrix h(2, 2);
  h << 1.0, 0.0, 0.5, 1.0;
  return linear_model(f, 0.2 * Matrix::Identity(2, 2), h, 0.5 * Matrix::Identity(2, 2));
}

const LinearDynamics& lin_dyn(const ScenarioModel& sm) { return dynamic_cast<const LinearDynamics&>(*sm.dynamics); }

FilterConfig make_config(FilterKind kind, Eigen::Index n_p, int flow_steps = 29, double ratio = 1.2) {
  FilterConfig cfg;
  cfg.kind = kind;
  cfg.n_particles = n_p;
  cfg.flow.schedule = make_schedule(flow_steps, ratio);
  return cfg;
}

// Always reports zero likelihood.
class NullMeasurement final : public MeasurementModel {
 public:
  explicit NullMeasurement(Eigen::Index n) : inner_(Matrix::Identity(n, n), Matrix::Identity(n, n)) {}
  [[nodiscard]] Eigen::Index obs_dim() const override { return inner_.obs_dim(); }
  [[nodiscard]] Eigen::Index state_dim() const override { return inner_.state_dim(); }
  [[nodiscard]] Vector mean_measurement(const Vector& x) const override { return inner_.mean_measurement(x); }
  [[nodiscard]] Vector sample_measurement(const Vector& x, Rng& rng) const override {
    return inner_.sample_measurement(x, rng);
  }
  [[nodiscard]] Matrix jacobian_at(const Vector& x) const override { return inner_.jacobian_at(x); }
  [[nodiscard]] Matrix noise_cov_at(const Vector& x) const override { return inner_.noise_cov_at(x); }
  [[nodiscard]] double log_likelihood(const Vector&, const Vector&) const override {
    return -std::numeric_limits<double>::infinity();
  }

 private:
  LinearMeasurement inner_;
};

TEST(Ess, Examples) {
  EXPECT_DOUBLE_EQ(ess(Vector::Constant(8, 0.125)), 8.0);
  Vector one_hot = Vector::Zero(5);
  one_hot(3) = 1.0;
  EXPECT_DOUBLE_EQ(ess(one_hot), 1.0);
  Vector w(3);
  w << 0.5, 0.25, 0.25;
  EXPECT_DOUBLE_EQ(ess(w), 8.0 / 3.0);
}

TEST(SystematicResample, UniformWeightsZeroOffsetIsIdentity) {
  Rng rng(1);
  const ParticleSet ps{testing::random_matrix(2, 7, rng), Vector::Zero(7)};
  const ParticleSet out = systematic_resample(ps, 0.0);
  EXPECT_EQ(out.states, ps.states);
  EXPECT_FALSE(out.log_weights.has_value());
}

TEST(SystematicResample, OneHotCopiesOneParticle) {
  Rng rng(2);
  Vector lw = Vector::Constant(6, -std::numeric_limits<double>::infinity());
  lw(4) = 0.0;
  const ParticleSet ps{testing::random_matrix(3, 6, rng), lw};
  for (double offset : {0.0, 0.3, 0.999}) {
    const ParticleSet out = systematic_resample(ps, offset);
    for (Eigen::Index k = 0; k < 6; ++k) EXPECT_EQ(out.states.col(k), ps.states.col(4));
  }
}

TEST(SystematicResample, CopyCountsWithinOneOfExpectation) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index n = 2 + trial % 30;
    Matrix states(1, n);
    for (Eigen::Index i = 0; i < n; ++i) states(0, i) = static_cast<double>(i);
    const ParticleSet ps{states, testing::random_vector(n, rng, 2.0)};
    const Vector w = normalized_weights(ps);
    for (int g = 0; g < 100; ++g) {
      const ParticleSet out = systematic_resample(ps, g / 100.0);
      Vector counts = Vector::Zero(n);
      for (Eigen::Index k = 0; k < n; ++k) counts(static_cast<Eigen::Index>(out.states(0, k))) += 1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        EXPECT_LE(std::abs(counts(i) - static_cast<double>(n) * w(i)), 1.0 + 1e-9);
      }
    }
  }
}

TEST(Gpf, ScalarLinearMatchesKalman) {
  const ScenarioModel sm = scalar_model(0.9, 0.5, 1.0);
  const GaussianBelief prior{Vector::Constant(1, 1.0), Matrix::Constant(1, 1, 2.0)};
  FilterState fs = initial_state(make_config(FilterKind::kGpf, 100000), prior, Rng(4));
  const Vector z = Vector::Constant(1, 2.2);
  const StepOutput out = gpf_step(fs, z, sm, 100000);
  const GaussianBelief post = ekf_update(ekf_predict(prior, *sm.dynamics), z, *sm.measurement);
  const double se = std::sqrt(post.cov(0, 0) / out.diagnostics.ess);
  EXPECT_LT(std::abs(out.estimate(0) - post.mean(0)), 3.0 * se);
}

TEST(Gpf, VanishingNoiseConcentratesOnMeasurement) {
  const ScenarioModel sm = scalar_model(1.0, 1e-8, 1e-8);
  const GaussianBelief prior{Vector::Zero(1), Matrix::Identity(1, 1)};
  FilterState fs = initial_state(make_config(FilterKind::kGpf, 100000), prior, Rng(5));
  const StepOutput out = gpf_step(fs, Vector::Constant(1, 0.4), sm, 100000);
  EXPECT_NEAR(out.estimate(0), 0.4, 1e-3);
}

TEST(Gpf, UninformativeLikelihoodKeepsPredictiveMoments) {
  const ScenarioModel sm = scalar_model(0.8, 0.3, 1e12);
  const GaussianBelief prior{Vector::Constant(1, 2.0), Matrix::Identity(1, 1)};
  const Eigen::Index n = 100000;
  FilterState fs = initial_state(make_config(FilterKind::kGpf, n), prior, Rng(6));
  const StepOutput out = gpf_step(fs, Vector::Constant(1, -5.0), sm, n);
  const GaussianBelief pred = ekf_predict(prior, *sm.dynamics);
  EXPECT_LT(std::abs(out.estimate(0) - pred.mean(0)), 3.0 * std::sqrt(pred.cov(0, 0) / n));
  EXPECT_LT(std::abs(out.posterior->cov(0, 0) - pred.cov(0, 0)), 3.0 * pred.cov(0, 0) * std::sqrt(2.0 / n));
}

TEST(Gpf, DegenerateWeightsFallBackToUniform) {
  const ScenarioModel sm{std::make_shared<LinearDynamics>(Matrix::Identity(2, 2), Matrix::Identity(2, 2)),
                         std::make_shared<NullMeasurement>(2)};
  const GaussianBelief prior{Vector::Zero(2), Matrix::Identity(2, 2)};
  FilterState fs = initial_state(make_config(FilterKind::kGpf, 50), prior, Rng(7));
  const StepOutput out = gpf_step(fs, Vector::Zero(2), sm, 50);
  EXPECT_TRUE(out.diagnostics.degenerate_weights);
  EXPECT_DOUBLE_EQ(out.diagnostics.ess, 50.0);
  EXPECT_TRUE(out.estimate.allFinite());
}

TEST(Pfgpf, IdentityFlowReducesToGpf) {
  const ScenarioModel sm{std::make_shared<LinearDynamics>(Matrix::Identity(2, 2), 0.1 * Matrix::Identity(2, 2)),
                         std::make_shared<testing::FunctionMeasurement>(testing::nonlinear_2d_measurement(0.3))};
  const GaussianBelief prior{Vector::Constant(2, 0.5), Matrix::Identity(2, 2)};
  for (FilterKind kind : {FilterKind::kPfgpfEdh, FilterKind::kPfgpfLedh}) {
    FilterConfig cfg = make_config(kind, 200);
    cfg.flow.identity = true;
    FilterState a = initial_state(cfg, prior, Rng(8));
    FilterState b = initial_state(make_config(FilterKind::kGpf, 200), prior, Rng(8));
    Rng truth_rng(9);
    Vector x = prior.mean;
    for (int t = 0; t < 5; ++t) {
      x = sm.dynamics->sample_transition(x, truth_rng);
      const Vector z = sm.measurement->sample_measurement(x, truth_rng);
      const StepOutput oa = pfgpf_step(a, z, sm, cfg);
      const StepOutput ob = gpf_step(b, z, sm, 200);
      EXPECT_EQ(oa.estimate, ob.estimate) << "step " << t;
      EXPECT_EQ(oa.posterior->cov, ob.posterior->cov) << "step " << t;
    }
  }
}

TEST(Pfgpf, LinearGaussianWeightsAreNearlyFlat) {
  const ScenarioModel sm = planar_model();
  const GaussianBelief prior{Vector::Constant(2, 1.0), Matrix::Identity(2, 2)};
  for (FilterKind kind : {FilterKind::kPfgpfEdh, FilterKind::kPfgpfLedh}) {
    const FilterConfig cfg = make_config(kind, 500, 100, 1.0);
    FilterState fs = initial_state(cfg, prior, Rng(10));
    Rng truth_rng(11);
    Vector x = prior.mean;
    for (int t = 0; t < 10; ++t) {
      x = sm.dynamics->sample_transition(x, truth_rng);
      const StepOutput out = pfgpf_step(fs, sm.measurement->sample_measurement(x, truth_rng), sm, cfg);
      EXPECT_LT(out.diagnostics.log_weight_variance, 0.05) << filter_name(kind) << " step " << t;
    }
  }
}

TEST(Pfgpf, FlowRecordInvertsToPreFlowParticles) {
  const ScenarioModel sm{std::make_shared<LinearDynamics>(Matrix::Identity(2, 2), 0.1 * Matrix::Identity(2, 2)),
                         std::make_shared<testing::FunctionMeasurement>(testing::nonlinear_2d_measurement(0.3))};
  const GaussianBelief prior{Vector::Constant(2, 0.5), Matrix::Identity(2, 2)};
  for (FilterKind kind : {FilterKind::kPfgpfEdh, FilterKind::kPfgpfLedh, FilterKind::kPfpfLedh}) {
    FilterConfig cfg = make_config(kind, 30);
    cfg.record_flow = true;
    FilterState fs = initial_state(cfg, prior, Rng(12));
    const StepOutput out = filter_step(fs, Vector::Constant(2, 0.7), sm, cfg);
    ASSERT_TRUE(out.flow && out.pre_flow);
    for (Eigen::Index i = 0; i < 30; ++i) {
      const Vector back = invert_flow(out.particles.states.col(i), out.flow->steps_for(i));
      EXPECT_LT((back - out.pre_flow->col(i)).cwiseAbs().maxCoeff(), 1e-8);
    }
  }
}

TEST(Pfpf, ScalarLinearTracksKalman) {
  const ScenarioModel sm = scalar_model(0.9, 0.5, 1.0);
  const GaussianBelief prior{Vector::Zero(1), Matrix::Identity(1, 1)};
  for (FilterKind kind : {FilterKind::kPfpfEdh, FilterKind::kPfpfLedh}) {
    const FilterConfig cfg = make_config(kind, 10000);
    FilterState fs = initial_state(cfg, prior, Rng(13));
    GaussianBelief kf = prior;
    Rng truth_rng(14);
    Vector x = prior.mean;
    for (int t = 0; t < 20; ++t) {
      x = sm.dynamics->sample_transition(x, truth_rng);
      const Vector z = sm.measurement->sample_measurement(x, truth_rng);
      const StepOutput out = pfpf_step(fs, z, sm, cfg);
      kf = ekf_update(ekf_predict(kf, *sm.dynamics), z, *sm.measurement);
      const double se = std::sqrt(kf.cov(0, 0) / out.diagnostics.ess);
      EXPECT_LT(std::abs(out.estimate(0) - kf.mean(0)), 3.0 * se) << filter_name(kind) << " step " << t;
    }
  }
}

TEST(Pfpf, ResamplingRestoresFullEss) {
  const ScenarioModel sm = scalar_model(1.0, 1.0, 0.01);
  const GaussianBelief prior{Vector::Zero(1), Matrix::Identity(1, 1)};
  const FilterConfig cfg = make_config(FilterKind::kPfpfEdh, 64);
  FilterState fs = initial_state(cfg, prior, Rng(15));
  int resampled = 0;
  for (int t = 0; t < 20; ++t) {
    const StepOutput out = pfpf_step(fs, Vector::Constant(1, std::sin(t)), sm, cfg);
    if (out.diagnostics.resampled) {
      ++resampled;
      EXPECT_EQ(out.diagnostics.ess_after_resampling, 64.0);
      EXPECT_FALSE(fs.particles->log_weights.has_value());
    } else {
      EXPECT_GE(out.diagnostics.ess, 32.0);
    }
  }
  EXPECT_GT(resampled, 0);
}

TEST(Pfpf, RequiresTransitionDensity) {
  const ScenarioModel sm{std::make_shared<testing::FunctionDynamics>(
                             [](const Vector& x) { return x; },
                             [](const Vector& x) { return Matrix(Matrix::Identity(x.size(), x.size())); },
                             Matrix::Identity(1, 1)),
                         std::make_shared<LinearMeasurement>(Matrix::Identity(1, 1), Matrix::Identity(1, 1))};
  const FilterConfig cfg = make_config(FilterKind::kPfpfEdh, 10);
  FilterState fs = initial_state(cfg, {Vector::Zero(1), Matrix::Identity(1, 1)}, Rng(16));
  EXPECT_THROW(pfpf_step(fs, Vector::Zero(1), sm, cfg), MissingCapability);
}

TEST(FlowFilter, LinearGaussianTracksKalman) {
  const ScenarioModel sm = planar_model();
  const GaussianBelief prior{Vector::Constant(2, 3.0), Matrix::Identity(2, 2)};
  for (FilterKind kind : {FilterKind::kEdh, FilterKind::kLedh}) {
    const FilterConfig cfg = make_config(kind, 10000, 100, 1.0);
    FilterState fs = initial_state(cfg, prior, Rng(17));
    GaussianBelief kf = prior;
    Rng truth_rng(18);
    Vector x = prior.mean;
    for (int t = 0; t < 20; ++t) {
      x = sm.dynamics->sample_transition(x, truth_rng);
      const Vector z = sm.measurement->sample_measurement(x, truth_rng);
      const StepOutput out = flow_filter_step(fs, z, sm, cfg);
      kf = ekf_update(ekf_predict(kf, *sm.dynamics), z, *sm.measurement);
      // Relative to the larger of the state magnitude and the posterior spread.
      const Vector scale = kf.mean.cwiseAbs().cwiseMax(kf.cov.diagonal().cwiseSqrt());
      EXPECT_LT(((out.estimate - kf.mean).array() / scale.array()).abs().maxCoeff(), 0.02)
          << filter_name(kind) << " step " << t;
    }
  }
}

TEST(FlowFilter, IdentityFlowReturnsPredictedMean) {
  const ScenarioModel sm = planar_model();
  FilterConfig cfg = make_config(FilterKind::kLedh, 40);
  cfg.flow.identity = true;
  cfg.record_flow = true;
  FilterState fs = initial_state(cfg, {Vector::Zero(2), Matrix::Identity(2, 2)}, Rng(19));
  const StepOutput out = flow_filter_step(fs, Vector::Ones(2), sm, cfg);
  EXPECT_LT((out.estimate - out.pre_flow->rowwise().mean()).cwiseAbs().maxCoeff(), 1e-15);
}

// Time-averaged MSE against truth for every filter stays within 10% of the
// Kalman filter's on the same trajectories.
TEST(AllFilters, LinearGaussianMseNearKalman) {
  const ScenarioModel sm = planar_model();
  const GaussianBelief prior{Vector::Zero(2), Matrix::Identity(2, 2)};
  const int seeds = 20, horizon = 50;
  std::vector<Trajectory> truths;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(derive_seed(20, {static_cast<std::uint64_t>(s)}));
    Vector x0 = prior.mean + standard_normal(2, rng);
    truths.push_back(simulate_truth(*sm.dynamics, *sm.measurement, x0, horizon, rng));
  }
  auto mse_of = [&](auto&& estimator) {
    double total = 0.0;
    for (const Trajectory& tr : truths) {
      const std::vector<Vector> est = estimator(tr);
      for (int t = 1; t <= horizon; ++t) total += (est[static_cast<std::size_t>(t - 1)] - tr.states[static_cast<std::size_t>(t)]).squaredNorm();
    }
    return total / (seeds * horizon);
  };
  const double kalman_mse = mse_of([&](const Trajectory& tr) {
    std::vector<Vector> est;
    GaussianBelief b = prior;
    for (const Vector& z : tr.measurements) {
      b = ekf_update(ekf_predict(b, *sm.dynamics), z, *sm.measurement);
      est.push_back(b.mean);
    }
    return est;
  });
  for (FilterKind kind : kAllFilters) {
    // Per-particle flows cost N_p times more; a linear model makes them
    // coincide with the shared flow, so fewer particles suffice there.
    const bool local = flow_kind_of(kind) == FlowKind::kLedh && kind != FilterKind::kGpf;
    const FilterConfig cfg = make_config(kind, local ? 500 : 5000, 100, 1.0);
    int run = 0;
    const double filter_mse = mse_of([&](const Trajectory& tr) {
      std::vector<Vector> est;
      FilterState fs = initial_state(cfg, prior, Rng(derive_seed(21, {static_cast<std::uint64_t>(run++)})));
      for (const Vector& z : tr.measurements) est.push_back(filter_step(fs, z, sm, cfg).estimate);
      return est;
    });
    EXPECT_LT(std::abs(filter_mse / kalman_mse - 1.0), 0.10) << filter_name(kind) << " mse " << filter_mse
                                                             << " kalman " << kalman_mse;
  }
}

TEST(Pfgpf, PosteriorCovarianceStaysSymmetricPsd) {
  const ScenarioModel sm{std::make_shared<LinearDynamics>(Matrix::Identity(2, 2), 0.05 * Matrix::Identity(2, 2)),
                         std::make_shared<testing::FunctionMeasurement>(testing::nonlinear_2d_measurement(0.1))};
  for (int seed = 0; seed < 20; ++seed) {
    const FilterConfig cfg = make_config(seed % 2 == 0 ? FilterKind::kPfgpfEdh : FilterKind::kPfgpfLedh, 50);
    FilterState fs = initial_state(cfg, {Vector::Zero(2), Matrix::Identity(2, 2)}, Rng(static_cast<std::uint64_t>(seed)));
    Rng truth_rng(100 + static_cast<std::uint64_t>(seed));
    Vector x = Vector::Zero(2);
    for (int t = 0; t < 15; ++t) {
      x = sm.dynamics->sample_transition(x, truth_rng);
      const StepOutput out = pfgpf_step(fs, sm.measurement->sample_measurement(x, truth_rng), sm, cfg);
      ASSERT_TRUE(out.estimate.allFinite());
      const Matrix& cov = out.posterior->cov;
      EXPECT_EQ((cov - cov.transpose()).cwiseAbs().maxCoeff(), 0.0);
      EXPECT_GE(Eigen::SelfAdjointEigenSolver<Matrix>(cov).eigenvalues().minCoeff(), -1e-12);
    }
  }
}

}  // namespace
}  // namespace pfgpf
