#include <cmath>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "pfgpf/kalman.hpp"
#include "pfgpf/scenarios/acoustic.hpp"
#include "pfgpf/scenarios/linear_gaussian.hpp"
#include "support/test_support.hpp"

namespace pfgpf {
namespace {

using testing::FunctionDynamics;
using testing::FunctionMeasurement;
using testing::KalmanOracle;
using testing::random_matrix;
using testing::random_spd;
using testing::random_vector;

double max_rel(const Matrix& a, const Matrix& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

TEST(EkfPredict, LinearWithoutNoise) {
  Rng rng(1);
  const Matrix f = random_matrix(3, 3, rng);
  const LinearDynamics dm(f, Matrix::Zero(3, 3));
  const GaussianBelief out = ekf_predict({Vector::Zero(3), Matrix::Identity(3, 3)}, dm);
  EXPECT_EQ(out.mean, Vector::Zero(3));
  EXPECT_LT(max_rel(out.cov, f * f.transpose()), 1e-14);
}

TEST(EkfPredict, AcousticBlock) {
  const AcousticDynamics dm(1, AcousticConfig::default_filter_process_cov());
  const GaussianBelief out = ekf_predict({Vector::Zero(4), Matrix::Identity(4, 4)}, dm);
  const Matrix f = constant_velocity_matrix();
  EXPECT_LT(max_rel(out.cov, f * f.transpose() + AcousticConfig::default_filter_process_cov()), 1e-15);
}

TEST(EkfPredict, ScalarSquareMap) {
  const FunctionDynamics dm([](const Vector& x) { return Vector(x.array().square()); },
                            [](const Vector& x) { return Matrix(Matrix::Constant(1, 1, 2.0 * x(0))); },
                            Matrix::Zero(1, 1));
  const GaussianBelief out = ekf_predict({Vector::Constant(1, 2.0), Matrix::Constant(1, 1, 0.01)}, dm);
  EXPECT_DOUBLE_EQ(out.mean(0), 4.0);
  EXPECT_NEAR(out.cov(0, 0), 0.16, 1e-15);
}

TEST(EkfUpdate, UninformativeMeasurement) {
  Rng rng(2);
  const GaussianBelief b{random_vector(3, rng), random_spd(3, rng)};
  const LinearMeasurement mm(Matrix::Identity(3, 3), 1e12 * Matrix::Identity(3, 3));
  const GaussianBelief out = ekf_update(b, random_vector(3, rng), mm);
  EXPECT_LT(max_rel(out.mean, b.mean), 1e-6);
  EXPECT_LT(max_rel(out.cov, b.cov), 1e-6);
}

TEST(EkfUpdate, ScalarConjugate) {
  const LinearMeasurement mm(Matrix::Identity(1, 1), Matrix::Identity(1, 1));
  const GaussianBelief out = ekf_update({Vector::Zero(1), Matrix::Identity(1, 1)}, Vector::Ones(1), mm);
  EXPECT_NEAR(out.mean(0), 0.5, 1e-15);
  EXPECT_NEAR(out.cov(0, 0), 0.5, 1e-15);
}

TEST(EkfUpdate, MatchesDenseBayesFormula) {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const GaussianBelief b{random_vector(3, rng), random_spd(3, rng)};
    const Matrix h = random_matrix(2, 3, rng);
    const Matrix r = random_spd(2, rng);
    const Vector z = random_vector(2, rng);
    const LinearMeasurement mm(h, r);
    const GaussianBelief out = ekf_update(b, z, mm);
    // Information form: P⁺ = (P⁻¹ + HᵀR⁻¹H)⁻¹, m⁺ = P⁺(P⁻¹m + HᵀR⁻¹z).
    const Matrix post_cov = (b.cov.inverse() + h.transpose() * r.inverse() * h).inverse();
    const Vector post_mean = post_cov * (b.cov.inverse() * b.mean + h.transpose() * r.inverse() * z);
    EXPECT_LT(max_rel(out.cov, post_cov), 1e-10);
    EXPECT_LT(max_rel(out.mean, post_mean), 1e-10);
    EXPECT_LT((out.cov - out.cov.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(UkfPredict, LinearEqualsEkf) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const LinearDynamics dm(random_matrix(4, 4, rng), random_spd(4, rng));
    const GaussianBelief b{random_vector(4, rng), random_spd(4, rng)};
    const GaussianBelief e = ekf_predict(b, dm);
    const GaussianBelief u = ukf_predict(b, dm);
    EXPECT_LT(max_rel(u.mean, e.mean), 1e-8);
    EXPECT_LT(max_rel(u.cov, e.cov), 1e-8);
  }
}

TEST(UkfPredict, IdentityLeavesBeliefUnchanged) {
  Rng rng(5);
  const GaussianBelief b{random_vector(3, rng), random_spd(3, rng)};
  const LinearDynamics dm(Matrix::Identity(3, 3), Matrix::Zero(3, 3));
  const GaussianBelief u = ukf_predict(b, dm, UkfParams{0.5, 2.0, 1.0});
  EXPECT_LT(max_rel(u.mean, b.mean), 1e-8);
  EXPECT_LT(max_rel(u.cov, b.cov), 1e-8);
}

// The sigma-point rule integrates polynomials up to degree three exactly, so
// the predicted mean of a cubic map agrees with Monte Carlo. Its variance
// needs the sixth Gaussian moment, which three sigma points cannot represent
// (for x ~ N(0, 1) the rule gives 1 + 6a + 9a^2, the exact value is
// 1 + 6a + 15a^2), so it is checked against the rule itself.
TEST(UkfPredict, ScalarCubicAgainstMonteCarlo) {
  const double a = 0.2;
  const FunctionDynamics dm([a](const Vector& x) { return Vector(x.array() + a * x.array().cube()); },
                            [a](const Vector& x) { return Matrix(Matrix::Constant(1, 1, 1.0 + 3.0 * a * x(0) * x(0))); },
                            Matrix::Zero(1, 1));
  const GaussianBelief u = ukf_predict({Vector::Zero(1), Matrix::Identity(1, 1)}, dm);

  Rng rng(6);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n = 10'000'000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = normal(rng);
    const double y = x + a * x * x * x;
    sum += y;
    sum_sq += y * y;
  }
  const double mc_mean = sum / n;
  const double mc_var = sum_sq / n - mc_mean * mc_mean;
  EXPECT_LT(std::abs(u.mean(0) - mc_mean), 3.0 * std::sqrt(mc_var / n));

  // Exact sigma-point variance at mean m, unit variance, n + kappa = 3.
  const double m = 0.0;
  const double s = std::sqrt(3.0);
  auto g = [a](double x) { return x + a * x * x * x; };
  const double w0 = 2.0 / 3.0, w1 = 1.0 / 6.0;
  const double mean_sp = w0 * g(m) + w1 * (g(m + s) + g(m - s));
  const double var_sp = (w0 + 2.0) * std::pow(g(m) - mean_sp, 2) + w1 * (std::pow(g(m + s) - mean_sp, 2) + std::pow(g(m - s) - mean_sp, 2));
  EXPECT_NEAR(u.cov(0, 0), var_sp, 1e-12);
}

TEST(UkfUpdate, LinearEqualsEkf) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const GaussianBelief b{random_vector(3, rng), random_spd(3, rng)};
    const LinearMeasurement mm(random_matrix(2, 3, rng), random_spd(2, rng));
    const Vector z = random_vector(2, rng);
    const GaussianBelief e = ekf_update(b, z, mm);
    const GaussianBelief u = ukf_update(b, z, mm);
    EXPECT_LT(max_rel(u.mean, e.mean), 1e-8);
    EXPECT_LT(max_rel(u.cov, e.cov), 1e-8);
  }
}

TEST(UkfUpdate, UninformativeMeasurement) {
  Rng rng(8);
  const GaussianBelief b{random_vector(2, rng), random_spd(2, rng)};
  const LinearMeasurement mm(Matrix::Identity(2, 2), 1e12 * Matrix::Identity(2, 2));
  const GaussianBelief u = ukf_update(b, random_vector(2, rng), mm);
  EXPECT_LT(max_rel(u.mean, b.mean), 1e-6);
  EXPECT_LT(max_rel(u.cov, b.cov), 1e-6);
}

TEST(UkfUpdate, QuadraticMeasurementAgainstImportanceSampling) {
  const double c = 0.05;
  const FunctionMeasurement mm(
      1, [c](const Vector& x) { return Vector(x.array() + c * x.array().square()); },
      [c](const Vector& x) { return Matrix(Matrix::Constant(1, 1, 1.0 + 2.0 * c * x(0))); }, Matrix::Identity(1, 1));
  const GaussianBelief prior{Vector::Constant(1, 0.2), Matrix::Constant(1, 1, 0.01)};
  const Vector z = Vector::Constant(1, 0.6);
  const GaussianBelief u = ukf_update(prior, z, mm);

  Rng rng(9);
  std::normal_distribution<double> normal(0.2, 0.1);
  const int n = 10'000'000;
  long double sw = 0, swx = 0, swxx = 0, sww = 0;
  for (int i = 0; i < n; ++i) {
    const double x = normal(rng);
    const double innov = z(0) - (x + c * x * x);
    const long double w = std::exp(-0.5 * innov * innov);
    sw += w;
    swx += w * x;
    swxx += w * x * x;
    sww += w * w;
  }
  const double mean = static_cast<double>(swx / sw);
  const double var = static_cast<double>(swxx / sw) - mean * mean;
  const double ess = static_cast<double>(sw * sw / sww);
  EXPECT_LT(std::abs(u.mean(0) - mean), 3.0 * std::sqrt(var / ess));
  // Standard error of a variance estimate under near-Gaussian draws.
  EXPECT_LT(std::abs(u.cov(0, 0) - var), 3.0 * var * std::sqrt(2.0 / ess) + 1e-6);
}

TEST(KalmanChain, LinearGaussianMatchesClosedForm) {
  for (KalmanEngine engine : {KalmanEngine::kEkf, KalmanEngine::kUkf}) {
    Rng rng(10);
    const Matrix f = 0.9 * Matrix::Identity(3, 3) + 0.1 * random_matrix(3, 3, rng);
    const Matrix q = random_spd(3, rng);
    const Matrix h = random_matrix(2, 3, rng);
    const Matrix r = random_spd(2, rng);
    const LinearDynamics dm(f, q);
    const LinearMeasurement mm(h, r);
    const KalmanOracle oracle{f, q, h, r};
    const KalmanTrack track{engine, {}};
    GaussianBelief a{random_vector(3, rng), random_spd(3, rng)};
    GaussianBelief b = a;
    Vector x = random_vector(3, rng);
    for (int t = 0; t < 50; ++t) {
      x = dm.sample_transition(x, rng);
      const Vector z = mm.sample_measurement(x, rng);
      a = track.update(track.predict(a, dm), z, mm);
      b = oracle.update(oracle.predict(b), z);
      ASSERT_LT(max_rel(a.mean, b.mean), 1e-8) << "step " << t;
      ASSERT_LT(max_rel(a.cov, b.cov), 1e-8) << "step " << t;
    }
  }
}

TEST(KalmanChain, UpdateNeverIncreasesCovariance) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const GaussianBelief b{random_vector(4, rng), random_spd(4, rng)};
    const LinearMeasurement mm(random_matrix(3, 4, rng), random_spd(3, rng));
    const GaussianBelief out = ekf_update(b, random_vector(3, rng), mm);
    const Eigen::SelfAdjointEigenSolver<Matrix> diff(b.cov - out.cov);
    EXPECT_GT(diff.eigenvalues().minCoeff(), -1e-10);
    EXPECT_EQ((out.cov - out.cov.transpose()).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Ukf, RejectsBadAlpha) {
  const LinearDynamics dm(Matrix::Identity(2, 2), Matrix::Identity(2, 2));
  const GaussianBelief b{Vector::Zero(2), Matrix::Identity(2, 2)};
  EXPECT_THROW((void)ukf_predict(b, dm, UkfParams{0.0, 2.0, {}}), DomainError);
  EXPECT_THROW((void)ukf_predict(b, dm, UkfParams{1.5, 2.0, {}}), DomainError);
}

}  // namespace
}  // namespace pfgpf
