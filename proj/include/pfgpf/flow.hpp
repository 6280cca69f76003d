#pragma once

// Invertible deterministic particle flow. Particles are migrated through
// pseudo-time lambda in [0, 1] by Euler steps of the affine ODE
//   d eta / d lambda = A(lambda) eta + b(lambda),
// with (A, b) from the exact Daum-Huang flow, either shared (EDH, linearized
// along a single mean trajectory) or per particle (LEDH, linearized along each
// particle's noiseless auxiliary trajectory). Every applied affine map is
// kept so the transport can be inverted exactly and its Jacobian determinant
// accumulated.

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "pfgpf/errors.hpp"
#include "pfgpf/models.hpp"
#include "pfgpf/numerics.hpp"

namespace pfgpf {

struct LambdaStep {
  double lambda;   // pseudo-time at the end of the step
  double epsilon;  // step size
};

class LambdaSchedule {
 public:
  LambdaSchedule() = default;
  explicit LambdaSchedule(std::vector<LambdaStep> steps) : steps_(std::move(steps)) {}

  [[nodiscard]] std::span<const LambdaStep> steps() const { return steps_; }
  [[nodiscard]] std::size_t size() const { return steps_.size(); }

 private:
  std::vector<LambdaStep> steps_;
};

/// Geometric step sizes eps_j proportional to ratio^j, normalized to sum to one.
/// ratio == 1 gives a uniform grid.
inline LambdaSchedule make_schedule(int n_steps, double ratio) {
  if (n_steps < 1) throw InvalidSchedule("make_schedule: need at least one step");
  if (!(ratio >= 1.0) || !std::isfinite(ratio)) throw InvalidSchedule("make_schedule: ratio must be >= 1");
  std::vector<double> eps(static_cast<std::size_t>(n_steps));
  double total = 0.0;
  for (int j = 0; j < n_steps; ++j) {
    eps[static_cast<std::size_t>(j)] = std::pow(ratio, j);
    total += eps[static_cast<std::size_t>(j)];
  }
  std::vector<LambdaStep> steps;
  steps.reserve(eps.size());
  double lambda = 0.0;
  for (std::size_t j = 0; j < eps.size(); ++j) {
    const double e = eps[j] / total;
    lambda += e;
    steps.push_back({lambda, e});
  }
  steps.back().lambda = 1.0;
  return LambdaSchedule(std::move(steps));
}

struct FlowParams {
  Matrix a;
  Vector b;
};

/// Exact Daum-Huang flow parameters at pseudo-time lambda, with the
/// measurement model linearized at lin_point:
///   A = -1/2 P Hᵀ (lambda H P Hᵀ + R)⁻¹ H
///   b = (I + 2 lambda A) [(I + lambda A) P Hᵀ R⁻¹ (z - e) + A eta0_mean]
/// where e = h(lin_point) - H lin_point.
inline FlowParams edh_params(double lambda, const Vector& lin_point, const Vector& eta0_mean, const Matrix& p,
                             const Vector& z, const MeasurementModel& mm) {
  const auto n = lin_point.size();
  if (p.rows() != n || p.cols() != n || eta0_mean.size() != n || z.size() != mm.obs_dim()) {
    throw ShapeMismatch("edh_params: dimension mismatch");
  }
  const Matrix h = mm.jacobian_at(lin_point);
  const Matrix r = mm.noise_cov_at(lin_point);
  const Vector e = mm.mean_measurement(lin_point) - h * lin_point;

  const Matrix pht = p * h.transpose();
  const Matrix s = symmetrize(lambda * h * pht + r);
  const CholeskyResult s_chol = cholesky_with_jitter(s);
  const auto s_lower = s_chol.lower.triangularView<Eigen::Lower>();
  Matrix s_inv_h = s_lower.solve(h);
  s_lower.transpose().solveInPlace(s_inv_h);

  FlowParams fp;
  fp.a = -0.5 * pht * s_inv_h;

  const CholeskyResult r_chol = cholesky_with_jitter(symmetrize(r));
  const auto r_lower = r_chol.lower.triangularView<Eigen::Lower>();
  Vector r_inv_innov = r_lower.solve(z - e);
  r_lower.transpose().solveInPlace(r_inv_innov);

  const Matrix eye = Matrix::Identity(n, n);
  const Vector inner = (eye + lambda * fp.a) * (pht * r_inv_innov) + fp.a * eta0_mean;
  fp.b = (eye + 2.0 * lambda * fp.a) * inner;
  return fp;
}

/// Localized parameters: identical equations, linearized at the particle's
/// own auxiliary point.
inline FlowParams ledh_params(double lambda, const Vector& particle, const Vector& eta0_mean, const Matrix& p,
                              const Vector& z, const MeasurementModel& mm) {
  return edh_params(lambda, particle, eta0_mean, p, z, mm);
}

/// One Euler step: eta + eps (A eta + b).
inline Vector migrate(const Vector& eta, const FlowParams& fp, double epsilon) {
  return eta + epsilon * (fp.a * eta + fp.b);
}

/// Minimum |det(I + eps A)| accepted for a flow step.
inline constexpr double kMinFlowDet = 1e-300;

inline double step_log_det(const FlowParams& fp, double epsilon) {
  const auto n = fp.a.rows();
  const double ld = log_abs_det(Matrix::Identity(n, n) + epsilon * fp.a);
  if (!std::isfinite(ld) || ld < std::log(kMinFlowDet)) {
    throw SingularFlowStep("flow step I + eps A is numerically singular");
  }
  return ld;
}

/// acc + log|det(I + eps A)|.
inline double accumulate_logdet(double acc, const FlowParams& fp, double epsilon) {
  return acc + step_log_det(fp, epsilon);
}

struct FlowStepRecord {
  double lambda;
  double epsilon;
  FlowParams params;
};

/// Applied flow maps: one shared sequence (EDH) or one per particle (LEDH).
struct FlowRecord {
  std::vector<std::vector<FlowStepRecord>> sequences;
  Vector log_det;

  [[nodiscard]] bool shared() const { return sequences.size() == 1; }
  [[nodiscard]] std::span<const FlowStepRecord> steps_for(Eigen::Index particle) const {
    return shared() ? sequences.front() : sequences.at(static_cast<std::size_t>(particle));
  }
};

/// Undoes a recorded flow: applies (I + eps A)⁻¹ (eta - eps b) in reverse order.
inline Vector invert_flow(const Vector& eta1, std::span<const FlowStepRecord> steps) {
  Vector eta = eta1;
  for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
    const auto n = it->params.a.rows();
    const Matrix step = Matrix::Identity(n, n) + it->epsilon * it->params.a;
    Eigen::PartialPivLU<Matrix> lu(step);
    if (lu.matrixLU().diagonal().cwiseAbs().minCoeff() == 0.0 ||
        lu.matrixLU().diagonal().cwiseAbs().array().log().sum() < std::log(kMinFlowDet)) {
      throw SingularFlowStep("invert_flow: singular step");
    }
    eta = lu.solve(eta - it->epsilon * it->params.b);
  }
  return eta;
}

enum class FlowKind { kEdh, kLedh };

struct FlowOptions {
  FlowKind kind = FlowKind::kLedh;
  LambdaSchedule schedule = make_schedule(29, 1.2);
  /// Forces A = b = 0 at every step, i.e. the identity transport.
  bool identity = false;
  bool record = false;
};

/// Inputs shared by every particle for one filter step.
struct FlowContext {
  const MeasurementModel& measurement;
  const Matrix& p;          // predicted covariance driving the flow
  const Vector& z;          // current measurement
  const Vector& eta0_mean;  // eta-bar_0 in the b equation
};

struct FlowResult {
  Matrix eta1;     // migrated particles, one per column
  Vector log_det;  // accumulated log|det| per particle
  std::optional<FlowRecord> record;
};

/// Migrates the sampled particles eta0. For EDH the linearization follows a
/// single trajectory started at eta0_mean; for LEDH particle i follows the
/// auxiliary trajectory started at aux0.col(i).
inline FlowResult run_flow(const Matrix& eta0, const Matrix& aux0, const FlowContext& ctx,
                           const FlowOptions& options) {
  const auto n = eta0.rows();
  const auto count = eta0.cols();
  FlowResult out;
  out.eta1 = eta0;
  out.log_det = Vector::Zero(count);
  if (options.record) out.record.emplace();

  if (options.identity) {
    if (out.record) {
      std::vector<FlowStepRecord> seq;
      for (const auto& st : options.schedule.steps()) {
        seq.push_back({st.lambda, st.epsilon, {Matrix::Zero(n, n), Vector::Zero(n)}});
      }
      out.record->sequences.push_back(std::move(seq));
      out.record->log_det = out.log_det;
    }
    return out;
  }

  if (options.kind == FlowKind::kEdh) {
    Vector aux = ctx.eta0_mean;
    double log_det = 0.0;
    std::vector<FlowStepRecord> seq;
    for (const auto& st : options.schedule.steps()) {
      FlowParams fp = edh_params(st.lambda, aux, ctx.eta0_mean, ctx.p, ctx.z, ctx.measurement);
      aux = migrate(aux, fp, st.epsilon);
      out.eta1 += st.epsilon * ((fp.a * out.eta1).colwise() + fp.b);
      log_det = accumulate_logdet(log_det, fp, st.epsilon);
      if (out.record) seq.push_back({st.lambda, st.epsilon, std::move(fp)});
    }
    out.log_det.setConstant(log_det);
    if (out.record) out.record->sequences.push_back(std::move(seq));
  } else {
    if (aux0.cols() != count || aux0.rows() != n) throw ShapeMismatch("run_flow: auxiliary particle shape");
    if (out.record) out.record->sequences.resize(static_cast<std::size_t>(count));
    for (Eigen::Index i = 0; i < count; ++i) {
      Vector aux = aux0.col(i);
      Vector eta = eta0.col(i);
      double log_det = 0.0;
      for (const auto& st : options.schedule.steps()) {
        FlowParams fp = ledh_params(st.lambda, aux, ctx.eta0_mean, ctx.p, ctx.z, ctx.measurement);
        aux = migrate(aux, fp, st.epsilon);
        eta = migrate(eta, fp, st.epsilon);
        log_det = accumulate_logdet(log_det, fp, st.epsilon);
        if (out.record) {
          out.record->sequences[static_cast<std::size_t>(i)].push_back({st.lambda, st.epsilon, std::move(fp)});
        }
      }
      out.eta1.col(i) = eta;
      out.log_det(i) = log_det;
    }
  }
  if (out.record) out.record->log_det = out.log_det;
  return out;
}

}  // namespace pfgpf
