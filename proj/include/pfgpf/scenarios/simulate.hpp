#pragma once

#include <vector>

#include "pfgpf/models.hpp"
#include "pfgpf/scenarios/acoustic.hpp"
#include "pfgpf/scenarios/sensor_network.hpp"

namespace pfgpf {

/// Ground truth: states[0] is the initial state, states[t] and
/// measurements[t - 1] belong to time step t.
struct Trajectory {
  std::vector<Vector> states;
  std::vector<Vector> measurements;

  [[nodiscard]] int horizon() const { return static_cast<int>(measurements.size()); }
};

inline Trajectory simulate_truth(const DynamicModel& truth, const MeasurementModel& mm, const Vector& x0,
                                 int horizon, Rng& rng) {
  if (horizon < 0) throw DomainError("simulate_truth: negative horizon");
  Trajectory out;
  out.states.reserve(static_cast<std::size_t>(horizon) + 1);
  out.measurements.reserve(static_cast<std::size_t>(horizon));
  out.states.push_back(x0);
  for (int t = 0; t < horizon; ++t) {
    out.states.push_back(truth.sample_transition(out.states.back(), rng));
    out.measurements.push_back(mm.sample_measurement(out.states.back(), rng));
  }
  return out;
}

inline constexpr int kMaxTruthAttempts = 1'000'000;

/// Acoustic truth under V. When cfg.keep_targets_in_region is set, state paths
/// are redrawn until every target stays inside the region for the whole
/// horizon; measurements are drawn for the accepted path only.
inline Trajectory simulate_acoustic_truth(const AcousticConfig& cfg, int horizon, Rng& rng) {
  const auto truth = make_acoustic_truth_dynamics(cfg);
  const AcousticMeasurement mm(cfg);
  if (!cfg.keep_targets_in_region) return simulate_truth(*truth, mm, cfg.true_initial_state, horizon, rng);
  if (horizon < 0) throw DomainError("simulate_acoustic_truth: negative horizon");
  if (!targets_in_region(cfg, cfg.true_initial_state)) {
    throw DomainError("simulate_acoustic_truth: initial state outside the region");
  }
  Trajectory traj;
  for (int attempt = 0; attempt < kMaxTruthAttempts; ++attempt) {
    traj.states.assign(1, cfg.true_initial_state);
    bool inside = true;
    for (int t = 0; t < horizon && inside; ++t) {
      traj.states.push_back(truth->sample_transition(traj.states.back(), rng));
      inside = targets_in_region(cfg, traj.states.back());
    }
    if (!inside) continue;
    for (int t = 1; t <= horizon; ++t) {
      traj.measurements.push_back(mm.sample_measurement(traj.states[static_cast<std::size_t>(t)], rng));
    }
    return traj;
  }
  throw DomainError("simulate_acoustic_truth: no trajectory stayed inside the region");
}

/// Sensor-network truth from the zero initial state under the GH transition.
inline Trajectory simulate_sensornet_truth(const SensorNetConfig& cfg, int horizon, Rng& rng) {
  cfg.validate();
  const SensorNetDynamics truth(cfg);
  const PoissonMeasurement mm(cfg);
  return simulate_truth(truth, mm, Vector::Zero(cfg.dim), horizon, rng);
}

}  // namespace pfgpf
