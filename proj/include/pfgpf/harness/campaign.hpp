#pragma once

// Seeded Monte Carlo campaigns: simulate one truth per trajectory, draw one
// prior per rerun, and run every configured filter on the same measurements.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "pfgpf/filters.hpp"
#include "pfgpf/harness/config.hpp"
#include "pfgpf/metrics.hpp"
#include "pfgpf/scenarios/simulate.hpp"

namespace pfgpf::harness {

/// Stream tags for derive_seed.
enum class SeedStream : std::uint64_t { kTruth = 0, kPrior = 1, kFilter = 2 };

struct RunRecord {
  FilterKind filter = FilterKind::kEdh;
  int trajectory = 0;
  int rerun = 0;
  std::vector<Vector> estimates;
  std::vector<double> step_metric;
  double run_metric = 0.0;
  double mean_step_seconds = 0.0;
  int degenerate_steps = 0;
  int resampling_steps = 0;
  double mean_ess = 0.0;
  bool ok = true;
  std::string error;
};

inline std::uint64_t filter_stream_index(FilterKind kind) {
  return static_cast<std::uint64_t>(std::find(kAllFilters.begin(), kAllFilters.end(), kind) - kAllFilters.begin());
}

/// Models and data shared by every run of a campaign.
struct CampaignSetup {
  ScenarioModel model;
  std::vector<Trajectory> truths;
  /// priors[trajectory][rerun]
  std::vector<std::vector<GaussianBelief>> priors;
};

inline FilterConfig make_filter_config(const CampaignConfig& cfg, FilterKind kind) {
  FilterConfig fc;
  fc.kind = kind;
  fc.n_particles = cfg.n_particles;
  fc.flow.kind = flow_kind_of(kind);
  fc.flow.schedule = make_schedule(cfg.n_lambda, cfg.lambda_ratio);
  fc.kalman.engine = cfg.kalman_engine;
  fc.kalman.ukf = cfg.ukf;
  fc.flow_covariance = cfg.flow_covariance;
  return fc;
}

inline ScenarioModel make_filter_model(const CampaignConfig& cfg) {
  return cfg.scenario == ScenarioId::kAcoustic ? make_acoustic_filter_model(cfg.acoustic)
                                               : make_sensornet_filter_model(cfg.sensor_network);
}

/// Per-step error: OMAT (p = 1) over target positions, or per-dimension MSE.
inline double step_error(const CampaignConfig& cfg, const Vector& truth, const Vector& estimate) {
  if (cfg.scenario == ScenarioId::kAcoustic) {
    return omat(extract_target_positions(truth), extract_target_positions(estimate), 1.0);
  }
  return mse({truth}, {estimate});
}

inline CampaignSetup prepare_campaign(const CampaignConfig& cfg) {
  validate(cfg);
  CampaignSetup setup;
  setup.model = make_filter_model(cfg);
  for (FilterKind k : cfg.filters) {
    if (needs_transition_density(k) && !setup.model.dynamics->has_transition_density()) {
      throw ConfigError("filter '" + std::string(filter_name(k)) + "' needs a transition density");
    }
  }
  for (int traj = 0; traj < cfg.n_trajectories; ++traj) {
    Rng truth_rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(SeedStream::kTruth), std::uint64_t(traj)}));
    setup.truths.push_back(cfg.scenario == ScenarioId::kAcoustic
                               ? simulate_acoustic_truth(cfg.acoustic, cfg.horizon, truth_rng)
                               : simulate_sensornet_truth(cfg.sensor_network, cfg.horizon, truth_rng));
    std::vector<GaussianBelief> priors;
    for (int rerun = 0; rerun < cfg.n_reruns; ++rerun) {
      Rng prior_rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(SeedStream::kPrior), std::uint64_t(traj),
                                           std::uint64_t(rerun)}));
      priors.push_back(cfg.scenario == ScenarioId::kAcoustic ? draw_acoustic_prior(cfg.acoustic, prior_rng)
                                                             : sensornet_prior(cfg.sensor_network));
    }
    setup.priors.push_back(std::move(priors));
  }
  return setup;
}

/// Runs one filter over one trajectory. Failures are captured in the record.
inline RunRecord run_single(const CampaignConfig& cfg, const CampaignSetup& setup, FilterKind kind, int traj,
                            int rerun) {
  RunRecord rec;
  rec.filter = kind;
  rec.trajectory = traj;
  rec.rerun = rerun;
  const Trajectory& truth = setup.truths[static_cast<std::size_t>(traj)];
  const FilterConfig fc = make_filter_config(cfg, kind);
  double seconds = 0.0;
  double ess_total = 0.0;
  try {
    Rng rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(SeedStream::kFilter), std::uint64_t(traj),
                                   std::uint64_t(rerun), filter_stream_index(kind)}));
    FilterState fs = initial_state(fc, setup.priors[static_cast<std::size_t>(traj)][static_cast<std::size_t>(rerun)],
                                   std::move(rng));
    for (int t = 0; t < truth.horizon(); ++t) {
      const auto start = std::chrono::steady_clock::now();
      StepOutput out = filter_step(fs, truth.measurements[static_cast<std::size_t>(t)], setup.model, fc);
      const auto stop = std::chrono::steady_clock::now();
      if (cfg.timing) seconds += std::chrono::duration<double>(stop - start).count();
      if (!out.estimate.allFinite()) throw Error("non-finite state estimate");
      rec.step_metric.push_back(step_error(cfg, truth.states[static_cast<std::size_t>(t) + 1], out.estimate));
      rec.estimates.push_back(std::move(out.estimate));
      rec.degenerate_steps += out.diagnostics.degenerate_weights ? 1 : 0;
      rec.resampling_steps += out.diagnostics.resampled ? 1 : 0;
      ess_total += out.diagnostics.ess;
    }
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  const auto steps = static_cast<double>(rec.step_metric.size());
  if (steps > 0) {
    double sum = 0.0;
    for (double m : rec.step_metric) sum += m;
    rec.run_metric = sum / steps;
    rec.mean_step_seconds = seconds / steps;
    rec.mean_ess = ess_total / steps;
  }
  return rec;
}

/// Records are ordered by (trajectory, rerun, filter position in cfg.filters)
/// regardless of how many worker threads run them.
inline std::vector<RunRecord> run_campaign(const CampaignConfig& cfg) {
  const CampaignSetup setup = prepare_campaign(cfg);
  struct Job {
    FilterKind kind;
    int traj;
    int rerun;
  };
  std::vector<Job> jobs;
  for (int traj = 0; traj < cfg.n_trajectories; ++traj) {
    for (int rerun = 0; rerun < cfg.n_reruns; ++rerun) {
      for (FilterKind k : cfg.filters) jobs.push_back({k, traj, rerun});
    }
  }
  std::vector<RunRecord> records(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      records[i] = run_single(cfg, setup, jobs[i].kind, jobs[i].traj, jobs[i].rerun);
    }
  };
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const auto n_threads =
      static_cast<std::size_t>(std::min<std::size_t>(cfg.threads > 0 ? std::size_t(cfg.threads) : hw, jobs.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  return records;
}

struct SummaryRow {
  FilterKind filter;
  Eigen::Index n_particles;
  double mean_metric = 0.0;
  double std_metric = 0.0;
  double mean_step_seconds = 0.0;
  /// Metric averaged over every (run, timestep) pair instead of per run first.
  double pooled_metric = 0.0;
  int n_runs = 0;
  int n_failed = 0;
};

/// Per-filter aggregation over successful runs, in cfg.filters order.
inline std::vector<SummaryRow> summarize(const CampaignConfig& cfg, const std::vector<RunRecord>& records) {
  std::vector<SummaryRow> rows;
  for (FilterKind k : cfg.filters) {
    SummaryRow row{k, cfg.n_particles};
    std::vector<double> metrics;
    double seconds = 0.0;
    double pooled = 0.0;
    double pooled_count = 0.0;
    for (const RunRecord& r : records) {
      if (r.filter != k) continue;
      ++row.n_runs;
      if (!r.ok) {
        ++row.n_failed;
        continue;
      }
      metrics.push_back(r.run_metric);
      seconds += r.mean_step_seconds;
      for (double m : r.step_metric) pooled += m;
      pooled_count += static_cast<double>(r.step_metric.size());
    }
    if (!metrics.empty()) {
      const double n = static_cast<double>(metrics.size());
      double sum = 0.0;
      for (double m : metrics) sum += m;
      row.mean_metric = sum / n;
      double sq = 0.0;
      for (double m : metrics) sq += (m - row.mean_metric) * (m - row.mean_metric);
      row.std_metric = metrics.size() > 1 ? std::sqrt(sq / (n - 1.0)) : 0.0;
      row.mean_step_seconds = seconds / n;
      row.pooled_metric = pooled / pooled_count;
    } else {
      row.mean_metric = row.std_metric = row.pooled_metric = std::nan("");
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace pfgpf::harness
