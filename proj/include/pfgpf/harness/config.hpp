#pragma once

// Campaign configuration: a JSON document naming the scenario, the filters
// and the Monte Carlo protocol.

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "pfgpf/errors.hpp"
#include "pfgpf/filters.hpp"
#include "pfgpf/scenarios/acoustic.hpp"
#include "pfgpf/scenarios/sensor_network.hpp"

namespace pfgpf::harness {

using nlohmann::json;

enum class ScenarioId { kAcoustic, kSensorNetwork };
enum class OutputFormat { kCsv, kJson };

inline std::string scenario_name(ScenarioId id) {
  return id == ScenarioId::kAcoustic ? "acoustic" : "sensor_network";
}

inline int default_horizon(ScenarioId id) { return id == ScenarioId::kAcoustic ? 40 : 10; }

struct CampaignConfig {
  ScenarioId scenario = ScenarioId::kAcoustic;
  AcousticConfig acoustic;
  SensorNetConfig sensor_network;
  std::vector<FilterKind> filters;
  Eigen::Index n_particles = 100;
  int n_lambda = 29;
  double lambda_ratio = 1.2;
  KalmanEngine kalman_engine = KalmanEngine::kEkf;
  UkfParams ukf;
  FlowCovariance flow_covariance = FlowCovariance::kKalman;
  int horizon = 40;
  int n_trajectories = 10;
  int n_reruns = 1;
  std::uint64_t seed = 1;
  std::string output_dir = "results";
  OutputFormat format = OutputFormat::kCsv;
  /// When false no wall-clock is recorded and every output is a pure
  /// function of the configuration.
  bool timing = true;
  /// Worker threads; 0 picks the hardware concurrency.
  int threads = 0;
};

namespace detail {

inline void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.contains(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read_if(const json& obj, const char* key, T& target) {
  if (!obj.contains(key)) return;
  try {
    target = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

inline Vector read_vector(const json& value, const char* key) {
  if (!value.is_array()) throw ConfigError(std::string("'") + key + "' must be an array");
  Vector out(static_cast<Eigen::Index>(value.size()));
  for (std::size_t i = 0; i < value.size(); ++i) {
    if (!value[i].is_number()) throw ConfigError(std::string("'") + key + "' must hold numbers");
    out(static_cast<Eigen::Index>(i)) = value[i].get<double>();
  }
  return out;
}

inline Matrix read_matrix(const json& value, const char* key) {
  if (!value.is_array() || value.empty()) throw ConfigError(std::string("'") + key + "' must be a nested array");
  const auto rows = static_cast<Eigen::Index>(value.size());
  const auto cols = static_cast<Eigen::Index>(value[0].size());
  Matrix out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Vector row = read_vector(value[static_cast<std::size_t>(r)], key);
    if (row.size() != cols) throw ConfigError(std::string("'") + key + "' rows differ in length");
    out.row(r) = row.transpose();
  }
  return out;
}

inline void read_acoustic(const json& p, AcousticConfig& cfg) {
  reject_unknown_keys(p,
                      {"n_targets", "region_size", "sensors", "amplitude", "distance_offset",
                       "measurement_variance", "truth_process_cov", "filter_process_cov", "true_initial_state",
                       "prior_position_std", "prior_velocity_std", "keep_targets_in_region"},
                      "scenario_params");
  read_if(p, "n_targets", cfg.n_targets);
  read_if(p, "region_size", cfg.region_size);
  read_if(p, "amplitude", cfg.amplitude);
  read_if(p, "distance_offset", cfg.distance_offset);
  read_if(p, "measurement_variance", cfg.measurement_variance);
  read_if(p, "prior_position_std", cfg.prior_position_std);
  read_if(p, "prior_velocity_std", cfg.prior_velocity_std);
  read_if(p, "keep_targets_in_region", cfg.keep_targets_in_region);
  if (p.contains("sensors")) {
    const Matrix s = read_matrix(p.at("sensors"), "sensors");
    if (s.cols() != 2) throw ConfigError("'sensors' must be a list of [x, y] pairs");
    cfg.sensors = s;
  }
  if (p.contains("truth_process_cov")) cfg.truth_process_cov = read_matrix(p.at("truth_process_cov"), "truth_process_cov");
  if (p.contains("filter_process_cov")) {
    cfg.filter_process_cov = read_matrix(p.at("filter_process_cov"), "filter_process_cov");
  }
  if (p.contains("true_initial_state")) {
    cfg.true_initial_state = read_vector(p.at("true_initial_state"), "true_initial_state");
  }
}

inline void read_sensor_network(const json& p, SensorNetConfig& cfg) {
  reject_unknown_keys(p, {"dim", "alpha0", "alpha1", "beta", "ar_coeff", "gamma", "nu", "m1", "m2", "prior_variance"},
                      "scenario_params");
  read_if(p, "dim", cfg.dim);
  read_if(p, "alpha0", cfg.alpha0);
  read_if(p, "alpha1", cfg.alpha1);
  read_if(p, "beta", cfg.beta);
  read_if(p, "ar_coeff", cfg.ar_coeff);
  read_if(p, "nu", cfg.nu);
  read_if(p, "m1", cfg.m1);
  read_if(p, "m2", cfg.m2);
  read_if(p, "prior_variance", cfg.prior_variance);
  if (p.contains("gamma")) {
    const json& g = p.at("gamma");
    cfg.gamma = g.is_number() ? Vector::Constant(1, g.get<double>()) : read_vector(g, "gamma");
  }
}

}  // namespace detail

inline std::vector<FilterKind> parse_filter_list(const std::vector<std::string>& names) {
  std::vector<FilterKind> out;
  for (const auto& name : names) {
    const auto kind = parse_filter(name);
    if (!kind) throw ConfigError("unknown filter '" + name + "'");
    out.push_back(*kind);
  }
  return out;
}

/// Throws ConfigError describing the first problem found.
inline void validate(const CampaignConfig& cfg) {
  if (cfg.filters.empty()) throw ConfigError("filter list is empty");
  std::set<FilterKind> seen;
  for (FilterKind k : cfg.filters) {
    if (!seen.insert(k).second) throw ConfigError("filter '" + std::string(filter_name(k)) + "' listed twice");
  }
  if (cfg.n_particles < 1) throw ConfigError("n_particles must be positive");
  if (cfg.n_lambda < 1) throw ConfigError("n_lambda must be positive");
  if (!(cfg.lambda_ratio >= 1.0)) throw ConfigError("lambda_ratio must be >= 1");
  if (cfg.horizon < 1) throw ConfigError("horizon must be positive");
  if (cfg.n_trajectories < 1) throw ConfigError("n_trajectories must be positive");
  if (cfg.n_reruns < 1) throw ConfigError("n_reruns must be positive");
  if (cfg.threads < 0) throw ConfigError("threads must be >= 0");
  if (cfg.kalman_engine == KalmanEngine::kUkf && !(cfg.ukf.alpha > 0.0 && cfg.ukf.alpha <= 1.0)) {
    throw ConfigError("UKF alpha must lie in (0, 1]");
  }
  if (cfg.scenario == ScenarioId::kAcoustic) {
    const AcousticConfig& a = cfg.acoustic;
    if (a.n_targets < 1) throw ConfigError("n_targets must be positive");
    if (a.true_initial_state.size() != a.state_dim()) throw ConfigError("true_initial_state must have 4 * n_targets entries");
    if (a.truth_process_cov.rows() != 4 || a.truth_process_cov.cols() != 4 || a.filter_process_cov.rows() != 4 ||
        a.filter_process_cov.cols() != 4) {
      throw ConfigError("per-target process covariances must be 4x4");
    }
    if (a.n_sensors() < 1) throw ConfigError("at least one sensor required");
    if (!(a.measurement_variance > 0.0)) throw ConfigError("measurement_variance must be positive");
  } else {
    cfg.sensor_network.validate();
  }
}

inline CampaignConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  detail::reject_unknown_keys(doc,
                              {"scenario", "scenario_params", "filters", "n_particles", "n_lambda", "lambda_ratio",
                               "kalman", "flow_covariance", "horizon", "n_trajectories", "n_reruns", "seed",
                               "output_dir", "format", "timing", "threads"},
                              "config");
  CampaignConfig cfg;
  std::string scenario = "acoustic";
  detail::read_if(doc, "scenario", scenario);
  if (scenario == "acoustic") {
    cfg.scenario = ScenarioId::kAcoustic;
  } else if (scenario == "sensor_network") {
    cfg.scenario = ScenarioId::kSensorNetwork;
  } else {
    throw ConfigError("unknown scenario '" + scenario + "'");
  }
  if (doc.contains("scenario_params")) {
    if (cfg.scenario == ScenarioId::kAcoustic) {
      detail::read_acoustic(doc.at("scenario_params"), cfg.acoustic);
    } else {
      detail::read_sensor_network(doc.at("scenario_params"), cfg.sensor_network);
    }
  }
  std::vector<std::string> filters;
  detail::read_if(doc, "filters", filters);
  cfg.filters = parse_filter_list(filters);
  detail::read_if(doc, "n_particles", cfg.n_particles);
  detail::read_if(doc, "n_lambda", cfg.n_lambda);
  detail::read_if(doc, "lambda_ratio", cfg.lambda_ratio);
  cfg.horizon = default_horizon(cfg.scenario);
  detail::read_if(doc, "horizon", cfg.horizon);
  detail::read_if(doc, "n_trajectories", cfg.n_trajectories);
  detail::read_if(doc, "n_reruns", cfg.n_reruns);
  detail::read_if(doc, "seed", cfg.seed);
  detail::read_if(doc, "output_dir", cfg.output_dir);
  detail::read_if(doc, "timing", cfg.timing);
  detail::read_if(doc, "threads", cfg.threads);
  if (doc.contains("kalman")) {
    const json& k = doc.at("kalman");
    detail::reject_unknown_keys(k, {"engine", "alpha", "beta", "kappa"}, "kalman");
    std::string engine = "ekf";
    detail::read_if(k, "engine", engine);
    if (engine == "ekf") {
      cfg.kalman_engine = KalmanEngine::kEkf;
    } else if (engine == "ukf") {
      cfg.kalman_engine = KalmanEngine::kUkf;
    } else {
      throw ConfigError("unknown kalman engine '" + engine + "'");
    }
    detail::read_if(k, "alpha", cfg.ukf.alpha);
    detail::read_if(k, "beta", cfg.ukf.beta);
    if (k.contains("kappa") && !k.at("kappa").is_null()) cfg.ukf.kappa = k.at("kappa").get<double>();
  }
  std::string flow_cov = "kalman";
  detail::read_if(doc, "flow_covariance", flow_cov);
  if (flow_cov == "kalman") {
    cfg.flow_covariance = FlowCovariance::kKalman;
  } else if (flow_cov == "ensemble") {
    cfg.flow_covariance = FlowCovariance::kEnsemble;
  } else {
    throw ConfigError("unknown flow_covariance '" + flow_cov + "'");
  }
  std::string format = "csv";
  detail::read_if(doc, "format", format);
  if (format == "csv") {
    cfg.format = OutputFormat::kCsv;
  } else if (format == "json") {
    cfg.format = OutputFormat::kJson;
  } else {
    throw ConfigError("unknown format '" + format + "'");
  }
  return cfg;
}

inline CampaignConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(doc);
}

/// Full-scale campaign: 100 trajectories, with 5 reruns per trajectory
/// for the acoustic scenario.
inline void apply_paper_scale(CampaignConfig& cfg) {
  cfg.n_trajectories = 100;
  cfg.n_reruns = cfg.scenario == ScenarioId::kAcoustic ? 5 : 1;
}

}  // namespace pfgpf::harness
