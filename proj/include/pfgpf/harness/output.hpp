#pragma once

// Result tables: a per-timestep detail file (CSV or JSON) and a per-filter
// summary CSV.

#include <array>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <string>
#include <system_error>
#include <vector>

#include "json.hpp"
#include "pfgpf/harness/campaign.hpp"

namespace pfgpf::harness {

/// Shortest round-trip decimal form; "nan" / "inf" / "-inf" otherwise.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  return out;
}

inline void finish_output(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline Eigen::Index estimate_dim(const std::vector<RunRecord>& records) {
  for (const RunRecord& r : records) {
    if (!r.estimates.empty()) return r.estimates.front().size();
  }
  return 0;
}

inline void write_detail_csv(const std::vector<RunRecord>& records, const std::filesystem::path& path) {
  auto out = open_output(path);
  const Eigen::Index d = estimate_dim(records);
  out << "filter,trajectory_id,rerun_id,timestep";
  for (Eigen::Index k = 0; k < d; ++k) out << ",est_" << k;
  out << ",step_metric,run_metric,status\n";
  for (const RunRecord& r : records) {
    const std::string status = r.ok ? "ok" : "failed: " + r.error;
    const std::string prefix =
        std::string(filter_name(r.filter)) + "," + std::to_string(r.trajectory) + "," + std::to_string(r.rerun) + ",";
    if (r.estimates.empty()) {
      // A run that failed before its first estimate still gets one row.
      out << prefix << "-1";
      for (Eigen::Index k = 0; k < d; ++k) out << ",";
      out << ",,," << csv_escape(status) << "\n";
      continue;
    }
    for (std::size_t t = 0; t < r.estimates.size(); ++t) {
      out << prefix << t + 1;
      for (Eigen::Index k = 0; k < r.estimates[t].size(); ++k) out << "," << format_number(r.estimates[t](k));
      out << "," << format_number(r.step_metric[t]) << "," << format_number(r.run_metric) << ","
          << csv_escape(status) << "\n";
    }
  }
  finish_output(out, path);
}

inline void write_detail_json(const std::vector<RunRecord>& records, const std::filesystem::path& path) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const RunRecord& r : records) {
    nlohmann::ordered_json run;
    run["filter"] = std::string(filter_name(r.filter));
    run["trajectory_id"] = r.trajectory;
    run["rerun_id"] = r.rerun;
    run["status"] = r.ok ? "ok" : "failed";
    if (!r.ok) run["error"] = r.error;
    run["run_metric"] = r.run_metric;
    run["mean_step_seconds"] = r.mean_step_seconds;
    run["mean_ess"] = r.mean_ess;
    run["resampling_steps"] = r.resampling_steps;
    run["degenerate_steps"] = r.degenerate_steps;
    auto steps = nlohmann::ordered_json::array();
    for (std::size_t t = 0; t < r.estimates.size(); ++t) {
      nlohmann::ordered_json step;
      step["timestep"] = t + 1;
      step["estimate"] = std::vector<double>(r.estimates[t].data(), r.estimates[t].data() + r.estimates[t].size());
      step["step_metric"] = r.step_metric[t];
      steps.push_back(std::move(step));
    }
    run["steps"] = std::move(steps);
    doc.push_back(std::move(run));
  }
  auto out = open_output(path);
  out << doc.dump(1) << "\n";
  finish_output(out, path);
}

inline void write_summary_csv(const std::vector<SummaryRow>& rows, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << "filter,n_particles,mean_metric,std_metric,mean_step_seconds,pooled_metric,n_runs,n_failed\n";
  for (const SummaryRow& row : rows) {
    out << filter_name(row.filter) << "," << row.n_particles << "," << format_number(row.mean_metric) << ","
        << format_number(row.std_metric) << "," << format_number(row.mean_step_seconds) << ","
        << format_number(row.pooled_metric) << "," << row.n_runs << "," << row.n_failed << "\n";
  }
  finish_output(out, path);
}

}  // namespace detail

/// Writes detail.csv (or detail.json) and summary.csv into cfg.output_dir.
inline void emit_results(const CampaignConfig& cfg, const std::vector<RunRecord>& records) {
  if (records.empty()) throw Error("emit_results: no results to write");
  const std::filesystem::path dir(cfg.output_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory '" + dir.string() + "': " + ec.message());
  if (cfg.format == OutputFormat::kCsv) {
    detail::write_detail_csv(records, dir / "detail.csv");
  } else {
    detail::write_detail_json(records, dir / "detail.json");
  }
  detail::write_summary_csv(summarize(cfg, records), dir / "summary.csv");
}

}  // namespace pfgpf::harness
