#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "borekf/dataset.hpp"
#include "borekf/em.hpp"
#include "borekf/errors.hpp"
#include "borekf/forecast.hpp"
#include "borekf/gating.hpp"
#include "borekf/linalg.hpp"
#include "borekf/stats.hpp"
#include "borekf/time_grid.hpp"
#include "borekf/timeparse.hpp"
#include "borekf/validation.hpp"

namespace borekf {

using json = nlohmann::ordered_json;

namespace artifact {

/// Write through a temp file and rename, so failures never leave partial
/// artifacts behind.
inline void atomic_write_text(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw_io("cannot open " + tmp.string() + " for writing");
    out << content;
    if (!out) throw_io("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw_io("cannot rename " + tmp.string() + " to " + path.string());
}

// NaN entries (unsurveyed depths) are carried as JSON null.
inline json vector_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::isfinite(v[i])) {
      arr.push_back(v[i]);
    } else {
      arr.push_back(nullptr);
    }
  }
  return arr;
}

inline Eigen::VectorXd vector_from_json(const json& arr) {
  Eigen::VectorXd v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] =
        arr[i].is_null() ? std::numeric_limits<double>::quiet_NaN() : arr[i].get<double>();
  }
  return v;
}

inline json covariance_to_json(const Eigen::MatrixXd& m) {
  json j;
  j["dim"] = m.rows();
  j["packed_lower"] = pack_lower_triangular(m);
  return j;
}

inline Eigen::MatrixXd covariance_from_json(const json& j) {
  return unpack_lower_triangular(j.at("packed_lower").get<std::vector<double>>(),
                                 j.at("dim").get<Eigen::Index>());
}

inline json state_to_json(const StateGaussian& s) {
  json j;
  j["grid_index"] = s.grid_index;
  j["mean"] = vector_to_json(s.mean);
  j["covariance"] = covariance_to_json(s.cov);
  return j;
}

inline StateGaussian state_from_json(const json& j) {
  StateGaussian s;
  s.grid_index = j.at("grid_index").get<long>();
  s.mean = vector_from_json(j.at("mean"));
  s.cov = covariance_from_json(j.at("covariance"));
  return s;
}

inline json decision_to_json(const GateDecision& d, double time_days) {
  json j;
  j["grid_index"] = d.grid_index;
  j["time"] = format_rfc3339(time_days);
  j["distance"] = d.distance;
  j["threshold"] = d.threshold;
  j["accepted"] = d.accepted;
  j["chi2_tail"] = chi2_survival(d.distance * d.distance,
                                 static_cast<int>(d.observation.size()));
  j["depth_index"] = d.depth_index;
  j["observation"] = vector_to_json(d.observation);
  return j;
}

inline std::filesystem::path artifact_path(const std::filesystem::path& dir,
                                           const std::string& borehole_id, const char* kind,
                                           const char* ext) {
  return dir / (borehole_id + "." + kind + "." + ext);
}

struct CsvRow {
  std::string line;
  void add(const std::string& field) {
    if (!line.empty()) line += ',';
    line += field;
  }
  void add(double v) { add(format_double(v)); }
  void add(long v) { add(std::to_string(v)); }
};

}  // namespace artifact

/// Smoothed-state artifact: full states as JSON plus a per-depth CSV of
/// positions/velocities with 1-sigma widths for plotting.
inline std::vector<std::filesystem::path> write_smoothed(
    const std::filesystem::path& dir, const BoreholeSeries& series, const SmootherResult& result,
    const GriddedObservations& grid) {
  const StateLayout layout = series.layout();

  json j;
  j["borehole_id"] = series.borehole_id;
  j["instrument"] = instrument_name(series.instrument_kind);
  j["dt_days"] = grid.dt;
  j["origin_time"] = format_rfc3339(grid.origin_time);
  j["origin_time_days"] = grid.origin_time;
  j["depths_m"] = layout.depths;
  j["window_start"] = result.window_start;
  j["em_iterations"] = result.em_iterations;
  j["log_likelihood"] = result.log_likelihood;
  j["process_covariance"] = artifact::covariance_to_json(result.q);
  json states = json::array();
  for (const auto& s : result.smoothed.states) states.push_back(artifact::state_to_json(s));
  j["states"] = std::move(states);

  std::string csv = "time,grid_index,depth_m,a_mm,a_sigma_mm,b_mm,b_sigma_mm,"
                    "va_mm_day,va_sigma,vb_mm_day,vb_sigma\n";
  for (const auto& s : result.smoothed.states) {
    const double t = grid.time_at(s.grid_index - grid.index_offset);
    for (int d = 0; d < layout.n_depths(); ++d) {
      artifact::CsvRow row;
      row.add(format_rfc3339(t));
      row.add(s.grid_index);
      row.add(layout.depths[static_cast<std::size_t>(d)]);
      row.add(s.mean[layout.pos_a(d)]);
      row.add(std::sqrt(std::max(s.cov(layout.pos_a(d), layout.pos_a(d)), 0.0)));
      row.add(s.mean[layout.pos_b(d)]);
      row.add(std::sqrt(std::max(s.cov(layout.pos_b(d), layout.pos_b(d)), 0.0)));
      row.add(s.mean[layout.vel_a(d)]);
      row.add(std::sqrt(std::max(s.cov(layout.vel_a(d), layout.vel_a(d)), 0.0)));
      row.add(s.mean[layout.vel_b(d)]);
      row.add(std::sqrt(std::max(s.cov(layout.vel_b(d), layout.vel_b(d)), 0.0)));
      csv += row.line;
      csv += '\n';
    }
  }

  const auto json_path = artifact::artifact_path(dir, series.borehole_id, "smoothed", "json");
  const auto csv_path = artifact::artifact_path(dir, series.borehole_id, "smoothed", "csv");
  artifact::atomic_write_text(json_path, j.dump(2) + "\n");
  artifact::atomic_write_text(csv_path, csv);
  return {json_path, csv_path};
}

/// Forecast artifact: per-step predictive bands at 1 and 2 sigma per depth per
/// axis. The CSV carries one row per (step, depth).
inline std::vector<std::filesystem::path> write_forecast(
    const std::filesystem::path& dir, const BoreholeSeries& series, const ForecastBundle& bundle,
    const KinematicNoiseFit& fit, double forecast_origin_time) {
  const StateLayout layout = series.layout();

  json j;
  j["borehole_id"] = series.borehole_id;
  j["horizon_days"] = bundle.horizon;
  j["dt_forecast_days"] = bundle.dt_forecast;
  j["forecast_origin_time"] = format_rfc3339(forecast_origin_time);
  j["forecast_origin_time_days"] = forecast_origin_time;
  j["sigma_alpha"] = fit.sigma_alpha;
  j["sigma_alpha_clamped"] = fit.clamped;
  j["fit_residual_norm"] = fit.residual_norm;
  j["depths_m"] = layout.depths;
  json steps = json::array();
  for (const auto& s : bundle.steps) {
    json step;
    step["t_offset_days"] = s.t_offset;
    step["state"] = artifact::state_to_json(s.state);
    step["obs_mean"] = artifact::vector_to_json(s.obs_mean);
    step["obs_covariance"] = artifact::covariance_to_json(s.obs_cov);
    steps.push_back(std::move(step));
  }
  j["steps"] = std::move(steps);

  std::string csv = "step,time,depth_m"
                    ",a_mean_mm,a_sigma_mm,a_lo1_mm,a_hi1_mm,a_lo2_mm,a_hi2_mm"
                    ",b_mean_mm,b_sigma_mm,b_lo1_mm,b_hi1_mm,b_lo2_mm,b_hi2_mm\n";
  long step_no = 0;
  for (const auto& s : bundle.steps) {
    ++step_no;
    const double t = forecast_origin_time + s.t_offset;
    for (int d = 0; d < layout.n_depths(); ++d) {
      artifact::CsvRow row;
      row.add(step_no);
      row.add(format_rfc3339(t));
      row.add(layout.depths[static_cast<std::size_t>(d)]);
      for (const int i : {2 * d, 2 * d + 1}) {
        const double mean = s.obs_mean[i];
        const double sigma = std::sqrt(std::max(s.obs_cov(i, i), 0.0));
        row.add(mean);
        row.add(sigma);
        row.add(mean - sigma);
        row.add(mean + sigma);
        row.add(mean - 2.0 * sigma);
        row.add(mean + 2.0 * sigma);
      }
      csv += row.line;
      csv += '\n';
    }
  }

  const auto json_path = artifact::artifact_path(dir, series.borehole_id, "forecast", "json");
  const auto csv_path = artifact::artifact_path(dir, series.borehole_id, "forecast", "csv");
  artifact::atomic_write_text(json_path, j.dump(2) + "\n");
  artifact::atomic_write_text(csv_path, csv);
  return {json_path, csv_path};
}

/// Gate-decision artifact. An empty decision list still produces a valid file.
inline std::vector<std::filesystem::path> write_anomalies(
    const std::filesystem::path& dir, const BoreholeSeries& series,
    const std::vector<GateDecision>& decisions, const GriddedObservations& grid, double gamma) {
  json j;
  j["borehole_id"] = series.borehole_id;
  j["gamma"] = gamma;
  long rejected = 0;
  json arr = json::array();
  for (const auto& d : decisions) {
    arr.push_back(artifact::decision_to_json(d, grid.time_at(d.grid_index - grid.index_offset)));
    rejected += d.accepted ? 0 : 1;
  }
  j["rejected_count"] = rejected;
  j["decisions"] = std::move(arr);

  const auto path = artifact::artifact_path(dir, series.borehole_id, "anomalies", "json");
  artifact::atomic_write_text(path, j.dump(2) + "\n");
  return {path};
}

inline std::vector<std::filesystem::path> write_validation(const std::filesystem::path& dir,
                                                           const ValidationReport& report) {
  json j;
  j["borehole_id"] = report.borehole_id;
  j["metric_nats"] = report.metric_value;
  j["horizon_days"] = report.horizon_days;
  j["n_forecast_steps"] = report.n_forecast_steps;
  j["n_depths"] = report.n_depths;
  j["dt_days"] = report.dt;
  j["anomalies_removed"] = report.anomalies_removed;
  j["sigma_alpha"] = report.sigma_alpha;
  j["sigma_alpha_clamped"] = report.sigma_clamped;
  json kl = json::array();
  for (Eigen::Index s = 0; s < report.per_step_kl.rows(); ++s) {
    json row = json::array();
    for (Eigen::Index d = 0; d < report.per_step_kl.cols(); ++d) {
      row.push_back(report.per_step_kl(s, d));
    }
    kl.push_back(std::move(row));
  }
  j["per_step_kl"] = std::move(kl);

  const auto path = artifact::artifact_path(dir, report.borehole_id, "validation", "json");
  artifact::atomic_write_text(path, j.dump(2) + "\n");
  return {path};
}

/// Parse rejections from ingestion, one file per run.
inline std::filesystem::path write_rejections(const std::filesystem::path& dir,
                                              const ParseResult& parsed) {
  json j;
  j["total_rows"] = parsed.total_rows;
  j["accepted_rows"] = parsed.accepted_rows();
  json arr = json::array();
  for (const auto& r : parsed.rejected) {
    json row;
    row["line"] = r.line_number;
    row["reason"] = r.reason;
    row["raw"] = r.raw;
    arr.push_back(std::move(row));
  }
  j["rejected"] = std::move(arr);
  const auto path = dir / "rejections.json";
  artifact::atomic_write_text(path, j.dump(2) + "\n");
  return path;
}

/// Round-trip readers for the JSON artifact forms.
inline json read_json_artifact(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw_io("cannot open artifact: " + path.string());
  json j;
  in >> j;
  return j;
}

inline ForecastBundle read_forecast_json(const std::filesystem::path& path) {
  const json j = read_json_artifact(path);
  ForecastBundle bundle;
  bundle.horizon = j.at("horizon_days").get<double>();
  bundle.dt_forecast = j.at("dt_forecast_days").get<double>();
  for (const auto& step : j.at("steps")) {
    ForecastStep s;
    s.t_offset = step.at("t_offset_days").get<double>();
    s.state = artifact::state_from_json(step.at("state"));
    s.obs_mean = artifact::vector_from_json(step.at("obs_mean"));
    s.obs_cov = artifact::covariance_from_json(step.at("obs_covariance"));
    bundle.steps.push_back(std::move(s));
  }
  return bundle;
}

}  // namespace borekf
