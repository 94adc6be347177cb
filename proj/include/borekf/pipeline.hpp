#pragma once

#include <atomic>
#include <exception>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "borekf/artifacts.hpp"
#include "borekf/config.hpp"
#include "borekf/dataset.hpp"
#include "borekf/em.hpp"
#include "borekf/errors.hpp"
#include "borekf/forecast.hpp"
#include "borekf/synthetic.hpp"
#include "borekf/time_grid.hpp"
#include "borekf/timeparse.hpp"
#include "borekf/validation.hpp"

namespace borekf {

namespace detail {

/// Run fn(i) for i in [0, count) across `jobs` worker threads. The first
/// failure (lowest index) is rethrown after all workers join.
template <typename Fn>
void parallel_for_indices(std::size_t count, int jobs, Fn&& fn) {
  int workers = jobs > 0 ? jobs : static_cast<int>(std::thread::hardware_concurrency());
  if (workers < 1) workers = 1;
  workers = std::min<int>(workers, static_cast<int>(count));

  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct BoreholePrep {
  StateLayout layout;
  GriddedObservations grid;
  ModelMatrices model;
  EmOptions em;
};

inline BoreholePrep prepare_borehole(BoreholeSeries& series, const RunConfig& config) {
  series.eps_m = config.eps_m_for(series.borehole_id);
  series.instrument_kind = config.instrument_for(series.borehole_id);

  BoreholePrep prep;
  prep.layout = series.layout();
  const auto epochs = series.observation_epochs();
  std::vector<double> times;
  times.reserve(epochs.size());
  for (const auto& e : epochs) times.push_back(e.time_days);
  const double dt =
      config.dt_override.has_value() ? *config.dt_override : select_dt(times);
  prep.grid = remap(epochs, dt);
  prep.model = make_model(prep.layout, dt, series.eps_m, {});
  prep.em.window = config.window;
  prep.em.tol = config.em_tol;
  prep.em.max_iters = config.em_max_iters;
  prep.em.init_sigma = config.init_sigma;
  prep.em.gate.enabled = config.gating_enabled;
  prep.em.gate.gamma = config.gamma;
  prep.em.gate.per_depth = config.gate_per_depth;
  return prep;
}

/// EM over the recent window, then one full-length pass with the learned Q so
/// artifacts cover the whole series.
inline SmootherResult smooth_full_series(const BoreholePrep& prep) {
  SmootherResult windowed = em_learn_q(prep.grid, prep.model, std::nullopt, prep.em);
  if (prep.grid.n_slots() <= prep.em.window) return windowed;

  ModelMatrices learned = prep.model;
  learned.Q = windowed.q;
  const StateGaussian prior = default_initial_prior(prep.grid, learned);
  FilterTrace trace = kalman_forward(prep.grid, learned, prior, prep.em.gate);
  SmootherResult full;
  full.smoothed = rts_smooth(trace, learned);
  full.q = windowed.q;
  full.em_iterations = windowed.em_iterations;
  full.log_likelihood = trace.log_likelihood;
  full.ll_trace = std::move(windowed.ll_trace);
  full.decisions = std::move(trace.decisions);
  full.window_start = 0;
  return full;
}

}  // namespace detail

struct PipelineResult {
  std::vector<std::string> borehole_ids;
  std::vector<std::filesystem::path> files_written;
  std::vector<ValidationReport> reports;  // validate only
};

inline ParseResult parse_input(const std::string& input_path) {
  ParseResult parsed = parse_readings_csv_file(input_path);
  if (parsed.series.empty()) throw_insufficient("input contains no usable readings");
  return parsed;
}

/// smooth: grid -> gated filter -> RTS + EM -> smoothed-state and anomaly artifacts.
inline PipelineResult run_smooth(const std::string& input_path,
                                 const std::filesystem::path& out_dir, const RunConfig& config) {
  ParseResult parsed = parse_input(input_path);
  std::filesystem::create_directories(out_dir);

  PipelineResult result;
  result.borehole_ids.resize(parsed.series.size());
  std::vector<std::vector<std::filesystem::path>> files(parsed.series.size());

  detail::parallel_for_indices(parsed.series.size(), config.jobs, [&](std::size_t i) {
    auto& series = parsed.series[i];
    const auto prep = detail::prepare_borehole(series, config);
    const SmootherResult smoothed = detail::smooth_full_series(prep);
    auto written = write_smoothed(out_dir, series, smoothed, prep.grid);
    auto anomalies =
        write_anomalies(out_dir, series, smoothed.decisions, prep.grid, config.gamma);
    written.insert(written.end(), anomalies.begin(), anomalies.end());
    files[i] = std::move(written);
    result.borehole_ids[i] = series.borehole_id;
  });

  for (auto& f : files) {
    result.files_written.insert(result.files_written.end(), f.begin(), f.end());
  }
  if (!parsed.rejected.empty()) {
    result.files_written.push_back(write_rejections(out_dir, parsed));
  }
  return result;
}

/// detect: the smooth pipeline, emitting only the gating report.
inline PipelineResult run_detect(const std::string& input_path,
                                 const std::filesystem::path& out_dir, const RunConfig& config) {
  ParseResult parsed = parse_input(input_path);
  std::filesystem::create_directories(out_dir);

  PipelineResult result;
  result.borehole_ids.resize(parsed.series.size());
  std::vector<std::vector<std::filesystem::path>> files(parsed.series.size());

  detail::parallel_for_indices(parsed.series.size(), config.jobs, [&](std::size_t i) {
    auto& series = parsed.series[i];
    const auto prep = detail::prepare_borehole(series, config);
    const SmootherResult smoothed = detail::smooth_full_series(prep);
    files[i] = write_anomalies(out_dir, series, smoothed.decisions, prep.grid, config.gamma);
    result.borehole_ids[i] = series.borehole_id;
  });

  for (auto& f : files) {
    result.files_written.insert(result.files_written.end(), f.begin(), f.end());
  }
  return result;
}

/// forecast: EM-smooth the full series, project Q onto the kinematic template,
/// propagate past the last observation and emit band artifacts.
inline PipelineResult run_forecast(const std::string& input_path,
                                   const std::filesystem::path& out_dir,
                                   const RunConfig& config) {
  ParseResult parsed = parse_input(input_path);
  std::filesystem::create_directories(out_dir);

  PipelineResult result;
  result.borehole_ids.resize(parsed.series.size());
  std::vector<std::vector<std::filesystem::path>> files(parsed.series.size());

  detail::parallel_for_indices(parsed.series.size(), config.jobs, [&](std::size_t i) {
    auto& series = parsed.series[i];
    const auto prep = detail::prepare_borehole(series, config);
    const SmootherResult smoothed = em_learn_q(prep.grid, prep.model, std::nullopt, prep.em);
    const KinematicNoiseFit fit =
        fit_sigma_alpha(smoothed.q, build_noise_template(prep.layout, prep.model.dt));
    const double dt_forecast = config.forecast_dt.value_or(prep.model.dt);
    const ForecastBundle bundle =
        forecast_states(smoothed.smoothed.states.back(), prep.layout, fit, dt_forecast,
                        config.forecast_horizon, prep.model);
    const double origin = prep.grid.time_at(prep.grid.n_slots() - 1);
    files[i] = write_forecast(out_dir, series, bundle, fit, origin);
    result.borehole_ids[i] = series.borehole_id;
  });

  for (auto& f : files) {
    result.files_written.insert(result.files_written.end(), f.begin(), f.end());
  }
  return result;
}

/// validate: hold-out KL metric per borehole plus a run-level summary table.
inline PipelineResult run_validate(const std::string& input_path,
                                   const std::filesystem::path& out_dir,
                                   const RunConfig& config) {
  ParseResult parsed = parse_input(input_path);
  std::filesystem::create_directories(out_dir);

  PipelineResult result;
  result.borehole_ids.resize(parsed.series.size());
  result.reports.resize(parsed.series.size());
  std::vector<std::vector<std::filesystem::path>> files(parsed.series.size());

  detail::parallel_for_indices(parsed.series.size(), config.jobs, [&](std::size_t i) {
    auto& series = parsed.series[i];
    series.eps_m = config.eps_m_for(series.borehole_id);
    series.instrument_kind = config.instrument_for(series.borehole_id);
    ValidationReport report = validate_forecast(series, config.validation_options());
    files[i] = write_validation(out_dir, report);
    result.borehole_ids[i] = series.borehole_id;
    result.reports[i] = std::move(report);
  });

  std::string summary = "borehole_id,metric_nats,anomalies_removed,sigma_alpha\n";
  for (const auto& r : result.reports) {
    artifact::CsvRow row;
    row.add(r.borehole_id);
    row.add(r.metric_value);
    row.add(r.anomalies_removed);
    row.add(r.sigma_alpha);
    summary += row.line;
    summary += '\n';
  }
  const auto summary_path = out_dir / "validation_summary.csv";
  artifact::atomic_write_text(summary_path, summary);

  for (auto& f : files) {
    result.files_written.insert(result.files_written.end(), f.begin(), f.end());
  }
  result.files_written.push_back(summary_path);
  return result;
}

/// simulate: synthetic borehole CSV in the ingestion schema, deterministic per
/// seed. Borehole b uses seed + b.
inline std::string render_simulated_csv(const RunConfig& config) {
  const StateLayout layout = make_layout(config.sim_depths);
  const double start = parse_rfc3339(config.sim_start);

  std::string csv = std::string(kReadingsCsvHeader) + "\n";
  for (int b = 0; b < config.sim_boreholes; ++b) {
    std::string id = "BH";
    const std::string num = std::to_string(b + 1);
    id += std::string(num.size() < 2 ? 2 - num.size() : 0, '0') + num;
    const BoreholeSeries series =
        generate_synthetic(layout, config.sim_sigma, config.sim_eps_m, config.sim_dt,
                           config.sim_steps, config.seed + static_cast<std::uint64_t>(b), id,
                           start);
    for (const auto& r : series.readings) {
      artifact::CsvRow row;
      row.add(series.borehole_id);
      row.add(format_rfc3339(r.time_days));
      row.add(r.depth_m);
      row.add(r.a_mm);
      row.add(r.b_mm);
      csv += row.line;
      csv += '\n';
    }
  }
  return csv;
}

inline PipelineResult run_simulate(const std::filesystem::path& out_file,
                                   const RunConfig& config) {
  const std::string csv = render_simulated_csv(config);
  if (out_file.has_parent_path()) std::filesystem::create_directories(out_file.parent_path());
  artifact::atomic_write_text(out_file, csv);
  PipelineResult result;
  result.files_written.push_back(out_file);
  return result;
}

}  // namespace borekf
