// borekf command line: smooth, forecast, detect, validate and simulate
// subcommands over borehole inclinometer CSV files.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "borekf/config.hpp"
#include "borekf/errors.hpp"
#include "borekf/pipeline.hpp"
#include "borekf/timeparse.hpp"

namespace {

// CLI values are collected as optionals so explicit flags can override the
// config file, which in turn overrides defaults.
struct CliOverlay {
  std::optional<double> dt, gamma, horizon, forecast_dt, em_tol, init_sigma, eps_m;
  std::optional<long> window;
  std::optional<int> em_max_iters, jobs;
  std::optional<bool> gating, gate_per_depth;
  std::optional<std::string> kl_marginal;
  std::optional<std::uint64_t> seed;
  // simulate
  std::optional<std::string> depths, start;
  std::optional<double> sigma, sim_eps_m, sim_dt;
  std::optional<long> steps;
  std::optional<int> boreholes;
};

void add_analysis_options(CLI::App* cmd, CliOverlay& o) {
  cmd->add_option("--dt", o.dt, "Grid spacing in days (default: smallest observation gap)");
  cmd->add_option("--gamma", o.gamma, "Mahalanobis gate threshold (default 5)");
  cmd->add_flag("--gating,!--no-gating", o.gating, "Enable/disable anomaly gating");
  cmd->add_flag("--gate-per-depth", o.gate_per_depth, "Gate each depth separately");
  cmd->add_option("--window", o.window, "Smoother window in grid steps (default 200)");
  cmd->add_option("--horizon", o.horizon, "Forecast/validation horizon in days (default 30)");
  cmd->add_option("--forecast-dt", o.forecast_dt, "Forecast timestep in days (default: grid dt)");
  cmd->add_option("--em-tol", o.em_tol, "EM stopping tolerance (default 1e-4)");
  cmd->add_option("--em-max-iters", o.em_max_iters, "EM iteration cap (default 50; 0 = fixed Q)");
  cmd->add_option("--init-sigma", o.init_sigma, "Initial white-noise intensity for EM");
  cmd->add_option("--eps-m", o.eps_m, "Instrument error coefficient in mm per metre of depth");
  cmd->add_option("--kl-marginal", o.kl_marginal, "KL marginal: full4d or position2d")
      ->check(CLI::IsMember({"full4d", "position2d"}));
  cmd->add_option("--jobs", o.jobs, "Worker threads (default: all cores)");
}

borekf::RunConfig build_config(const std::string& config_path, const CliOverlay& o) {
  borekf::RunConfig c;
  if (!config_path.empty()) c = borekf::load_config_file(config_path, c);

  if (o.dt) c.dt_override = *o.dt;
  if (o.gamma) c.gamma = *o.gamma;
  if (o.gating) c.gating_enabled = *o.gating;
  if (o.gate_per_depth) c.gate_per_depth = *o.gate_per_depth;
  if (o.window) c.window = *o.window;
  if (o.horizon) c.forecast_horizon = *o.horizon;
  if (o.forecast_dt) c.forecast_dt = *o.forecast_dt;
  if (o.em_tol) c.em_tol = *o.em_tol;
  if (o.em_max_iters) c.em_max_iters = *o.em_max_iters;
  if (o.init_sigma) c.init_sigma = *o.init_sigma;
  if (o.eps_m) c.eps_m_default = *o.eps_m;
  if (o.kl_marginal) {
    c.kl_marginal = *o.kl_marginal == "position2d" ? borekf::KlMarginal::position2d
                                                   : borekf::KlMarginal::full4d;
  }
  if (o.jobs) c.jobs = *o.jobs;
  if (o.seed) c.seed = *o.seed;

  if (o.depths) {
    c.sim_depths = borekf::detail::config_number_list("--depths", *o.depths);
  }
  if (o.sigma) c.sim_sigma = *o.sigma;
  if (o.sim_eps_m) c.sim_eps_m = *o.sim_eps_m;
  if (o.sim_dt) c.sim_dt = *o.sim_dt;
  if (o.steps) c.sim_steps = *o.steps;
  if (o.boreholes) c.sim_boreholes = *o.boreholes;
  if (o.start) c.sim_start = *o.start;

  borekf::validate_config(c);
  return c;
}

void print_written(const borekf::PipelineResult& result) {
  for (const auto& f : result.files_written) std::cout << "wrote " << f.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kalman smoothing, forecasting and anomaly gating for borehole "
               "inclinometer time series"};
  app.require_subcommand(1);

  CliOverlay overlay;
  std::string config_path;
  std::string input_path;
  std::string out_dir = "borekf_out";
  std::string out_file = "synthetic.csv";
  app.add_option("--config", config_path, "Key = value configuration file")->expected(1);

  auto* smooth = app.add_subcommand("smooth", "Smoothed latent states plus anomaly report");
  auto* forecast = app.add_subcommand("forecast", "Forecast bands past the last observation");
  auto* detect = app.add_subcommand("detect", "Anomaly gating report only");
  auto* validate = app.add_subcommand("validate", "Hold-out forecast validation metric");
  for (auto* cmd : {smooth, forecast, detect, validate}) {
    cmd->add_option("input", input_path, "Readings CSV file")->required();
    cmd->add_option("--out", out_dir, "Output directory (default borekf_out)");
    add_analysis_options(cmd, overlay);
  }

  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic readings CSV");
  simulate->add_option("--out", out_file, "Output CSV path (default synthetic.csv)");
  simulate->add_option("--depths", overlay.depths, "Comma-separated depths in metres");
  simulate->add_option("--sigma", overlay.sigma, "True white-noise intensity (default 0.01)");
  simulate->add_option("--eps-m", overlay.sim_eps_m, "Instrument error coefficient (default 0.01)");
  simulate->add_option("--dt", overlay.sim_dt, "Sampling interval in days (default 1)");
  simulate->add_option("--steps", overlay.steps, "Number of epochs (default 365)");
  simulate->add_option("--boreholes", overlay.boreholes, "Number of boreholes (default 1)");
  simulate->add_option("--start", overlay.start, "First timestamp, RFC 3339");
  for (auto* cmd : {smooth, forecast, detect, validate, simulate}) {
    cmd->add_option("--seed", overlay.seed, "Random seed (simulate only)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    app.exit(e);
    std::cerr << "borekf: error 2 (config): invalid command line\n";
    return 2;
  }

  try {
    const borekf::RunConfig config = build_config(config_path, overlay);
    if (simulate->parsed()) {
      print_written(borekf::run_simulate(out_file, config));
    } else if (smooth->parsed()) {
      print_written(borekf::run_smooth(input_path, out_dir, config));
    } else if (forecast->parsed()) {
      print_written(borekf::run_forecast(input_path, out_dir, config));
    } else if (detect->parsed()) {
      print_written(borekf::run_detect(input_path, out_dir, config));
    } else if (validate->parsed()) {
      const auto result = borekf::run_validate(input_path, out_dir, config);
      std::printf("%-16s %14s %10s %14s\n", "borehole", "metric_nats", "anomalies",
                  "sigma_alpha");
      for (const auto& r : result.reports) {
        std::printf("%-16s %14.6g %10ld %14.6g\n", r.borehole_id.c_str(), r.metric_value,
                    r.anomalies_removed, r.sigma_alpha);
      }
      print_written(result);
    }
  } catch (const borekf::Error& e) {
    std::cerr << "borekf: error " << e.exit_code() << " (" << borekf::errc_name(e.code())
              << "): " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "borekf: error 1 (internal): " << e.what() << "\n";
    return 1;
  }
  return 0;
}
