#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "borekf/dataset.hpp"
#include "borekf/errors.hpp"
#include "borekf/validation.hpp"

namespace borekf {

/// Full run configuration. Every numeric field is validated before any data
/// file is opened; CLI flags override config-file values.
struct RunConfig {
  std::optional<double> dt_override;       // grid spacing, days
  double gamma = 5.0;                      // Mahalanobis gate threshold
  bool gating_enabled = true;
  bool gate_per_depth = false;
  long window = 200;                       // smoother window, grid steps
  double forecast_horizon = 30.0;          // days
  std::optional<double> forecast_dt;       // defaults to the grid spacing
  double em_tol = 1e-4;
  int em_max_iters = 50;
  std::optional<double> init_sigma;        // initial white-noise intensity override
  std::optional<double> eps_m_default;     // instrument error coefficient, mm/m
  std::map<std::string, double> eps_m_by_borehole;
  std::map<std::string, InstrumentKind> instrument_by_borehole;
  KlMarginal kl_marginal = KlMarginal::full4d;
  std::uint64_t seed = 0;
  int jobs = 0;  // 0 = all hardware threads

  // simulate subcommand
  std::vector<double> sim_depths = {1.5, 3.0, 5.0};
  double sim_sigma = 0.01;
  double sim_eps_m = 0.01;
  double sim_dt = 1.0;
  long sim_steps = 365;
  int sim_boreholes = 1;
  std::string sim_start = "2020-01-01T00:00:00Z";

  double eps_m_for(const std::string& borehole_id) const {
    const auto it = eps_m_by_borehole.find(borehole_id);
    if (it != eps_m_by_borehole.end()) return it->second;
    if (eps_m_default.has_value()) return *eps_m_default;
    throw_config("no eps_m configured for borehole " + borehole_id +
                 " (use --eps-m or a borehole." + borehole_id + ".eps_m config entry)");
  }

  InstrumentKind instrument_for(const std::string& borehole_id) const {
    const auto it = instrument_by_borehole.find(borehole_id);
    return it != instrument_by_borehole.end() ? it->second : InstrumentKind::manual_probe;
  }

  ValidationOptions validation_options() const {
    ValidationOptions v;
    v.dt_override = dt_override;
    v.horizon_days = forecast_horizon;
    v.window = window;
    v.em_tol = em_tol;
    v.em_max_iters = em_max_iters;
    v.init_sigma = init_sigma;
    v.gating_enabled = gating_enabled;
    v.gamma = gamma;
    v.gate_per_depth = gate_per_depth;
    v.kl_marginal = kl_marginal;
    return v;
  }
};

inline void validate_config(const RunConfig& c) {
  const auto positive = [](std::optional<double> v, const char* name) {
    if (v.has_value() && (!std::isfinite(*v) || *v <= 0.0)) {
      throw_config(std::string(name) + " must be finite and > 0");
    }
  };
  positive(c.dt_override, "dt");
  positive(c.forecast_dt, "forecast_dt");
  positive(c.eps_m_default, "eps_m");
  if (!std::isfinite(c.gamma) || c.gamma <= 0.0) throw_config("gamma must be finite and > 0");
  if (c.window < 10) throw_config("window must be at least 10 grid steps");
  if (!std::isfinite(c.forecast_horizon) || c.forecast_horizon <= 0.0) {
    throw_config("forecast_horizon must be finite and > 0");
  }
  if (!std::isfinite(c.em_tol) || c.em_tol <= 0.0) throw_config("em_tol must be finite and > 0");
  if (c.em_max_iters < 0) throw_config("em_max_iters must be >= 0");
  if (c.init_sigma.has_value() && !(*c.init_sigma >= 0.0)) {
    throw_config("init_sigma must be >= 0");
  }
  for (const auto& [id, eps] : c.eps_m_by_borehole) {
    if (!std::isfinite(eps) || eps <= 0.0) throw_config("eps_m for " + id + " must be > 0");
  }
  if (c.jobs < 0) throw_config("jobs must be >= 0");
  if (c.sim_depths.empty()) throw_config("sim_depths must not be empty");
  for (std::size_t i = 0; i < c.sim_depths.size(); ++i) {
    if (!std::isfinite(c.sim_depths[i]) || c.sim_depths[i] <= 0.0 ||
        (i > 0 && c.sim_depths[i] <= c.sim_depths[i - 1])) {
      throw_config("sim_depths must be positive and strictly increasing");
    }
  }
  if (!(c.sim_sigma >= 0.0)) throw_config("sim_sigma must be >= 0");
  if (!(c.sim_eps_m >= 0.0)) throw_config("sim_eps_m must be >= 0");
  if (!std::isfinite(c.sim_dt) || c.sim_dt <= 0.0) throw_config("sim_dt must be > 0");
  if (c.sim_steps < 2) throw_config("sim_steps must be at least 2");
  if (c.sim_boreholes < 1) throw_config("sim_boreholes must be at least 1");
}

namespace detail {

inline double config_number(const std::string& key, const std::string& value) {
  double out = 0.0;
  const std::string_view sv = trim(value);
  const auto res = std::from_chars(sv.data(), sv.data() + sv.size(), out);
  if (res.ec != std::errc() || res.ptr != sv.data() + sv.size()) {
    throw_config("config key '" + key + "' needs a number, got '" + value + "'");
  }
  return out;
}

inline bool config_bool(const std::string& key, const std::string& value) {
  const std::string_view sv = trim(value);
  if (sv == "true" || sv == "on" || sv == "1") return true;
  if (sv == "false" || sv == "off" || sv == "0") return false;
  throw_config("config key '" + key + "' needs true/false, got '" + value + "'");
}

inline std::vector<double> config_number_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= value.size()) {
    const std::size_t comma = value.find(',', start);
    const std::string item =
        value.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!detail::trim(item).empty()) out.push_back(config_number(key, item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (out.empty()) throw_config("config key '" + key + "' needs a comma-separated list");
  return out;
}

}  // namespace detail

/// Apply one `key = value` pair. Shared by the config-file loader and tests.
inline void apply_config_entry(RunConfig& c, const std::string& key, const std::string& value) {
  if (key == "dt") {
    c.dt_override = detail::config_number(key, value);
  } else if (key == "gamma") {
    c.gamma = detail::config_number(key, value);
  } else if (key == "gating") {
    c.gating_enabled = detail::config_bool(key, value);
  } else if (key == "gate_per_depth") {
    c.gate_per_depth = detail::config_bool(key, value);
  } else if (key == "window") {
    c.window = static_cast<long>(detail::config_number(key, value));
  } else if (key == "forecast_horizon") {
    c.forecast_horizon = detail::config_number(key, value);
  } else if (key == "forecast_dt") {
    c.forecast_dt = detail::config_number(key, value);
  } else if (key == "em_tol") {
    c.em_tol = detail::config_number(key, value);
  } else if (key == "em_max_iters") {
    c.em_max_iters = static_cast<int>(detail::config_number(key, value));
  } else if (key == "init_sigma") {
    c.init_sigma = detail::config_number(key, value);
  } else if (key == "eps_m") {
    c.eps_m_default = detail::config_number(key, value);
  } else if (key == "kl_marginal") {
    const std::string_view v = detail::trim(value);
    if (v == "full4d") {
      c.kl_marginal = KlMarginal::full4d;
    } else if (v == "position2d") {
      c.kl_marginal = KlMarginal::position2d;
    } else {
      throw_config("kl_marginal must be full4d or position2d");
    }
  } else if (key == "seed") {
    c.seed = static_cast<std::uint64_t>(detail::config_number(key, value));
  } else if (key == "jobs") {
    c.jobs = static_cast<int>(detail::config_number(key, value));
  } else if (key == "sim_depths") {
    c.sim_depths = detail::config_number_list(key, value);
  } else if (key == "sim_sigma") {
    c.sim_sigma = detail::config_number(key, value);
  } else if (key == "sim_eps_m") {
    c.sim_eps_m = detail::config_number(key, value);
  } else if (key == "sim_dt") {
    c.sim_dt = detail::config_number(key, value);
  } else if (key == "sim_steps") {
    c.sim_steps = static_cast<long>(detail::config_number(key, value));
  } else if (key == "sim_boreholes") {
    c.sim_boreholes = static_cast<int>(detail::config_number(key, value));
  } else if (key == "sim_start") {
    c.sim_start = std::string(detail::trim(value));
  } else if (key.rfind("borehole.", 0) == 0) {
    const std::size_t dot = key.rfind('.');
    const std::string id = key.substr(9, dot - 9);
    const std::string field = key.substr(dot + 1);
    if (id.empty()) throw_config("config key '" + key + "' has an empty borehole id");
    if (field == "eps_m") {
      c.eps_m_by_borehole[id] = detail::config_number(key, value);
    } else if (field == "instrument") {
      const std::string_view v = detail::trim(value);
      if (v == "manual") {
        c.instrument_by_borehole[id] = InstrumentKind::manual_probe;
      } else if (v == "in_place") {
        c.instrument_by_borehole[id] = InstrumentKind::in_place;
      } else {
        throw_config("instrument must be manual or in_place");
      }
    } else {
      throw_config("unknown per-borehole config field '" + field + "'");
    }
  } else {
    throw_config("unknown config key '" + key + "'");
  }
}

/// Load a `key = value` config file. '#' starts a comment; blank lines are
/// ignored.
inline RunConfig load_config_file(const std::string& path, RunConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw_config("cannot open config file: " + path);
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string_view sv = detail::trim(line);
    if (sv.empty()) continue;
    const std::size_t eq = sv.find('=');
    if (eq == std::string_view::npos) {
      throw_config("config line " + std::to_string(line_no) + " is not 'key = value'");
    }
    const std::string key{detail::trim(sv.substr(0, eq))};
    const std::string value{detail::trim(sv.substr(eq + 1))};
    if (key.empty()) throw_config("config line " + std::to_string(line_no) + " has an empty key");
    apply_config_entry(base, key, value);
  }
  return base;
}

}  // namespace borekf
