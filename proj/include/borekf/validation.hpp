#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "borekf/dataset.hpp"
#include "borekf/em.hpp"
#include "borekf/errors.hpp"
#include "borekf/filter.hpp"
#include "borekf/forecast.hpp"
#include "borekf/linalg.hpp"
#include "borekf/model.hpp"
#include "borekf/time_grid.hpp"

namespace borekf {

/// KL divergence between two Gaussians in nats:
///   0.5 [ tr(Sq^-1 Sp) + (mq-mp)^T Sq^-1 (mq-mp) - dim + ln det Sq - ln det Sp ]
/// computed through Cholesky factorizations of the regularized covariances.
inline double kl_gaussian(const Eigen::VectorXd& mean_p, const Eigen::MatrixXd& cov_p,
                          const Eigen::VectorXd& mean_q, const Eigen::MatrixXd& cov_q) {
  const Eigen::Index dim = mean_p.size();
  if (mean_q.size() != dim || cov_p.rows() != dim || cov_p.cols() != dim ||
      cov_q.rows() != dim || cov_q.cols() != dim) {
    throw_config("kl_gaussian: dimension mismatch");
  }
  const auto llt_p = cholesky_or_throw(cov_p, "kl divergence (first argument)");
  const auto llt_q = cholesky_or_throw(cov_q, "kl divergence (second argument)");

  const double trace_term = llt_q.solve(llt_p.reconstructedMatrix()).trace();
  const Eigen::VectorXd diff = mean_q - mean_p;
  const double quad = diff.dot(llt_q.solve(diff));
  const double log_det = log_det_from_llt(llt_q) - log_det_from_llt(llt_p);
  const double kl = 0.5 * (trace_term + quad - static_cast<double>(dim) + log_det);
  return std::max(kl, 0.0);
}

struct SplitGrid {
  GriddedObservations train;
  GriddedObservations holdout;
  long n_train = 0;  // grid steps in the training segment
};

/// Split off the final `horizon` days of grid steps as the hold-out segment.
/// The split is pure index arithmetic; gap slots stay on whichever side their
/// index falls.
inline SplitGrid split_train_validation(const GriddedObservations& grid, double horizon_days) {
  if (!std::isfinite(horizon_days) || horizon_days <= 0.0) {
    throw_config("validation horizon must be finite and > 0");
  }
  const long n_holdout = static_cast<long>(std::floor(horizon_days / grid.dt + 1e-9));
  if (n_holdout < 1) {
    throw_insufficient("validation horizon shorter than one grid step");
  }
  const long n_train = grid.n_slots() - n_holdout;
  if (n_train < 2) {
    throw_insufficient("grid span must exceed the validation horizon");
  }

  SplitGrid split;
  split.n_train = n_train;
  split.train = grid;
  split.train.slots.resize(static_cast<std::size_t>(n_train));
  split.train.source_times.resize(static_cast<std::size_t>(n_train));
  split.train.collisions.clear();
  split.holdout = grid.tail(n_train);
  return split;
}

enum class KlMarginal {
  full4d,      // per-depth (q_A, q_B, p_A, p_B) marginal
  position2d,  // per-depth (q_A, q_B) marginal
};

struct ValidationOptions {
  std::optional<double> dt_override;
  double horizon_days = 30.0;
  long window = 200;
  double em_tol = 1e-4;
  int em_max_iters = 50;
  std::optional<double> init_sigma;
  bool gating_enabled = true;
  double gamma = 5.0;
  bool gate_per_depth = false;
  KlMarginal kl_marginal = KlMarginal::full4d;
};

struct ValidationReport {
  std::string borehole_id;
  double metric_value = 0.0;   // mean KL over forecast steps and depths, nats
  double horizon_days = 0.0;
  long n_forecast_steps = 0;
  int n_depths = 0;
  Eigen::MatrixXd per_step_kl;  // n_forecast_steps x n_depths
  long anomalies_removed = 0;   // rejected observations in the training pass
  double sigma_alpha = 0.0;
  bool sigma_clamped = false;
  double dt = 0.0;
  std::vector<GateDecision> train_decisions;
};

namespace detail {

inline std::vector<int> marginal_indices(const StateLayout& layout, int depth, KlMarginal mode) {
  std::vector<int> idx = {layout.pos_a(depth), layout.pos_b(depth)};
  if (mode == KlMarginal::full4d) {
    idx.push_back(layout.vel_a(depth));
    idx.push_back(layout.vel_b(depth));
  }
  return idx;
}

}  // namespace detail

/// Hold-out forecast validation. The training segment is EM-smoothed and
/// forecast across the hold-out span; the full series is EM-smoothed as the
/// reference; the metric is the mean per-step per-depth KL divergence between
/// forecast marginals and full-smooth marginals.
inline ValidationReport validate_forecast(const BoreholeSeries& series,
                                          const ValidationOptions& opts) {
  if (!(series.eps_m > 0.0)) {
    throw_config("borehole " + series.borehole_id + " needs eps_m > 0 (set it in the config)");
  }
  const StateLayout layout = series.layout();
  const auto epochs = series.observation_epochs();

  std::vector<double> times;
  times.reserve(epochs.size());
  for (const auto& e : epochs) times.push_back(e.time_days);
  const double dt = opts.dt_override.has_value() ? *opts.dt_override : select_dt(times);
  if (!(dt > 0.0)) throw_config("grid spacing must be > 0");

  const GriddedObservations grid = remap(epochs, dt);
  const SplitGrid split = split_train_validation(grid, opts.horizon_days);
  const long n_holdout = grid.n_slots() - split.n_train;
  if (opts.window < n_holdout + 2) {
    throw_config("smoother window must cover the validation span plus two steps");
  }

  const ModelMatrices model = make_model(layout, dt, series.eps_m, {});
  EmOptions em;
  em.window = opts.window;
  em.tol = opts.em_tol;
  em.max_iters = opts.em_max_iters;
  em.init_sigma = opts.init_sigma;
  em.gate.enabled = opts.gating_enabled;
  em.gate.gamma = opts.gamma;
  em.gate.per_depth = opts.gate_per_depth;

  // Smooth the training segment, project the learned Q onto the kinematic
  // template, and forecast across the hold-out span at the grid spacing.
  SmootherResult train = em_learn_q(split.train, model, std::nullopt, em);
  const KinematicNoiseFit fit =
      fit_sigma_alpha(train.q, build_noise_template(layout, dt));
  const StateGaussian& last = train.smoothed.states.back();
  const ForecastBundle forecast = forecast_states(
      last, layout, fit, dt, static_cast<double>(n_holdout) * dt, model);

  // Reference: smooth the full series (training plus hold-out).
  SmootherResult full = em_learn_q(grid, model, std::nullopt, em);

  ValidationReport report;
  report.borehole_id = series.borehole_id;
  report.horizon_days = opts.horizon_days;
  report.n_forecast_steps = n_holdout;
  report.n_depths = layout.n_depths();
  report.dt = dt;
  report.sigma_alpha = fit.sigma_alpha;
  report.sigma_clamped = fit.clamped;
  report.per_step_kl.resize(n_holdout, layout.n_depths());
  report.train_decisions = train.decisions;
  for (const auto& d : train.decisions) report.anomalies_removed += d.accepted ? 0 : 1;

  for (long j = 0; j < n_holdout; ++j) {
    const long grid_index = split.n_train + j;
    const auto& hat = forecast.steps[static_cast<std::size_t>(j)].state;
    const long full_local = grid_index - full.window_start;
    if (full_local < 0) throw_config("smoother window must cover the validation span");
    const auto& ref = full.smoothed.states[static_cast<std::size_t>(full_local)];

    for (int d = 0; d < layout.n_depths(); ++d) {
      const auto idx = detail::marginal_indices(layout, d, opts.kl_marginal);
      report.per_step_kl(j, d) =
          kl_gaussian(hat.mean(idx), hat.cov(idx, idx), ref.mean(idx), ref.cov(idx, idx));
    }
  }
  report.metric_value = report.per_step_kl.mean();
  return report;
}

}  // namespace borekf
