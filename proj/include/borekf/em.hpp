#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "borekf/errors.hpp"
#include "borekf/filter.hpp"
#include "borekf/forecast.hpp"
#include "borekf/linalg.hpp"
#include "borekf/model.hpp"
#include "borekf/time_grid.hpp"

namespace borekf {

struct EmOptions {
  long window = 200;        // grid steps; only the most recent `window` are used
  double tol = 1e-4;        // relative Frobenius change of Q at which EM stops
  int max_iters = 50;       // 0 means: smooth once with the initial Q, learn nothing
  GateOptions gate;
  std::optional<double> init_sigma;  // override for the initial white-noise intensity
};

struct SmootherResult {
  SmoothedStates smoothed;            // over the windowed grid steps
  Eigen::MatrixXd q;                  // learned process covariance
  int em_iterations = 0;
  double log_likelihood = 0.0;        // final observed-data log-likelihood
  std::vector<double> ll_trace;       // per-iteration log-likelihoods
  std::vector<GateDecision> decisions;  // from the final forward pass
  long window_start = 0;              // absolute grid index of the first windowed step
};

/// Prior used when the caller does not supply one: positions start at the
/// first observed values (zero where unobserved), velocities at zero, with a
/// diffuse covariance of (10 eps_m d)^2 on positions and (1 mm/day)^2 on
/// velocities.
inline StateGaussian default_initial_prior(const GriddedObservations& grid,
                                           const ModelMatrices& model) {
  const int n = model.dim_state();
  const int m = model.dim_obs();
  StateGaussian prior;
  prior.mean = Eigen::VectorXd::Zero(n);
  prior.grid_index = grid.index_offset;
  for (const auto& slot : grid.slots) {
    if (!slot.has_value()) continue;
    for (int i = 0; i < m; ++i) {
      if (std::isfinite((*slot)[i])) prior.mean[i] = (*slot)[i];
    }
    break;
  }
  prior.cov = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < m; ++i) prior.cov(i, i) = 100.0 * model.R(i, i);
  for (int i = m; i < n; ++i) prior.cov(i, i) = 1.0;
  return prior;
}

/// Learn the process covariance Q by expectation maximization over the most
/// recent `window` grid steps. The E-step is a gated Kalman forward pass plus
/// RTS smoothing; the M-step re-estimates Q from the smoothed second moments
/// and lag-one cross-covariances. F and R stay fixed.
inline SmootherResult em_learn_q(const GriddedObservations& grid, const ModelMatrices& model,
                                 std::optional<StateGaussian> initial, const EmOptions& opts) {
  if (opts.window < 10) throw_config("EM window must be at least 10 grid steps");
  if (!(opts.tol > 0.0)) throw_config("EM tolerance must be > 0");
  if (opts.max_iters < 0) throw_config("EM iteration limit must be >= 0");

  GriddedObservations win =
      grid.n_slots() > opts.window ? grid.tail(grid.n_slots() - opts.window) : grid;
  if (win.n_slots() < 2) throw_insufficient("EM window has fewer than two grid steps");
  if (win.n_filled() < 2) throw_insufficient("EM window contains fewer than two observations");

  const int n_depths = model.dim_obs() / 2;
  const Eigen::MatrixXd noise_template = build_noise_template(n_depths, model.dt);

  double sigma0 = 0.0;
  if (opts.init_sigma.has_value()) {
    if (!(*opts.init_sigma >= 0.0)) throw_config("initial sigma must be >= 0");
    sigma0 = *opts.init_sigma;
  } else {
    sigma0 = 0.01 * model.R.trace() / noise_template.trace();
  }

  ModelMatrices work = model;
  work.Q = sigma0 * noise_template;

  const StateGaussian prior =
      initial.has_value() ? *initial : default_initial_prior(win, work);

  SmootherResult result;
  result.window_start = win.index_offset;

  const long t = win.n_slots();
  const double n_transitions = static_cast<double>(t - 1);
  int decreasing_streak = 0;
  std::vector<long> prev_rejected;

  for (int iter = 0; iter < opts.max_iters; ++iter) {
    // Warm-up: the first E-step runs ungated. Until Q has adapted, the
    // predictive variance is understated and the gate would reject good data
    // wholesale; from the second E-step on the gate shields Q from outliers.
    GateOptions gate = opts.gate;
    if (iter == 0) gate.enabled = false;
    FilterTrace trace = kalman_forward(win, work, prior, gate);
    SmoothedStates smooth = rts_smooth(trace, work);

    std::vector<long> rejected;
    for (const auto& d : trace.decisions) {
      if (!d.accepted) rejected.push_back(d.grid_index);
    }

    result.ll_trace.push_back(trace.log_likelihood);
    if (result.ll_trace.size() > 1) {
      const double prev = result.ll_trace[result.ll_trace.size() - 2];
      // Log-likelihoods are only comparable while the accepted set is stable.
      if (rejected == prev_rejected) {
        decreasing_streak = trace.log_likelihood < prev - opts.tol ? decreasing_streak + 1 : 0;
      } else {
        decreasing_streak = 0;
      }
      if (decreasing_streak >= 3) {
        throw EmDivergenceError("EM log-likelihood decreased for 3 consecutive iterations",
                                result.ll_trace);
      }
    }
    prev_rejected = std::move(rejected);

    // M-step: Q <- (1/T) sum_k E[(x_k - F x_{k-1})(x_k - F x_{k-1})^T]
    Eigen::MatrixXd q_new = Eigen::MatrixXd::Zero(model.dim_state(), model.dim_state());
    for (long k = 1; k < t; ++k) {
      const auto& cur = smooth.states[static_cast<std::size_t>(k)];
      const auto& prev = smooth.states[static_cast<std::size_t>(k - 1)];
      const Eigen::MatrixXd s11 = cur.cov + cur.mean * cur.mean.transpose();
      const Eigen::MatrixXd s10 =
          smooth.cross_cov[static_cast<std::size_t>(k)] + cur.mean * prev.mean.transpose();
      const Eigen::MatrixXd s00 = prev.cov + prev.mean * prev.mean.transpose();
      q_new.noalias() += s11;
      q_new.noalias() -= s10 * model.F.transpose();
      q_new.noalias() -= model.F * s10.transpose();
      q_new.noalias() += model.F * s00 * model.F.transpose();
    }
    q_new /= n_transitions;
    clamp_psd(q_new);

    result.em_iterations = iter + 1;
    const double denom = work.Q.norm();
    const double rel_change =
        denom > 0.0 ? (q_new - work.Q).norm() / denom : (q_new.norm() > 0.0 ? 1.0 : 0.0);
    work.Q = q_new;
    if (rel_change < opts.tol) break;
  }

  // Final pass so the reported states, decisions and likelihood match the
  // learned Q.
  FilterTrace trace = kalman_forward(win, work, prior, opts.gate);
  result.smoothed = rts_smooth(trace, work);
  result.q = work.Q;
  result.log_likelihood = trace.log_likelihood;
  result.ll_trace.push_back(trace.log_likelihood);
  result.decisions = std::move(trace.decisions);
  return result;
}

}  // namespace borekf
