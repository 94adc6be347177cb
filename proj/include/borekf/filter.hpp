#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "borekf/errors.hpp"
#include "borekf/gating.hpp"
#include "borekf/linalg.hpp"
#include "borekf/model.hpp"
#include "borekf/time_grid.hpp"

namespace borekf {

/// Validation-gating configuration for the forward pass.
struct GateOptions {
  bool enabled = false;
  double gamma = 5.0;
  bool per_depth = false;  // gate each depth's marginal instead of the joint vector
};

struct FilterStep {
  StateGaussian prior;      // one-step-ahead prediction
  StateGaussian posterior;  // equals prior at gap / rejected steps
  bool updated = false;
  std::optional<Eigen::VectorXd> innovation;      // over the observed entries
  std::optional<Eigen::MatrixXd> innovation_cov;
};

struct FilterTrace {
  std::vector<FilterStep> steps;
  std::vector<GateDecision> decisions;
  double log_likelihood = 0.0;  // observed-data LL over accepted observations
};

namespace detail {

inline std::vector<int> finite_indices(const Eigen::VectorXd& v) {
  std::vector<int> idx;
  idx.reserve(static_cast<std::size_t>(v.size()));
  for (int i = 0; i < v.size(); ++i)
    if (std::isfinite(v[i])) idx.push_back(i);
  return idx;
}

// LDLT that must be positive definite; throws a singular-model error otherwise.
inline Eigen::LDLT<Eigen::MatrixXd> pd_ldlt_or_throw(const Eigen::MatrixXd& m,
                                                     const std::string& what, long step) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
  const auto& d = ldlt.vectorD();
  if (ldlt.info() != Eigen::Success || d.minCoeff() <= 0.0 ||
      d.minCoeff() < 1e-15 * d.maxCoeff()) {
    throw_numerical(what + " singular at grid step " + std::to_string(step));
  }
  return ldlt;
}

}  // namespace detail

/// Forward Kalman pass over a regular grid. Gap slots are predict-only steps;
/// partially observed slots (NaN entries) update against the observed rows
/// only. With gating enabled, observations whose Mahalanobis distance from the
/// predictive distribution exceeds gamma are excluded from the update and
/// recorded as rejected.
inline FilterTrace kalman_forward(const GriddedObservations& grid, const ModelMatrices& model,
                                  const StateGaussian& initial, const GateOptions& gate = {}) {
  if (grid.n_slots() == 0) throw_insufficient("empty observation grid");
  if (std::abs(model.dt - grid.dt) > 1e-9 * std::max(1.0, grid.dt)) {
    throw_config("model timestep does not match grid spacing");
  }
  const int n = model.dim_state();
  if (initial.mean.size() != n || initial.cov.rows() != n || initial.cov.cols() != n) {
    throw_config("initial state has wrong dimension");
  }
  if (gate.enabled && (!std::isfinite(gate.gamma) || gate.gamma <= 0.0)) {
    throw_config("gate threshold must be > 0");
  }

  constexpr double kLog2Pi = 1.8378770664093453;
  FilterTrace trace;
  trace.steps.resize(static_cast<std::size_t>(grid.n_slots()));

  Eigen::VectorXd mean = initial.mean;
  Eigen::MatrixXd cov = symmetrized(initial.cov);
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(n, n);

  for (long k = 0; k < grid.n_slots(); ++k) {
    auto& step = trace.steps[static_cast<std::size_t>(k)];
    const long gi = grid.index_offset + k;

    if (k > 0) {
      mean = (model.F * mean).eval();
      cov = (model.F * cov * model.F.transpose() + model.Q).eval();
      symmetrize(cov);
    }
    step.prior = StateGaussian{mean, cov, gi};

    const auto& slot = grid.slots[static_cast<std::size_t>(k)];
    std::vector<int> valid;
    if (slot.has_value()) valid = detail::finite_indices(*slot);

    if (!valid.empty() && gate.enabled) {
      // Gate against the joint (or per-depth marginal) predictive distribution.
      Eigen::MatrixXd s_full = cov(valid, valid);
      s_full += model.R(valid, valid);
      symmetrize(s_full);
      Eigen::VectorXd y_full = (*slot)(valid) - mean(valid);

      if (!gate.per_depth) {
        const auto llt = cholesky_or_throw(s_full, "gate at grid step " + std::to_string(gi));
        GateDecision d;
        d.grid_index = gi;
        d.distance = llt.matrixL().solve(y_full).norm();
        d.threshold = gate.gamma;
        d.accepted = d.distance <= gate.gamma;
        d.observation = *slot;
        trace.decisions.push_back(d);
        if (!d.accepted) valid.clear();
      } else {
        std::vector<int> survivors;
        const int n_depths = model.dim_obs() / 2;
        for (int depth = 0; depth < n_depths; ++depth) {
          std::vector<int> local;   // positions within `valid` belonging to this depth
          std::vector<int> global;  // the matching observation-row indices
          for (std::size_t p = 0; p < valid.size(); ++p) {
            if (valid[p] == 2 * depth || valid[p] == 2 * depth + 1) {
              local.push_back(static_cast<int>(p));
              global.push_back(valid[p]);
            }
          }
          if (local.empty()) continue;
          Eigen::MatrixXd s_sub = s_full(local, local);
          const auto llt = cholesky_or_throw(s_sub, "gate at grid step " + std::to_string(gi));
          GateDecision d;
          d.grid_index = gi;
          d.distance = llt.matrixL().solve(y_full(local)).norm();
          d.threshold = gate.gamma;
          d.accepted = d.distance <= gate.gamma;
          d.observation = (*slot)(global);
          d.depth_index = depth;
          trace.decisions.push_back(d);
          if (d.accepted) survivors.insert(survivors.end(), global.begin(), global.end());
        }
        valid = std::move(survivors);
      }
    }

    if (!valid.empty()) {
      const int m = static_cast<int>(valid.size());
      Eigen::VectorXd y = (*slot)(valid) - mean(valid);
      Eigen::MatrixXd s = cov(valid, valid);
      s += model.R(valid, valid);
      symmetrize(s);

      const auto ldlt = detail::pd_ldlt_or_throw(s, "innovation covariance", gi);
      const Eigen::MatrixXd pht = cov(Eigen::all, valid);        //2n-dim H picks columns
      const Eigen::MatrixXd gain = ldlt.solve(pht.transpose()).transpose();

      mean += gain * y;
      Eigen::MatrixXd a = identity;
      for (int c = 0; c < m; ++c) a.col(valid[static_cast<std::size_t>(c)]) -= gain.col(c);
      cov = (a * cov * a.transpose() +
             gain * model.R(valid, valid) * gain.transpose()).eval();  // Joseph form
      symmetrize(cov);

      const double quad = y.dot(ldlt.solve(y));
      const double log_det = ldlt.vectorD().array().log().sum();
      trace.log_likelihood -= 0.5 * (m * kLog2Pi + log_det + quad);

      step.updated = true;
      step.innovation = std::move(y);
      step.innovation_cov = std::move(s);
    }

    step.posterior = StateGaussian{mean, cov, gi};
  }
  return trace;
}

/// Smoothed states plus the lag-one cross-covariances needed by EM.
struct SmoothedStates {
  std::vector<StateGaussian> states;
  std::vector<Eigen::MatrixXd> cross_cov;  // cross_cov[k] = Cov(x_k, x_{k-1} | all data), k >= 1
};

/// Rauch-Tung-Striebel backward pass over a filter trace.
inline SmoothedStates rts_smooth(const FilterTrace& trace, const ModelMatrices& model) {
  if (trace.steps.empty()) throw_insufficient("cannot smooth an empty trace");
  const std::size_t t = trace.steps.size();

  SmoothedStates out;
  out.states.resize(t);
  out.cross_cov.resize(t);
  out.states[t - 1] = trace.steps[t - 1].posterior;  // boundary: smoothed = filtered

  for (std::size_t k = t - 1; k-- > 0;) {
    const auto& filt = trace.steps[k].posterior;
    const auto& pred = trace.steps[k + 1].prior;

    const auto ldlt =
        detail::pd_ldlt_or_throw(pred.cov, "predicted covariance", pred.grid_index);
    // G = P_k|k F^T (P_{k+1|k})^{-1}, computed as (P_pred^{-1} F P_k|k)^T.
    const Eigen::MatrixXd gain = ldlt.solve(model.F * filt.cov).transpose();

    StateGaussian s;
    s.grid_index = filt.grid_index;
    s.mean = filt.mean + gain * (out.states[k + 1].mean - pred.mean);
    s.cov = filt.cov + gain * (out.states[k + 1].cov - pred.cov) * gain.transpose();
    symmetrize(s.cov);
    out.states[k] = std::move(s);
    out.cross_cov[k + 1] = out.states[k + 1].cov * gain.transpose();
  }
  return out;
}

}  // namespace borekf
