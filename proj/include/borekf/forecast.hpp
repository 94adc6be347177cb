#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "borekf/errors.hpp"
#include "borekf/linalg.hpp"
#include "borekf/model.hpp"

namespace borekf {

/// Kinematic process-noise template for a constant-velocity model driven by
/// continuous white noise on acceleration, discretized at timestep dt:
/// position block (dt^3/3) I, cross blocks (dt^2/2) I, velocity block dt I.
/// The process covariance for any timestep is sigma_alpha * template(dt).
inline Eigen::MatrixXd build_noise_template(int n_depths, double dt) {
  if (n_depths <= 0) throw_config("noise template needs at least one depth");
  if (!std::isfinite(dt) || dt <= 0.0) throw_config("noise template timestep must be > 0");
  const int n2 = 2 * n_depths;
  Eigen::MatrixXd lam = Eigen::MatrixXd::Zero(2 * n2, 2 * n2);
  const double d3 = dt * dt * dt / 3.0;
  const double d2 = dt * dt / 2.0;
  for (int i = 0; i < n2; ++i) {
    lam(i, i) = d3;
    lam(i, n2 + i) = d2;
    lam(n2 + i, i) = d2;
    lam(n2 + i, n2 + i) = dt;
  }
  return lam;
}

inline Eigen::MatrixXd build_noise_template(const StateLayout& layout, double dt) {
  return build_noise_template(layout.n_depths(), dt);
}

/// Least-squares projection of a learned Q onto the kinematic template.
struct KinematicNoiseFit {
  double sigma_alpha = 0.0;   // white-noise intensity, clamped to >= 0
  double residual_norm = 0.0; // Frobenius norm of Q - sigma_alpha * template
  double dt_fit = 0.0;        // timestep the template was evaluated at
  bool clamped = false;       // raw projection was negative
};

/// sigma_alpha = <Q, L>_F / <L, L>_F, the closed-form minimizer of
/// ||Q - sigma_alpha L||_F. A negative raw coefficient is clamped to zero and
/// flagged: a non-PSD forecast covariance must never be propagated.
inline KinematicNoiseFit fit_sigma_alpha(const Eigen::MatrixXd& q_learned,
                                         const Eigen::MatrixXd& noise_template) {
  if (q_learned.rows() != noise_template.rows() || q_learned.cols() != noise_template.cols()) {
    throw_config("fit_sigma_alpha: dimension mismatch");
  }
  const double denom = noise_template.squaredNorm();
  if (denom <= 0.0) throw_numerical("fit_sigma_alpha: degenerate noise template");

  KinematicNoiseFit fit;
  const double raw = q_learned.cwiseProduct(noise_template).sum() / denom;
  fit.sigma_alpha = std::max(raw, 0.0);
  fit.clamped = raw < 0.0;
  fit.residual_norm = (q_learned - fit.sigma_alpha * noise_template).norm();
  const int n2 = static_cast<int>(noise_template.rows()) / 2;
  fit.dt_fit = n2 > 0 ? noise_template(n2, n2) : 0.0;  // velocity block carries dt
  return fit;
}

struct ForecastStep {
  StateGaussian state;
  Eigen::VectorXd obs_mean;   // H mu
  Eigen::MatrixXd obs_cov;    // H Sigma H^T + R
  double t_offset = 0.0;      // days past the forecast origin
};

struct ForecastBundle {
  std::vector<ForecastStep> steps;
  double horizon = 0.0;
  double dt_forecast = 0.0;
};

/// Open-loop propagation of the last smoothed state. The forecast process
/// covariance sigma_alpha * template(dt_forecast) is kinematically consistent
/// for any timestep, independent of the spacing used while smoothing.
inline ForecastBundle forecast_states(const StateGaussian& last_state, const StateLayout& layout,
                                      const KinematicNoiseFit& fit, double dt_forecast,
                                      double horizon, const ModelMatrices& model) {
  if (!std::isfinite(dt_forecast) || dt_forecast <= 0.0) {
    throw_config("forecast timestep must be finite and > 0");
  }
  if (!std::isfinite(horizon) || horizon < dt_forecast) {
    throw_config("forecast horizon must be >= the forecast timestep");
  }
  if (last_state.mean.size() != layout.dim_state()) {
    throw_config("forecast start state has wrong dimension");
  }

  const Eigen::MatrixXd f = build_transition(layout, dt_forecast);
  const Eigen::MatrixXd qf = fit.sigma_alpha * build_noise_template(layout, dt_forecast);
  const long n_steps = static_cast<long>(std::ceil(horizon / dt_forecast - 1e-9));

  ForecastBundle bundle;
  bundle.horizon = horizon;
  bundle.dt_forecast = dt_forecast;
  bundle.steps.reserve(static_cast<std::size_t>(n_steps));

  Eigen::VectorXd mean = last_state.mean;
  Eigen::MatrixXd cov = symmetrized(last_state.cov);
  for (long j = 1; j <= n_steps; ++j) {
    mean = (f * mean).eval();
    cov = (f * cov * f.transpose() + qf).eval();
    symmetrize(cov);

    ForecastStep step;
    step.state = StateGaussian{mean, cov, last_state.grid_index + j};
    step.obs_mean = model.H * mean;
    step.obs_cov = symmetrized(model.H * cov * model.H.transpose() + model.R);
    step.t_offset = static_cast<double>(j) * dt_forecast;
    bundle.steps.push_back(std::move(step));
  }
  return bundle;
}

}  // namespace borekf
