#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "borekf/errors.hpp"
#include "borekf/linalg.hpp"
#include "borekf/model.hpp"

namespace borekf {

/// Outcome of gating one observation against the one-step predictive
/// distribution. `depth_index` is -1 when the gate ran jointly over all
/// observed entries, otherwise the depth it applied to.
struct GateDecision {
  long grid_index = 0;
  double distance = 0.0;
  double threshold = 0.0;
  bool accepted = true;
  Eigen::VectorXd observation;
  int depth_index = -1;
};

/// Observation-space predictive distribution (H mu, H Sigma H^T + R) for a
/// one-step-ahead predicted state.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> predictive_distribution(
    const StateGaussian& prior, const ModelMatrices& model) {
  Eigen::VectorXd mean = model.H * prior.mean;
  Eigen::MatrixXd cov = model.H * prior.cov * model.H.transpose() + model.R;
  symmetrize(cov);
  return {std::move(mean), std::move(cov)};
}

/// sqrt((x-mu)^T Sigma^{-1} (x-mu)) via Cholesky; the covariance is
/// regularized, never explicitly inverted.
inline double mahalanobis(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                          const Eigen::MatrixXd& covariance) {
  if (x.size() != mean.size() || covariance.rows() != x.size() ||
      covariance.cols() != x.size()) {
    throw_config("mahalanobis: dimension mismatch");
  }
  const auto llt = cholesky_or_throw(covariance, "gate");
  const Eigen::VectorXd w = llt.matrixL().solve(x - mean);
  return w.norm();
}

/// Gate one observation against the predictive distribution of `prior`.
inline GateDecision gate_step(const StateGaussian& prior, const Eigen::VectorXd& observation,
                              const ModelMatrices& model, double gamma) {
  if (!std::isfinite(gamma) || gamma <= 0.0) throw_config("gate threshold must be > 0");
  auto [mean, cov] = predictive_distribution(prior, model);
  GateDecision d;
  d.grid_index = prior.grid_index;
  d.distance = mahalanobis(observation, mean, cov);
  d.threshold = gamma;
  d.accepted = d.distance <= gamma;
  d.observation = observation;
  return d;
}

}  // namespace borekf
