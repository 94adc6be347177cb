#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "borekf/errors.hpp"
#include "borekf/linalg.hpp"

namespace borekf {

/// Layout of the latent state for one borehole.
///
/// The state stacks positions then velocities, each interleaved A,B per depth:
///   [q1_A, q1_B, ..., qn_A, qn_B, p1_A, p1_B, ..., pn_A, pn_B]
/// so dim_state = 4n and dim_obs = 2n for n measured depths. Positions are in
/// mm, velocities in mm/day, depths in metres.
struct StateLayout {
  std::vector<double> depths;

  int n_depths() const { return static_cast<int>(depths.size()); }
  int dim_state() const { return 4 * n_depths(); }
  int dim_obs() const { return 2 * n_depths(); }

  // Flat state indices of the per-depth marginal blocks.
  int pos_a(int depth) const { return 2 * depth; }
  int pos_b(int depth) const { return 2 * depth + 1; }
  int vel_a(int depth) const { return dim_obs() + 2 * depth; }
  int vel_b(int depth) const { return dim_obs() + 2 * depth + 1; }
};

inline StateLayout make_layout(std::vector<double> depths) {
  if (depths.empty()) throw_config("layout needs at least one depth");
  for (std::size_t i = 0; i < depths.size(); ++i) {
    if (!std::isfinite(depths[i]) || depths[i] <= 0.0) {
      throw_config("depths must be finite and > 0");
    }
    if (i > 0 && depths[i] <= depths[i - 1]) throw_config("depths must be strictly increasing");
  }
  return StateLayout{std::move(depths)};
}

/// Gaussian belief over the latent state at one grid step.
struct StateGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  long grid_index = 0;
};

/// Constant-velocity transition: positions advance by velocity * dt, block form
/// [[I, dt*I], [0, I]] over the (position, velocity) partition at 2n.
inline Eigen::MatrixXd build_transition(const StateLayout& layout, double dt) {
  if (!std::isfinite(dt) || dt < 0.0) throw_config("transition timestep must be finite and >= 0");
  const int n2 = layout.dim_obs();
  Eigen::MatrixXd f = Eigen::MatrixXd::Identity(layout.dim_state(), layout.dim_state());
  for (int i = 0; i < n2; ++i) f(i, n2 + i) = dt;
  return f;
}

/// Observation matrix [I_{2n} | 0]: inclinometers measure positions only.
inline Eigen::MatrixXd build_observation(const StateLayout& layout) {
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(layout.dim_obs(), layout.dim_state());
  h.leftCols(layout.dim_obs()).setIdentity();
  return h;
}

/// Instrument noise: diagonal with (eps_m * depth)^2 on both axes of each depth.
/// eps_m is the manufacturer error coefficient in mm per metre of depth.
inline Eigen::MatrixXd build_observation_covariance(const StateLayout& layout, double eps_m) {
  if (!std::isfinite(eps_m) || eps_m <= 0.0) throw_config("eps_m must be finite and > 0");
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(layout.dim_obs(), layout.dim_obs());
  for (int i = 0; i < layout.n_depths(); ++i) {
    const double v = eps_m * layout.depths[static_cast<std::size_t>(i)];
    r(2 * i, 2 * i) = v * v;
    r(2 * i + 1, 2 * i + 1) = v * v;
  }
  return r;
}

/// The fixed system matrices for one grid spacing.
struct ModelMatrices {
  Eigen::MatrixXd F;
  Eigen::MatrixXd H;
  Eigen::MatrixXd R;
  Eigen::MatrixXd Q;
  double dt = 0.0;

  int dim_state() const { return static_cast<int>(F.rows()); }
  int dim_obs() const { return static_cast<int>(H.rows()); }
};

inline ModelMatrices make_model(const StateLayout& layout, double dt, double eps_m,
                                Eigen::MatrixXd q) {
  if (!std::isfinite(dt) || dt <= 0.0) throw_config("model timestep must be finite and > 0");
  if (q.size() == 0) {
    q = Eigen::MatrixXd::Zero(layout.dim_state(), layout.dim_state());
  } else if (q.rows() != layout.dim_state() || q.cols() != layout.dim_state()) {
    throw_config("process covariance has wrong dimension");
  }
  ModelMatrices m;
  m.F = build_transition(layout, dt);
  m.H = build_observation(layout);
  m.R = build_observation_covariance(layout, eps_m);
  m.Q = symmetrized(q);
  m.dt = dt;
  return m;
}

}  // namespace borekf
