#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "borekf/dataset.hpp"
#include "borekf/errors.hpp"
#include "borekf/forecast.hpp"
#include "borekf/model.hpp"

namespace borekf {

namespace detail {

// Deterministic standard-normal stream: Box-Muller over mt19937_64, so the
// sequence does not depend on the standard library's distribution internals.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : rng_(seed) {}

  double operator()() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform_open();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    have_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

  Eigen::VectorXd vector(int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = (*this)();
    return v;
  }

 private:
  double uniform_open() {
    // 53-bit mantissa uniform in (0, 1]; never 0 so log() stays finite.
    return (static_cast<double>(rng_() >> 11) + 1.0) * 0x1.0p-53;
  }

  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace detail

inline constexpr double kDefaultSyntheticStart = 18262.0;  // 2020-01-01T00:00:00Z

/// A generated latent trajectory together with the observed series.
struct SyntheticTrajectory {
  BoreholeSeries series;
  std::vector<Eigen::VectorXd> latent_states;  // one per grid step
};

/// Sample a kinematic trajectory x_{k+1} = F x_k + w, w ~ N(0, sigma_true * L(dt)),
/// and observations z = H x + v, v ~ N(0, R). Deterministic for a fixed seed.
inline SyntheticTrajectory simulate_trajectory(
    const StateLayout& layout, double sigma_true, double eps_m, double dt, long steps,
    std::uint64_t seed, std::string borehole_id = "SYN",
    double start_time = kDefaultSyntheticStart,
    Eigen::VectorXd x0 = Eigen::VectorXd()) {
  if (!(sigma_true >= 0.0)) throw_config("sigma_true must be >= 0");
  if (!(eps_m >= 0.0)) throw_config("eps_m must be >= 0");
  if (!std::isfinite(dt) || dt <= 0.0) throw_config("dt must be finite and > 0");
  if (steps < 2) throw_config("need at least 2 steps");
  const int dim = layout.dim_state();
  if (x0.size() == 0) x0 = Eigen::VectorXd::Zero(dim);
  if (x0.size() != dim) throw_config("x0 has wrong dimension");

  const Eigen::MatrixXd f = build_transition(layout, dt);
  Eigen::MatrixXd noise_chol = Eigen::MatrixXd::Zero(dim, dim);
  if (sigma_true > 0.0) {
    const Eigen::MatrixXd q = sigma_true * build_noise_template(layout, dt);
    Eigen::LLT<Eigen::MatrixXd> llt(q);
    if (llt.info() != Eigen::Success) throw_numerical("process covariance not PD");
    noise_chol = llt.matrixL();
  }

  detail::NormalStream normal(seed);
  SyntheticTrajectory out;
  out.series.borehole_id = std::move(borehole_id);
  out.series.eps_m = eps_m;
  out.series.depths = layout.depths;
  out.series.readings.reserve(static_cast<std::size_t>(steps) * layout.depths.size());
  out.latent_states.reserve(static_cast<std::size_t>(steps));

  Eigen::VectorXd x = x0;
  for (long k = 0; k < steps; ++k) {
    if (k > 0) {
      x = (f * x).eval();
      if (sigma_true > 0.0) x += noise_chol * normal.vector(dim);
    }
    out.latent_states.push_back(x);

    const double t = start_time + static_cast<double>(k) * dt;
    for (int d = 0; d < layout.n_depths(); ++d) {
      const double noise_scale = eps_m * layout.depths[static_cast<std::size_t>(d)];
      double a = x[layout.pos_a(d)];
      double b = x[layout.pos_b(d)];
      if (eps_m > 0.0) {
        a += noise_scale * normal();
        b += noise_scale * normal();
      }
      out.series.readings.push_back({t, layout.depths[static_cast<std::size_t>(d)], a, b});
    }
  }
  return out;
}

/// Observation-only view of simulate_trajectory.
inline BoreholeSeries generate_synthetic(const StateLayout& layout, double sigma_true,
                                         double eps_m, double dt, long steps, std::uint64_t seed,
                                         std::string borehole_id = "SYN",
                                         double start_time = kDefaultSyntheticStart,
                                         Eigen::VectorXd x0 = Eigen::VectorXd()) {
  return simulate_trajectory(layout, sigma_true, eps_m, dt, steps, seed, std::move(borehole_id),
                             start_time, std::move(x0))
      .series;
}

}  // namespace borekf
