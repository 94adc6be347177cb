#include <catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <random>

#include "borekf/errors.hpp"
#include "borekf/model.hpp"
#include "test_support.hpp"

using namespace borekf;

namespace {

// Independent expansion of the transition case definition, entry by entry.
Eigen::MatrixXd transition_by_cases(int n_depths, double dt) {
  const int n2 = 2 * n_depths;
  Eigen::MatrixXd f(2 * n2, 2 * n2);
  for (int i = 0; i < 2 * n2; ++i) {
    for (int j = 0; j < 2 * n2; ++j) {
      if (i < n2) {
        f(i, j) = j < n2 ? (i == j ? 1.0 : 0.0) : (i == j - n2 ? dt : 0.0);
      } else {
        f(i, j) = j < n2 ? 0.0 : (i == j ? 1.0 : 0.0);
      }
    }
  }
  return f;
}

}  // namespace

TEST_CASE("layout validation") {
  CHECK_THROWS_AS(make_layout({}), Error);
  CHECK_THROWS_AS(make_layout({1.0, 1.0}), Error);
  CHECK_THROWS_AS(make_layout({2.0, 1.0}), Error);
  CHECK_THROWS_AS(make_layout({-1.0, 2.0}), Error);
  CHECK_THROWS_AS(make_layout({0.0}), Error);

  const StateLayout layout = make_layout({1.5, 3.0, 5.0});
  CHECK(layout.n_depths() == 3);
  CHECK(layout.dim_state() == 12);
  CHECK(layout.dim_obs() == 6);
}

TEST_CASE("transition matrix single depth") {
  const StateLayout layout = make_layout({2.0});

  Eigen::MatrixXd expected(4, 4);
  expected << 1, 0, 1, 0,
              0, 1, 0, 1,
              0, 0, 1, 0,
              0, 0, 0, 1;
  CHECK(build_transition(layout, 1.0) == expected);

  CHECK(build_transition(layout, 0.0) == Eigen::MatrixXd::Identity(4, 4));

  CHECK_THROWS_AS(build_transition(layout, -0.5), Error);
  CHECK_THROWS_AS(build_transition(layout, std::nan("")), Error);
}

TEST_CASE("transition matrix two depths matches the case expansion") {
  const StateLayout layout = make_layout({1.0, 2.0});
  const Eigen::MatrixXd f = build_transition(layout, 0.5);
  CHECK(f == transition_by_cases(2, 0.5));
  for (const int i : {0, 1, 2, 3}) CHECK(f(i, i + 4) == 0.5);
}

TEST_CASE("transition semigroup property") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> dist(0.0, 5.0);
  for (int n_depths : {1, 2, 3}) {
    StateLayout layout;
    for (int d = 1; d <= n_depths; ++d) layout.depths.push_back(d);
    for (int trial = 0; trial < 20; ++trial) {
      const double dt1 = dist(rng), dt2 = dist(rng);
      const Eigen::MatrixXd lhs =
          build_transition(layout, dt1) * build_transition(layout, dt2);
      CHECK(test::matrices_close(lhs, build_transition(layout, dt1 + dt2), 1e-14));
    }
  }
}

TEST_CASE("observation matrix selects positions") {
  const StateLayout one = make_layout({1.0});
  Eigen::MatrixXd expected(2, 4);
  expected << 1, 0, 0, 0,
              0, 1, 0, 0;
  CHECK(build_observation(one) == expected);

  const StateLayout two = make_layout({1.0, 2.0});
  const Eigen::MatrixXd h = build_observation(two);
  CHECK(h.leftCols(4) == Eigen::MatrixXd::Identity(4, 4));
  CHECK(h.rightCols(4) == Eigen::MatrixXd::Zero(4, 4));

  std::mt19937 rng(11);
  std::normal_distribution<double> dist;
  Eigen::VectorXd x(8);
  for (int i = 0; i < 8; ++i) x[i] = dist(rng);
  CHECK((h * x) == x.head(4));
}

TEST_CASE("kinematic consistency: H F x = position + dt * velocity") {
  const StateLayout layout = make_layout({1.0, 4.0});
  const double dt = 0.75;
  const Eigen::MatrixXd f = build_transition(layout, dt);
  const Eigen::MatrixXd h = build_observation(layout);
  std::mt19937 rng(13);
  std::normal_distribution<double> dist;
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd x(8);
    for (int i = 0; i < 8; ++i) x[i] = dist(rng);
    const Eigen::VectorXd expected = x.head(4) + dt * x.tail(4);
    CHECK(test::vectors_close(h * f * x, expected, 1e-15));
  }
}

TEST_CASE("observation covariance scales with depth") {
  const StateLayout layout = make_layout({1.5});
  const Eigen::MatrixXd r = build_observation_covariance(layout, 0.01);
  CHECK(r.rows() == 2);
  CHECK(r(0, 0) == Catch::Approx(0.000225).epsilon(1e-12));
  CHECK(r(1, 1) == Catch::Approx(0.000225).epsilon(1e-12));
  CHECK(r(0, 1) == 0.0);

  // eps_m * d = 1 gives the identity.
  const Eigen::MatrixXd unit = build_observation_covariance(make_layout({4.0}), 0.25);
  CHECK(unit == Eigen::MatrixXd::Identity(2, 2));

  const Eigen::MatrixXd r2 = build_observation_covariance(make_layout({2.0, 4.0}), 0.5);
  Eigen::VectorXd expected(4);
  expected << 1.0, 1.0, 4.0, 4.0;
  CHECK(r2.diagonal() == expected);
  CHECK(r2 == Eigen::MatrixXd(expected.asDiagonal()));

  CHECK_THROWS_AS(build_observation_covariance(layout, 0.0), Error);
  CHECK_THROWS_AS(build_observation_covariance(layout, -1.0), Error);
  CHECK((r.diagonal().array() > 0.0).all());
}

TEST_CASE("make_model assembles consistent dimensions") {
  const StateLayout layout = make_layout({1.0, 2.0, 3.0});
  const ModelMatrices m = make_model(layout, 0.5, 0.02, {});
  CHECK(m.dim_state() == 12);
  CHECK(m.dim_obs() == 6);
  CHECK(m.Q == Eigen::MatrixXd::Zero(12, 12));
  CHECK(m.dt == 0.5);
  CHECK_THROWS_AS(make_model(layout, 0.0, 0.02, {}), Error);
  CHECK_THROWS_AS(make_model(layout, 1.0, 0.02, Eigen::MatrixXd::Zero(3, 3)), Error);
}
