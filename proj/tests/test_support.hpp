#pragma once

#include <Eigen/Dense>
#include <catch_amalgamated.hpp>
#include <cmath>

namespace borekf::test {

inline bool matrices_close(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double rel,
                           double abs_tol = 0.0) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  const double scale = std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), 1e-300});
  return (a - b).cwiseAbs().maxCoeff() <= std::max(rel * scale, abs_tol);
}

inline bool vectors_close(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double rel,
                          double abs_tol = 0.0) {
  return matrices_close(a, b, rel, abs_tol);
}

inline double min_eigenvalue(const Eigen::MatrixXd& m) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues().minCoeff();
}

inline bool is_psd(const Eigen::MatrixXd& m, double slack_rel = 1e-9) {
  return min_eigenvalue(m) >= -slack_rel * std::max(m.trace(), 1e-300);
}

}  // namespace borekf::test
