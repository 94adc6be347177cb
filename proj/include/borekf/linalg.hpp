#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "borekf/errors.hpp"

namespace borekf {

inline void symmetrize(Eigen::MatrixXd& m) { m = ((m + m.transpose()) * 0.5).eval(); }

inline Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& m) {
  return (m + m.transpose()) * 0.5;
}

/// Relative diagonal jitter used before factorizing a covariance that may be
/// PSD-but-singular (degenerate R rows, collapsed posteriors).
inline Eigen::MatrixXd regularized(const Eigen::MatrixXd& cov) {
  const double dim = static_cast<double>(cov.rows());
  const double jitter = 1e-12 * cov.trace() / dim;
  Eigen::MatrixXd out = symmetrized(cov);
  out.diagonal().array() += jitter;
  return out;
}

/// Cholesky of a regularized covariance; throws errc::numerical on failure.
inline Eigen::LLT<Eigen::MatrixXd> cholesky_or_throw(const Eigen::MatrixXd& cov,
                                                     const std::string& what) {
  Eigen::LLT<Eigen::MatrixXd> llt(regularized(cov));
  if (llt.info() != Eigen::Success) {
    throw_numerical(what + ": covariance not positive definite");
  }
  return llt;
}

inline double log_det_from_llt(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

/// Clamp negative eigenvalues to zero. Used to keep EM-updated covariances PSD
/// against rounding; in exact arithmetic the update is already PSD.
inline void clamp_psd(Eigen::MatrixXd& m) {
  symmetrize(m);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.eigenvalues().minCoeff() >= 0.0) return;
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
  m = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  symmetrize(m);
}

/// Row-major lower triangle (diagonal included) of a symmetric matrix.
inline std::vector<double> pack_lower_triangular(const Eigen::MatrixXd& m) {
  const Eigen::Index n = m.rows();
  std::vector<double> packed;
  packed.reserve(static_cast<std::size_t>(n * (n + 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) packed.push_back(m(i, j));
  return packed;
}

inline Eigen::MatrixXd unpack_lower_triangular(const std::vector<double>& packed, Eigen::Index n) {
  if (static_cast<Eigen::Index>(packed.size()) != n * (n + 1) / 2) {
    throw_parse("packed covariance has wrong length for dimension " + std::to_string(n));
  }
  Eigen::MatrixXd m(n, n);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) {
      m(i, j) = packed[k];
      m(j, i) = packed[k];
      ++k;
    }
  return m;
}

}  // namespace borekf
