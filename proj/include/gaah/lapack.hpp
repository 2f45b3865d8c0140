#pragma once

// Thin wrappers over the LAPACK routines the library relies on.

#include <complex>
#ifndef lapack_complex_float
#define lapack_complex_float std::complex<float>
#endif
#ifndef lapack_complex_double
#define lapack_complex_double std::complex<double>
#endif
#include <lapacke.h>

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>

#include "gaah/error.hpp"

extern "C" void openblas_set_num_threads(int num_threads);

namespace gaah::lapack {

/// Eigenvalues (ascending) of a symmetric tridiagonal matrix (dsterf).
inline Eigen::VectorXd tridiagonal_eigenvalues(Eigen::VectorXd diagonal,
                                               Eigen::VectorXd off_diagonal) {
  const auto n = static_cast<lapack_int>(diagonal.size());
  if (n == 0) return diagonal;
  const lapack_int info = LAPACKE_dsterf(n, diagonal.data(), off_diagonal.data());
  if (info != 0)
    throw NumericalError("dsterf failed to converge (info=" + std::to_string(info) + ")");
  return diagonal;
}

namespace detail {

/// Freivalds-style probe: checks A V s = V diag(w) s and V^T V s = s for a
/// fixed dense vector s in O(n^2). Some OpenBLAS builds pick a faulty
/// kernel on certain CPUs and return garbage here without an error code.
inline bool decomposition_is_consistent(const Eigen::MatrixXd& a, const Eigen::MatrixXd& v,
                                        const Eigen::VectorXd& w) {
  const auto n = a.rows();
  Eigen::VectorXd s(n);
  for (Eigen::Index i = 0; i < n; ++i) s[i] = 1.0 + 0.5 * std::sin(1.7 * static_cast<double>(i) + 0.3);
  const Eigen::VectorXd vs = v * s;
  const double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-300) * s.norm() * static_cast<double>(n);
  const double residual = (a * vs - v * w.cwiseProduct(s)).norm();
  const double ortho = (v.transpose() * vs - s).norm() / s.norm();
  return std::isfinite(residual) && residual <= 1e-9 * scale && ortho <= 1e-9 * static_cast<double>(n);
}

// 0 = untested, 1 = verified, -1 = faulty (use the Eigen fallback).
inline std::atomic<int> dense_driver_state{0};

}  // namespace detail

/// Full eigendecomposition of a real symmetric matrix (dsyevd). On return
/// `matrix` holds the orthonormal eigenvectors as columns. Results are
/// verified; if the LAPACK driver proves faulty, Eigen's solver is used
/// from then on.
inline Eigen::VectorXd symmetric_eigen(Eigen::MatrixXd& matrix) {
  const auto n = static_cast<lapack_int>(matrix.rows());
  Eigen::VectorXd values(n);
  if (n == 0) return values;
  if (detail::dense_driver_state.load() >= 0) {
    Eigen::MatrixXd original = matrix;
    const lapack_int info =
        LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'U', n, matrix.data(), n, values.data());
    if (info < 0) throw NumericalError("dsyevd rejected argument " + std::to_string(-info));
    if (info == 0 && detail::decomposition_is_consistent(original, matrix, values)) {
      detail::dense_driver_state.store(1);
      return values;
    }
    detail::dense_driver_state.store(-1);
    matrix = std::move(original);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(matrix, Eigen::ComputeEigenvectors);
  if (es.info() != Eigen::Success) throw NumericalError("symmetric eigensolver failed to converge");
  matrix = es.eigenvectors();
  return es.eigenvalues();
}

/// Runs one verified decomposition of a 300 x 300 test matrix and reports
/// whether the LAPACK driver produced correct results.
inline bool dense_driver_healthy() {
  if (detail::dense_driver_state.load() == 0) {
    Eigen::MatrixXd a(300, 300);
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = std::cos(0.37 * static_cast<double>(i * j + i + j));
    a = (0.5 * (a + a.transpose())).eval();
    symmetric_eigen(a);
  }
  return detail::dense_driver_state.load() > 0;
}

/// Restricts OpenBLAS to one thread so numerical results do not depend on
/// the machine's core count.
inline void pin_blas_threads() { openblas_set_num_threads(1); }

}  // namespace gaah::lapack
