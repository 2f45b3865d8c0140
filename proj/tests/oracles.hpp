#pragma once

// Reference implementations used only by the tests. They are written
// independently of the library (explicit occupation arrays, sorting instead
// of combinadic ranks, dense matrix exponentials) so that agreement is
// meaningful.

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <unsupported/Eigen/MatrixFunctions>
#include <vector>

namespace oracle {

inline std::uint64_t binomial_by_factorial(int n, int k) {
  if (k < 0 || k > n) return 0;
  long double num = 1.0L;
  for (int i = 1; i <= k; ++i) num = num * static_cast<long double>(n - k + i) / static_cast<long double>(i);
  return static_cast<std::uint64_t>(std::llround(num));
}

inline double hopping(int j, double lambda, double mu, double alpha, double delta) {
  return lambda * (1.0 + mu * std::cos(2.0 * std::numbers::pi * alpha * (j + 0.5) + delta));
}

inline double potential(int j, double lambda, double V, double alpha, double delta) {
  return lambda * V * std::cos(2.0 * std::numbers::pi * alpha * j + delta);
}

/// Dense Hamiltonian on all 2^L occupation patterns, built from explicit
/// creation/annihilation operators on occupation arrays.
inline Eigen::MatrixXd full_space_hamiltonian(int L, double lambda, double mu, double V, double alpha,
                                              double delta) {
  const int dim = 1 << L;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
  for (int col = 0; col < dim; ++col) {
    std::vector<int> n(static_cast<std::size_t>(L));
    for (int j = 0; j < L; ++j) n[static_cast<std::size_t>(j)] = (col / (1 << j)) % 2;
    for (int j = 1; j <= L; ++j)
      h(col, col) += potential(j, lambda, V, alpha, delta) * n[static_cast<std::size_t>(j - 1)];
    for (int j = 1; j < L; ++j) {
      const double J = hopping(j, lambda, mu, alpha, delta);
      // a_j^+ a_{j+1} and its conjugate, hard-core: occupation in {0, 1}.
      for (int dir = 0; dir < 2; ++dir) {
        const int from = dir == 0 ? j + 1 : j;
        const int to = dir == 0 ? j : j + 1;
        auto m = n;
        if (m[static_cast<std::size_t>(from - 1)] != 1 || m[static_cast<std::size_t>(to - 1)] != 0) continue;
        m[static_cast<std::size_t>(from - 1)] = 0;
        m[static_cast<std::size_t>(to - 1)] = 1;
        int row = 0;
        for (int s = 0; s < L; ++s) row += m[static_cast<std::size_t>(s)] << s;
        h(row, col) += J;
      }
    }
  }
  return h;
}

/// Sector states with M excitations sorted by integer value.
inline std::vector<int> sorted_sector(int L, int M) {
  std::vector<int> out;
  for (int s = 0; s < (1 << L); ++s)
    if (std::popcount(static_cast<unsigned>(s)) == M) out.push_back(s);
  std::sort(out.begin(), out.end());
  return out;
}

inline Eigen::MatrixXd project(const Eigen::MatrixXd& full, const std::vector<int>& states) {
  const auto d = static_cast<Eigen::Index>(states.size());
  Eigen::MatrixXd out(d, d);
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < d; ++c) out(r, c) = full(states[static_cast<std::size_t>(r)], states[static_cast<std::size_t>(c)]);
  return out;
}

/// exp(-i H t) psi via a dense Pade matrix exponential.
inline Eigen::VectorXcd expm_apply(const Eigen::MatrixXd& h, double t, const Eigen::VectorXcd& psi) {
  const Eigen::MatrixXcd a = std::complex<double>(0.0, -t) * h.cast<std::complex<double>>();
  const Eigen::MatrixXcd u = a.exp();
  return u * psi;
}

}  // namespace oracle
