#pragma once

// Quasi-periodic hard-core boson chain with modulated hoppings and on-site
// potentials. Units: hbar = 1, energies in rad/ns, times in ns.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "gaah/basis.hpp"
#include "gaah/error.hpp"

namespace gaah {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Base coupling lambda = 2*pi * 4 MHz in rad/ns.
inline constexpr double kDefaultLambda = 2.0 * std::numbers::pi * 0.004;
/// Inverse golden ratio.
inline const double kGoldenAlpha = (std::sqrt(5.0) - 1.0) / 2.0;

struct ModelParams {
  int L = 10;
  double lambda = kDefaultLambda;
  double mu = 0.0;
  double V = 0.0;
  double alpha = kGoldenAlpha;
  double delta = 0.0;

  void validate() const {
    if (L < 1 || L > 4096) throw ParameterError("L must lie in [1, 4096], got " + std::to_string(L));
    if (!(lambda > 0.0) || !std::isfinite(lambda))
      throw ParameterError("lambda must be positive and finite");
    if (!(mu >= 0.0) || !std::isfinite(mu)) throw ParameterError("mu must be >= 0");
    if (!(V >= 0.0) || !std::isfinite(V)) throw ParameterError("V must be >= 0");
    if (!std::isfinite(alpha)) throw ParameterError("alpha must be finite");
    if (!(delta >= -std::numbers::pi && delta < std::numbers::pi))
      throw ParameterError("delta must lie in [-pi, pi), got " + std::to_string(delta));
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Maps any finite phase into [-pi, pi).
inline double wrap_phase(double phase) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(phase + std::numbers::pi, two_pi);
  if (w < 0) w += two_pi;
  w -= std::numbers::pi;
  return w >= std::numbers::pi ? -std::numbers::pi : w;
}

namespace detail {

/// Hopping on bond (site, site+1), site 1-based.
inline double coupling_value(int site, double lambda, double mu, double alpha, double delta) {
  return lambda *
         (1.0 + mu * std::cos(2.0 * std::numbers::pi * (site + 0.5) * alpha + delta));
}

inline double onsite_value(int site, double lambda, double V, double alpha, double delta) {
  return lambda * V * std::cos(2.0 * std::numbers::pi * site * alpha + delta);
}

}  // namespace detail

struct ChainProfile {
  std::vector<double> J;  // L-1 bond couplings, J[j] joins sites j+1 and j+2
  std::vector<double> h;  // L on-site potentials
};

inline std::vector<double> coupling_profile(const ModelParams& p) {
  p.validate();
  std::vector<double> J(static_cast<std::size_t>(p.L - 1));
  for (int j = 1; j < p.L; ++j)
    J[static_cast<std::size_t>(j - 1)] = detail::coupling_value(j, p.lambda, p.mu, p.alpha, p.delta);
  return J;
}

inline std::vector<double> onsite_profile(const ModelParams& p) {
  p.validate();
  std::vector<double> h(static_cast<std::size_t>(p.L));
  for (int j = 1; j <= p.L; ++j)
    h[static_cast<std::size_t>(j - 1)] = detail::onsite_value(j, p.lambda, p.V, p.alpha, p.delta);
  return h;
}

inline ChainProfile chain_profile(const ModelParams& p) {
  return {coupling_profile(p), onsite_profile(p)};
}

/// Writes "j,J_j,h_j" rows; J is empty on the last site.
inline void write_profile_csv(std::ostream& os, const ModelParams& p) {
  const auto prof = chain_profile(p);
  char buf[96];
  os << "j,J_j,h_j\n";
  for (int j = 1; j <= p.L; ++j) {
    const auto idx = static_cast<std::size_t>(j - 1);
    if (j < p.L)
      std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", j, prof.J[idx], prof.h[idx]);
    else
      std::snprintf(buf, sizeof buf, "%d,,%.17g\n", j, prof.h[idx]);
    os << buf;
  }
}

/// Symmetric tridiagonal matrix stored by diagonals.
struct Tridiagonal {
  Eigen::VectorXd diagonal;
  Eigen::VectorXd off_diagonal;  // size n-1

  Eigen::MatrixXd dense() const {
    const auto n = diagonal.size();
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    m.diagonal() = diagonal;
    for (Eigen::Index i = 0; i + 1 < n; ++i) m(i, i + 1) = m(i + 1, i) = off_diagonal[i];
    return m;
  }
};

inline Tridiagonal single_particle_tridiagonal(const ModelParams& p) {
  const auto prof = chain_profile(p);
  Tridiagonal t;
  t.diagonal = Eigen::Map<const Eigen::VectorXd>(prof.h.data(), p.L);
  t.off_diagonal = Eigen::Map<const Eigen::VectorXd>(prof.J.data(), p.L - 1);
  return t;
}

/// L x L single-particle Hamiltonian.
inline Eigen::MatrixXd build_single_particle(const ModelParams& p) {
  return single_particle_tridiagonal(p).dense();
}

/// Largest Gershgorin row sum of a sparse symmetric matrix.
inline double gershgorin_bound(const SparseMatrix& m) {
  double bound = 0.0;
  for (Eigen::Index r = 0; r < m.outerSize(); ++r) {
    double s = 0.0;
    for (SparseMatrix::InnerIterator it(m, r); it; ++it) s += std::abs(it.value());
    bound = std::max(bound, s);
  }
  return bound;
}

struct SectorHamiltonian {
  std::shared_ptr<const SectorBasis> basis;
  SparseMatrix entries;
  std::optional<Eigen::MatrixXd> single_particle;
  double spectral_bound = 0.0;

  std::size_t dimension() const noexcept { return static_cast<std::size_t>(entries.rows()); }
  Eigen::MatrixXd dense() const { return Eigen::MatrixXd(entries); }
};

namespace detail {

/// Assembles H over an arbitrary ordered list of bitmasks; `index_of` maps a
/// reachable bitmask to its row.
template <class IndexOf>
SparseMatrix assemble(const ChainProfile& prof, int L, const std::vector<std::uint32_t>& states,
                      IndexOf&& index_of) {
  const auto dim = static_cast<Eigen::Index>(states.size());
  SparseMatrix m(dim, dim);
  Eigen::VectorXi nnz(dim);
  for (Eigen::Index r = 0; r < dim; ++r) {
    const auto s = states[static_cast<std::size_t>(r)];
    int hops = 0;
    for (int j = 0; j + 1 < L; ++j) hops += ((s >> j) ^ (s >> (j + 1))) & 1U;
    nnz[r] = hops + 1;
  }
  m.reserve(nnz);
  std::vector<std::pair<Eigen::Index, double>> row;
  for (Eigen::Index r = 0; r < dim; ++r) {
    const auto s = states[static_cast<std::size_t>(r)];
    row.clear();
    double diag = 0.0;
    for (int j = 0; j < L; ++j)
      if ((s >> j) & 1U) diag += prof.h[static_cast<std::size_t>(j)];
    row.emplace_back(r, diag);
    for (int j = 0; j + 1 < L; ++j) {
      if ((((s >> j) ^ (s >> (j + 1))) & 1U) == 0) continue;
      const std::uint32_t target = s ^ (3U << j);
      row.emplace_back(static_cast<Eigen::Index>(index_of(target)),
                       prof.J[static_cast<std::size_t>(j)]);
    }
    std::sort(row.begin(), row.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [c, v] : row) m.insert(r, c) = v;
  }
  m.makeCompressed();
  return m;
}

}  // namespace detail

/// Hamiltonian restricted to `basis`. Hops only move an excitation onto an
/// empty neighbour, so hard-core exclusion is structural.
inline SectorHamiltonian build_sector_hamiltonian(const ModelParams& p,
                                                  std::shared_ptr<const SectorBasis> basis,
                                                  bool with_single_particle = false) {
  if (!basis) throw ParameterError("null basis");
  if (basis->sites() != p.L)
    throw ParameterError("basis has L=" + std::to_string(basis->sites()) +
                         " but parameters have L=" + std::to_string(p.L));
  const auto prof = chain_profile(p);
  SectorHamiltonian h;
  h.entries = detail::assemble(prof, p.L, basis->states(),
                               [&](std::uint32_t s) { return basis->rank(s); });
  h.spectral_bound = gershgorin_bound(h.entries);
  if (with_single_particle) h.single_particle = build_single_particle(p);
  h.basis = std::move(basis);
  return h;
}

inline SectorHamiltonian build_sector_hamiltonian(const ModelParams& p, int excitations,
                                                  bool with_single_particle = false) {
  return build_sector_hamiltonian(p, std::make_shared<const SectorBasis>(p.L, excitations),
                                  with_single_particle);
}

/// The same operator on the full 2^L space, rows indexed by bitmask.
inline SparseMatrix build_full_hamiltonian(const ModelParams& p) {
  if (p.L > 16) throw ParameterError("full-space Hamiltonian limited to L <= 16");
  const auto prof = chain_profile(p);
  std::vector<std::uint32_t> states(std::size_t{1} << p.L);
  for (std::size_t s = 0; s < states.size(); ++s) states[s] = static_cast<std::uint32_t>(s);
  return detail::assemble(prof, p.L, states, [](std::uint32_t s) { return s; });
}

}  // namespace gaah
