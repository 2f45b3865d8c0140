#pragma once

// Eigenanalysis, inverse participation ratios and the (mu, V) phase diagram.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "gaah/error.hpp"
#include "gaah/lapack.hpp"
#include "gaah/model.hpp"
#include "gaah/parallel.hpp"
#include "gaah/rng.hpp"

namespace gaah {

inline constexpr std::size_t kDefaultDenseThreshold = 4096;

struct EigenSystem {
  Eigen::VectorXd values;   // ascending, rad/ns
  Eigen::MatrixXd vectors;  // orthonormal columns
};

inline EigenSystem eigendecompose(const Eigen::MatrixXd& h,
                                  std::size_t dense_threshold = kDefaultDenseThreshold) {
  if (h.rows() != h.cols()) throw ParameterError("eigendecompose needs a square matrix");
  if (static_cast<std::size_t>(h.rows()) > dense_threshold)
    throw ParameterError("dimension " + std::to_string(h.rows()) +
                         " exceeds the dense threshold " + std::to_string(dense_threshold) +
                         "; use Krylov propagation for dynamics at this size");
  EigenSystem es;
  es.vectors = h;
  es.values = lapack::symmetric_eigen(es.vectors);
  return es;
}

inline EigenSystem eigendecompose(const SectorHamiltonian& h,
                                  std::size_t dense_threshold = kDefaultDenseThreshold) {
  if (h.dimension() > dense_threshold)
    throw ParameterError("sector dimension " + std::to_string(h.dimension()) +
                         " exceeds the dense threshold " + std::to_string(dense_threshold) +
                         "; use Krylov propagation for dynamics at this size");
  return eigendecompose(h.dense(), dense_threshold);
}

namespace detail {

template <class Vec>
double ipr_impl(const Vec& psi) {
  double norm2 = 0.0;
  double sum4 = 0.0;
  for (Eigen::Index i = 0; i < psi.size(); ++i) {
    const double p = std::norm(psi[i]);
    norm2 += p;
    sum4 += p * p;
  }
  if (std::abs(norm2 - 1.0) > 1e-10)
    throw DomainError("ipr requires a normalized state, |psi|^2 = " + std::to_string(norm2));
  return sum4;
}

}  // namespace detail

/// Inverse participation ratio sum_i |psi_i|^4 of a normalized vector.
inline double ipr(const Eigen::VectorXd& psi) { return detail::ipr_impl(psi); }
inline double ipr(const Eigen::VectorXcd& psi) { return detail::ipr_impl(psi); }

enum class PhaseLabel { Extended, Critical, Localized };

inline std::string_view to_string(PhaseLabel p) {
  switch (p) {
    case PhaseLabel::Extended: return "extended";
    case PhaseLabel::Critical: return "critical";
    case PhaseLabel::Localized: return "localized";
  }
  return "?";
}

/// Extended for V < 2 and mu < 1, localized for V > 2 max(1, mu), critical
/// elsewhere (including both boundaries).
inline PhaseLabel classify_phase(double mu, double V) {
  if (!(mu >= 0.0) || !(V >= 0.0)) throw ParameterError("classify_phase needs mu, V >= 0");
  if (V < 2.0 && mu < 1.0) return PhaseLabel::Extended;
  if (V > 2.0 * std::max(1.0, mu)) return PhaseLabel::Localized;
  return PhaseLabel::Critical;
}

struct IprSummary {
  double mean_neg_ln_ipr = 0.0;  // mean over eigenstates of -ln IPR
  double mean_ipr = 0.0;         // mean over eigenstates of IPR
};

/// IPR statistics over every eigenvector of a symmetric tridiagonal matrix.
///
/// Eigenvalues come from dsterf. Each eigenvector is then built in O(n) from
/// a twisted factorization of T - E: the forward pivots D+ and backward
/// pivots D- give gamma_k = D+_k + D-_k - (d_k - E), the twist index r
/// minimises |gamma_r|, and the vector is z_r = 1 with the two one-sided
/// recurrences filling in the rest. Eight shifts are processed together so
/// the pivot recurrences vectorise.
inline IprSummary tridiagonal_ipr_summary(const Tridiagonal& t) {
  const auto n = static_cast<std::size_t>(t.diagonal.size());
  if (n == 0) throw ParameterError("empty tridiagonal matrix");
  if (n == 1) return {0.0, 1.0};
  const Eigen::VectorXd w = lapack::tridiagonal_eigenvalues(t.diagonal, t.off_diagonal);
  const double* d = t.diagonal.data();
  const double* e = t.off_diagonal.data();

  std::vector<double> e2(n - 1);
  double max_e2 = 1.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    e2[i] = e[i] * e[i];
    max_e2 = std::max(max_e2, e2[i]);
  }
  const double pivmin = std::numeric_limits<double>::min() * max_e2;

  constexpr std::size_t W = 8;
  std::vector<double> dp(n * W), dm(n * W), z(n);
  double sum_neg_ln = 0.0;
  double sum_ipr = 0.0;
  for (std::size_t k0 = 0; k0 < n; k0 += W) {
    std::array<double, W> shift{};
    const std::size_t active = std::min(W, n - k0);
    for (std::size_t l = 0; l < W; ++l) shift[l] = w[static_cast<Eigen::Index>(std::min(k0 + l, n - 1))];

    for (std::size_t l = 0; l < W; ++l) dp[l] = d[0] - shift[l];
    for (std::size_t i = 0; i + 1 < n; ++i) {
      double* cur = &dp[i * W];
      double* nxt = &dp[(i + 1) * W];
      for (std::size_t l = 0; l < W; ++l) {
        const double p = std::abs(cur[l]) < pivmin ? -pivmin : cur[l];
        cur[l] = p;
        nxt[l] = d[i + 1] - shift[l] - e2[i] / p;
      }
    }
    for (std::size_t l = 0; l < W; ++l) dm[(n - 1) * W + l] = d[n - 1] - shift[l];
    for (std::size_t i = n - 1; i-- > 0;) {
      double* cur = &dm[(i + 1) * W];
      double* nxt = &dm[i * W];
      for (std::size_t l = 0; l < W; ++l) {
        const double p = std::abs(cur[l]) < pivmin ? -pivmin : cur[l];
        cur[l] = p;
        nxt[l] = d[i] - shift[l] - e2[i] / p;
      }
    }

    for (std::size_t l = 0; l < active; ++l) {
      std::size_t twist = 0;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) {
        const double g = std::abs(dp[i * W + l] + dm[i * W + l] - (d[i] - shift[l]));
        if (g < best) {
          best = g;
          twist = i;
        }
      }
      z[twist] = 1.0;
      for (std::size_t i = twist; i-- > 0;) z[i] = -e[i] * z[i + 1] / dp[i * W + l];
      for (std::size_t i = twist; i + 1 < n; ++i) z[i + 1] = -e[i] * z[i] / dm[(i + 1) * W + l];
      double n2 = 0.0;
      double n4 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double p = z[i] * z[i];
        n2 += p;
        n4 += p * p;
      }
      if (!std::isfinite(n2) || !std::isfinite(n4) || n2 <= 0.0)
        throw NumericalError("twisted eigenvector overflowed for eigenvalue " +
                             std::to_string(shift[l]));
      const double value = n4 / (n2 * n2);
      sum_ipr += value;
      sum_neg_ln -= std::log(value);
    }
  }
  return {sum_neg_ln / static_cast<double>(n), sum_ipr / static_cast<double>(n)};
}

enum class IprStatistic {
  MeanNegLog,  // mean of -ln IPR over eigenstates
  NegLogMean,  // -ln of the mean IPR over eigenstates
};

struct PhaseMapOptions {
  double lambda = kDefaultLambda;
  double alpha = kGoldenAlpha;
  IprStatistic statistic = IprStatistic::MeanNegLog;
  unsigned workers = 1;
};

struct PhaseMapPoint {
  double mu = 0.0;
  double V = 0.0;
  double mean = 0.0;    // average over phase draws of the per-draw statistic
  double std_error = 0.0;  // sample std over draws / sqrt(n_delta)
  int n_delta = 0;
};

/// Single-particle IPR statistic over a list of (mu, V) points. Draw r of
/// point p uses phase draw_phase(seed, p, r).
inline std::vector<PhaseMapPoint> ipr_phase_map(const std::vector<std::pair<double, double>>& grid,
                                                int L, int n_delta, std::uint64_t seed,
                                                const PhaseMapOptions& opt = {}) {
  if (L < 2) throw ParameterError("phase map needs L >= 2");
  if (n_delta < 1) throw ParameterError("phase map needs n_delta >= 1");
  const std::size_t draws = static_cast<std::size_t>(n_delta);
  std::vector<double> values(grid.size() * draws);
  parallel_for(values.size(), opt.workers, [&](std::size_t task) {
    const std::size_t point = task / draws;
    const std::size_t draw = task % draws;
    ModelParams p;
    p.L = L;
    p.lambda = opt.lambda;
    p.alpha = opt.alpha;
    p.mu = grid[point].first;
    p.V = grid[point].second;
    p.delta = draw_phase(seed, point, draw);
    const auto s = tridiagonal_ipr_summary(single_particle_tridiagonal(p));
    values[task] = opt.statistic == IprStatistic::MeanNegLog ? s.mean_neg_ln_ipr
                                                             : -std::log(s.mean_ipr);
  });
  std::vector<PhaseMapPoint> out;
  out.reserve(grid.size());
  for (std::size_t point = 0; point < grid.size(); ++point) {
    double sum = 0.0;
    for (std::size_t r = 0; r < draws; ++r) sum += values[point * draws + r];
    const double mean = sum / static_cast<double>(draws);
    double var = 0.0;
    for (std::size_t r = 0; r < draws; ++r) {
      const double dlt = values[point * draws + r] - mean;
      var += dlt * dlt;
    }
    const double se =
        draws > 1 ? std::sqrt(var / static_cast<double>(draws - 1) / static_cast<double>(draws)) : 0.0;
    out.push_back({grid[point].first, grid[point].second, mean, se, n_delta});
  }
  return out;
}

}  // namespace gaah
