#pragma once

// Late-time averages, parameter-path sweeps, finite-size rescaling, scaling
// fits and readout-error mitigation.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gaah/basis.hpp"
#include "gaah/dynamics.hpp"
#include "gaah/error.hpp"
#include "gaah/model.hpp"
#include "gaah/parallel.hpp"
#include "gaah/rng.hpp"

namespace gaah {

struct LateTimeStat {
  double mean = 0.0;
  double std_error = 0.0;
  double window_start = 0.0;
  double window_end = 0.0;
  std::size_t n_samples = 0;  // trajectories x time points
};

/// Average over every trajectory and every time point in [t_start, t_end].
/// The standard error is taken across per-trajectory window means.
inline LateTimeStat late_time_average(const TimeSeries& series, double t_start, double t_end) {
  if (!(t_start < t_end)) throw ParameterError("window needs t_start < t_end");
  if (series.samples.empty()) throw ParameterError("series has no trajectories");
  const double slack = 1e-9 * std::max(1.0, std::abs(t_end));
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < series.times.size(); ++k)
    if (series.times[k] >= t_start - slack && series.times[k] <= t_end + slack) idx.push_back(k);
  if (idx.size() < 2)
    throw ParameterError("window [" + std::to_string(t_start) + ", " + std::to_string(t_end) +
                         "] holds fewer than two time points");
  const std::size_t n = series.samples.size();
  std::vector<double> traj_mean(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (const auto k : idx) s += series.samples[r][k];
    traj_mean[r] = s / static_cast<double>(idx.size());
  }
  double mean = 0.0;
  for (const double m : traj_mean) mean += m;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (const double m : traj_mean) var += (m - mean) * (m - mean);
  LateTimeStat out;
  out.mean = mean;
  out.std_error = n > 1 ? std::sqrt(var / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
  out.window_start = t_start;
  out.window_end = t_end;
  out.n_samples = n * idx.size();
  return out;
}

/// ln C(L, L/2) for even L.
inline double log_half_filled_dimension(int L) {
  if (L < 2 || L % 2 != 0) throw ParameterError("half filling needs an even L, got " + std::to_string(L));
  return std::lgamma(L + 1.0) - 2.0 * std::lgamma(L / 2 + 1.0);
}

/// Rescales a late-time entropy from size L_from onto size L_to by the ratio
/// of the logarithms of the half-filled sector dimensions.
inline double rescale_pe(double value, int L_from, int L_to) {
  if (L_from == L_to) {
    log_half_filled_dimension(L_from);
    return value;
  }
  return value * log_half_filled_dimension(L_to) / log_half_filled_dimension(L_from);
}

using ParameterPoint = std::pair<double, double>;  // (mu, V)

/// Points from `from` to `to` inclusive in steps of `step` along one axis.
inline std::vector<double> linear_range(double from, double to, double step) {
  if (!(step > 0.0) || to < from) throw ParameterError("invalid range");
  const auto n = static_cast<std::size_t>(std::floor((to - from) / step + 1e-9));
  std::vector<double> out(n + 1);
  for (std::size_t k = 0; k <= n; ++k) out[k] = from + static_cast<double>(k) * step;
  return out;
}

/// The three cuts through the (mu, V) plane: I at mu = 0.5 across V,
/// II at V = 1 across mu, III at V = 3 across mu.
inline std::vector<ParameterPoint> standard_path(const std::string& id, double step = 0.25) {
  std::vector<ParameterPoint> out;
  if (id == "I") {
    for (const double v : linear_range(1.0, 4.0, step)) out.emplace_back(0.5, v);
  } else if (id == "II") {
    for (const double mu : linear_range(0.5, 2.0, step)) out.emplace_back(mu, 1.0);
  } else if (id == "III") {
    for (const double mu : linear_range(0.0, 2.0, step)) out.emplace_back(mu, 3.0);
  } else {
    throw ParameterError("unknown path '" + id + "' (expected I, II or III)");
  }
  return out;
}

struct SweepProtocol {
  int L = 10;
  double lambda = kDefaultLambda;
  double alpha = kGoldenAlpha;
  int n_delta = 10;
  std::uint64_t seed = 0;
  double window_start = 350.0;
  double window_end = 450.0;
  double dt = 2.0;
  std::vector<double> orders{2.0};
  unsigned workers = 1;
  std::size_t dense_threshold = 1024;
  std::vector<FockState> initial_states;  // empty selects the default half-filled set
};

struct SweepPoint {
  double mu = 0.0;
  double V = 0.0;
  std::vector<LateTimeStat> stats;  // one per order
};

/// Late-time entropy statistics at each point of `path`. Draw r at point p
/// uses phase draw_phase(seed, p, r) and is shared by every initial state.
inline std::vector<SweepPoint> path_sweep(const std::vector<ParameterPoint>& path, const SweepProtocol& proto) {
  if (path.empty()) throw ParameterError("path has no points");
  if (proto.n_delta < 1) throw ParameterError("n_delta must be >= 1");
  const auto states =
      proto.initial_states.empty() ? default_initial_states(proto.L, proto.L / 2) : proto.initial_states;
  const auto times = time_grid(proto.window_start, proto.window_end, proto.dt);
  const std::size_t draws = static_cast<std::size_t>(proto.n_delta);
  const std::size_t n_orders = proto.orders.size();

  QuenchOptions qopt;
  qopt.evolve.dense_threshold = proto.dense_threshold;
  qopt.workers = 1;
  // Per (point, draw) task: one PeSeries holding every initial state.
  std::vector<PeSeries> parts(path.size() * draws);
  parallel_for(parts.size(), proto.workers, [&](std::size_t task) {
    const std::size_t point = task / draws;
    const std::size_t draw = task % draws;
    ModelParams p;
    p.L = proto.L;
    p.lambda = proto.lambda;
    p.alpha = proto.alpha;
    p.mu = path[point].first;
    p.V = path[point].second;
    const std::vector<double> delta{draw_phase(proto.seed, point, draw)};
    parts[task] = quench_pe_series(p, states, delta, times, proto.orders, qopt);
  });

  std::vector<SweepPoint> out;
  out.reserve(path.size());
  for (std::size_t point = 0; point < path.size(); ++point) {
    SweepPoint sp{path[point].first, path[point].second, {}};
    for (std::size_t o = 0; o < n_orders; ++o) {
      TimeSeries merged;
      merged.times = times;
      for (std::size_t r = 0; r < draws; ++r) {
        const auto& s = parts[point * draws + r].series[o].samples;
        merged.samples.insert(merged.samples.end(), s.begin(), s.end());
      }
      sp.stats.push_back(late_time_average(merged, proto.window_start, proto.window_end));
    }
    out.push_back(std::move(sp));
  }
  return out;
}

struct ScalingFit {
  double a = 0.0;         // slope
  double b = 0.0;         // intercept
  double residual = 0.0;  // RMS residual
  std::size_t points = 0;
};

/// Ordinary least squares y = a x + b over at least three points.
inline ScalingFit scaling_fit(const std::vector<std::pair<double, double>>& xy) {
  if (xy.size() < 3) throw ParameterError("scaling fit needs at least 3 points");
  const double n = static_cast<double>(xy.size());
  double mx = 0.0, my = 0.0;
  for (const auto& [x, y] : xy) {
    mx += x;
    my += y;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [x, y] : xy) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  if (!(sxx > 1e-24 * std::max(1.0, mx * mx) * n))
    throw DomainError("scaling fit abscissas are degenerate");
  ScalingFit f;
  f.a = sxy / sxx;
  f.b = my - f.a * mx;
  double ss = 0.0;
  for (const auto& [x, y] : xy) {
    const double r = y - (f.a * x + f.b);
    ss += r * r;
  }
  f.residual = std::sqrt(ss / n);
  f.points = xy.size();
  return f;
}

struct ReadoutFidelity {
  double F0 = 1.0;  // P(read 0 | prepared 0)
  double F1 = 1.0;  // P(read 1 | prepared 1)
};

/// Per-qubit readout fidelities of the reference device, Q1..Q10.
inline constexpr std::array<ReadoutFidelity, 10> kReferenceReadout = {{
    {0.969, 0.926}, {0.947, 0.901}, {0.966, 0.926}, {0.956, 0.907}, {0.956, 0.918},
    {0.948, 0.909}, {0.968, 0.915}, {0.951, 0.895}, {0.957, 0.919}, {0.954, 0.913},
}};

struct MitigatedDistribution {
  Eigen::VectorXd probabilities;
  double clipped_mass = 0.0;  // total negative weight removed before renormalising
};

namespace detail {

inline int qubit_count(Eigen::Index size, std::size_t n_fidelities) {
  int L = 0;
  while ((Eigen::Index{1} << L) < size) ++L;
  if ((Eigen::Index{1} << L) != size) throw ParameterError("joint distribution length must be 2^L");
  if (static_cast<std::size_t>(L) != n_fidelities)
    throw ParameterError("need one fidelity pair per qubit (" + std::to_string(L) + "), got " +
                         std::to_string(n_fidelities));
  return L;
}

inline void check_fidelity(const ReadoutFidelity& f) {
  if (!(f.F0 >= 0.0 && f.F0 <= 1.0 && f.F1 >= 0.0 && f.F1 <= 1.0))
    throw ParameterError("readout fidelities must lie in [0, 1]");
  if (!(f.F0 + f.F1 - 1.0 > 1e-12)) throw DomainError("confusion matrix is singular (F0 + F1 <= 1)");
}

/// Applies a 2x2 matrix [[m00, m01], [m10, m11]] along qubit axis n.
inline void apply_axis(Eigen::VectorXd& p, int n, double m00, double m01, double m10, double m11) {
  const Eigen::Index bit = Eigen::Index{1} << n;
  for (Eigen::Index s = 0; s < p.size(); ++s) {
    if (s & bit) continue;
    const double x0 = p[s], x1 = p[s | bit];
    p[s] = m00 * x0 + m01 * x1;
    p[s | bit] = m10 * x0 + m11 * x1;
  }
}

}  // namespace detail

/// Joint measured distribution from a true one (index = bitmask, qubit n = bit n).
inline Eigen::VectorXd corrupt_readout(const Eigen::VectorXd& truth, const std::vector<ReadoutFidelity>& f) {
  const int L = detail::qubit_count(truth.size(), f.size());
  Eigen::VectorXd p = truth;
  for (int n = 0; n < L; ++n) {
    const auto& q = f[static_cast<std::size_t>(n)];
    detail::check_fidelity(q);
    detail::apply_axis(p, n, q.F0, 1.0 - q.F1, 1.0 - q.F0, q.F1);
  }
  return p;
}

/// Inverts the tensor-product confusion matrix. With `clip`, negative
/// entries are zeroed and the result renormalised.
inline MitigatedDistribution mitigate_readout(const Eigen::VectorXd& measured,
                                              const std::vector<ReadoutFidelity>& f, bool clip = true) {
  const int L = detail::qubit_count(measured.size(), f.size());
  MitigatedDistribution out;
  out.probabilities = measured;
  for (int n = 0; n < L; ++n) {
    const auto& q = f[static_cast<std::size_t>(n)];
    detail::check_fidelity(q);
    const double det = q.F0 + q.F1 - 1.0;
    detail::apply_axis(out.probabilities, n, q.F1 / det, -(1.0 - q.F1) / det, -(1.0 - q.F0) / det,
                       q.F0 / det);
  }
  if (clip) {
    for (Eigen::Index i = 0; i < out.probabilities.size(); ++i) {
      if (out.probabilities[i] < 0.0) {
        out.clipped_mass -= out.probabilities[i];
        out.probabilities[i] = 0.0;
      }
    }
    const double total = out.probabilities.sum();
    if (!(total > 0.0)) throw DomainError("mitigated distribution has no positive weight");
    out.probabilities /= total;
  }
  return out;
}

}  // namespace gaah
