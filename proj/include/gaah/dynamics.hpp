#pragma once

// Closed-system quench dynamics in a fixed-excitation sector.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gaah/basis.hpp"
#include "gaah/error.hpp"
#include "gaah/krylov.hpp"
#include "gaah/model.hpp"
#include "gaah/parallel.hpp"
#include "gaah/rng.hpp"
#include "gaah/spectral.hpp"

namespace gaah {

struct PureState {
  std::shared_ptr<const SectorBasis> basis;
  Eigen::VectorXcd amps;

  static PureState basis_state(std::shared_ptr<const SectorBasis> basis, const FockState& s) {
    PureState out;
    out.amps = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(basis->size()));
    out.amps[static_cast<Eigen::Index>(basis->rank(s))] = 1.0;
    out.basis = std::move(basis);
    return out;
  }

  double norm() const { return amps.norm(); }
  Eigen::VectorXd probabilities() const { return amps.cwiseAbs2(); }
};

/// Per-trajectory samples of one scalar observable on a shared time grid.
struct TimeSeries {
  std::vector<double> times;
  std::vector<std::vector<double>> samples;  // [trajectory][time]

  std::size_t trajectories() const noexcept { return samples.size(); }

  std::vector<double> mean() const {
    std::vector<double> m(times.size(), 0.0);
    for (const auto& s : samples)
      for (std::size_t k = 0; k < m.size(); ++k) m[k] += s[k];
    for (auto& x : m) x /= static_cast<double>(std::max<std::size_t>(samples.size(), 1));
    return m;
  }

  /// Sample standard deviation over trajectories divided by sqrt(n).
  std::vector<double> std_error() const {
    std::vector<double> se(times.size(), 0.0);
    const auto n = samples.size();
    if (n < 2) return se;
    const auto m = mean();
    for (const auto& s : samples)
      for (std::size_t k = 0; k < se.size(); ++k) se[k] += (s[k] - m[k]) * (s[k] - m[k]);
    for (auto& x : se) x = std::sqrt(x / static_cast<double>(n - 1) / static_cast<double>(n));
    return se;
  }
};

/// Uniform grid t_start, t_start + dt, ..., t_end (inclusive when it lands on
/// the grid to within 1e-9 dt).
inline std::vector<double> time_grid(double t_start, double t_end, double dt) {
  if (!(dt > 0.0) || !(t_end >= t_start) || t_start < 0.0)
    throw ParameterError("time grid needs 0 <= t_start <= t_end and dt > 0");
  const auto steps = static_cast<std::size_t>(std::floor((t_end - t_start) / dt + 1e-9));
  std::vector<double> t(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) t[k] = t_start + static_cast<double>(k) * dt;
  return t;
}

enum class EvolveMethod { Dense, Krylov };

inline std::string_view to_string(EvolveMethod m) {
  return m == EvolveMethod::Dense ? "dense" : "krylov";
}

struct EvolveOptions {
  std::size_t dense_threshold = kDefaultDenseThreshold;
  KrylovOptions krylov;
};

inline void require_hermitian(const SectorHamiltonian& h) {
  const SparseMatrix t = h.entries.transpose();
  if ((h.entries - t).norm() != 0.0) throw DomainError("Hamiltonian is not Hermitian");
}

/// Propagator bound to one Hamiltonian, reusable across initial states.
/// Uses a full eigendecomposition up to `dense_threshold`, Lanczos beyond.
class Evolver {
 public:
  explicit Evolver(const SectorHamiltonian& h, EvolveOptions opt = {}) : h_(h), opt_(opt) {
    require_hermitian(h);
    if (h.dimension() <= opt_.dense_threshold) eig_ = eigendecompose(h, opt_.dense_threshold);
  }

  EvolveMethod method() const noexcept {
    return eig_ ? EvolveMethod::Dense : EvolveMethod::Krylov;
  }
  const KrylovStats& krylov_stats() const noexcept { return stats_; }

  /// Calls sink(k, psi(t_k)) for each time in order.
  template <class Sink>
  void run(const Eigen::VectorXcd& psi0, std::span<const double> times, Sink&& sink) {
    if (psi0.size() != static_cast<Eigen::Index>(h_.dimension()))
      throw ParameterError("state dimension does not match Hamiltonian");
    if (std::abs(psi0.norm() - 1.0) > 1e-9) throw DomainError("initial state is not normalized");
    for (std::size_t k = 0; k < times.size(); ++k)
      if (times[k] < 0.0 || (k > 0 && times[k] < times[k - 1]))
        throw ParameterError("times must be non-negative and sorted");
    if (eig_) {
      const Eigen::MatrixXd& vecs = eig_->vectors;
      const Eigen::VectorXd c_re = vecs.transpose() * psi0.real();
      const Eigen::VectorXd c_im = vecs.transpose() * psi0.imag();
      const auto dim = vecs.rows();
      // Batch a block of times through two real products.
      constexpr std::size_t kBlock = 64;
      Eigen::MatrixXd ph_re(dim, static_cast<Eigen::Index>(kBlock));
      Eigen::MatrixXd ph_im(dim, static_cast<Eigen::Index>(kBlock));
      for (std::size_t k0 = 0; k0 < times.size(); k0 += kBlock) {
        const auto nb = static_cast<Eigen::Index>(std::min(kBlock, times.size() - k0));
        for (Eigen::Index b = 0; b < nb; ++b) {
          const double t = times[k0 + static_cast<std::size_t>(b)];
          for (Eigen::Index i = 0; i < dim; ++i) {
            const double phase = -eig_->values[i] * t;
            const double cs = std::cos(phase), sn = std::sin(phase);
            ph_re(i, b) = cs * c_re[i] - sn * c_im[i];
            ph_im(i, b) = sn * c_re[i] + cs * c_im[i];
          }
        }
        const Eigen::MatrixXd out_re = vecs * ph_re.leftCols(nb);
        const Eigen::MatrixXd out_im = vecs * ph_im.leftCols(nb);
        for (Eigen::Index b = 0; b < nb; ++b) {
          const std::size_t k = k0 + static_cast<std::size_t>(b);
          if (times[k] == 0.0) {
            sink(k, psi0);
            continue;
          }
          Eigen::VectorXcd psi(dim);
          psi.real() = out_re.col(b);
          psi.imag() = out_im.col(b);
          sink(k, psi);
        }
      }
    } else {
      KrylovPropagator prop(h_.entries, h_.spectral_bound, opt_.krylov);
      prop.propagate(psi0, times, sink);
      const auto& s = prop.stats();
      stats_.steps += s.steps;
      stats_.max_dimension_used = std::max(stats_.max_dimension_used, s.max_dimension_used);
      stats_.happy_breakdowns += s.happy_breakdowns;
      stats_.max_step_error = std::max(stats_.max_step_error, s.max_step_error);
      stats_.initial_step = s.initial_step;
    }
  }

  std::vector<Eigen::VectorXcd> states(const Eigen::VectorXcd& psi0, std::span<const double> times) {
    std::vector<Eigen::VectorXcd> out(times.size());
    run(psi0, times, [&](std::size_t k, const Eigen::VectorXcd& v) { out[k] = v; });
    return out;
  }

  /// |<i|psi(t_k)>|^2 as columns of a dim x n_times matrix.
  Eigen::MatrixXd probabilities(const Eigen::VectorXcd& psi0, std::span<const double> times) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(h_.dimension()),
                        static_cast<Eigen::Index>(times.size()));
    run(psi0, times, [&](std::size_t k, const Eigen::VectorXcd& v) {
      out.col(static_cast<Eigen::Index>(k)) = v.cwiseAbs2();
    });
    return out;
  }

 private:
  const SectorHamiltonian& h_;
  EvolveOptions opt_;
  std::optional<EigenSystem> eig_;
  KrylovStats stats_;
};

/// psi(t) = exp(-i H t) psi0 for each requested time.
inline std::vector<PureState> evolve(const SectorHamiltonian& h, const PureState& psi0,
                                     std::span<const double> times, EvolveOptions opt = {}) {
  if (psi0.basis && h.basis && psi0.basis->sites() != h.basis->sites())
    throw ParameterError("state and Hamiltonian live on different chains");
  Evolver ev(h, opt);
  std::vector<PureState> out;
  out.reserve(times.size());
  ev.run(psi0.amps, times, [&](std::size_t, const Eigen::VectorXcd& v) {
    out.push_back(PureState{h.basis, v});
  });
  return out;
}

/// P_j = sum of p_i over basis states with site j occupied (j = 0..L-1).
inline std::vector<double> occupancy(const SectorBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& p) {
  std::vector<double> occ(static_cast<std::size_t>(basis.sites()), 0.0);
  const auto& states = basis.states();
  for (std::size_t i = 0; i < states.size(); ++i) {
    std::uint32_t s = states[i];
    const double w = p[static_cast<Eigen::Index>(i)];
    while (s != 0) {
      occ[static_cast<std::size_t>(std::countr_zero(s))] += w;
      s &= s - 1;
    }
  }
  return occ;
}

inline std::vector<double> occupancy(const PureState& psi) {
  return occupancy(*psi.basis, psi.probabilities());
}

/// Participation (Renyi) entropy of order q >= 1 with natural logarithm;
/// q = 1 is the Shannon limit.
inline double participation_entropy(std::span<const double> p, double q) {
  if (!(q >= 1.0)) throw ParameterError("participation entropy needs q >= 1");
  double total = 0.0;
  for (const double x : p) {
    if (x < 0.0 || !std::isfinite(x)) throw DomainError("probabilities must be non-negative");
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-8)
    throw DomainError("probabilities sum to " + std::to_string(total) + ", expected 1");
  if (q == 1.0) {
    double s = 0.0;
    for (const double x : p)
      if (x > 0.0) s -= x * std::log(x);
    return s;
  }
  double sum_q = 0.0;
  if (q == 2.0) {
    for (const double x : p) sum_q += x * x;
  } else {
    for (const double x : p) sum_q += std::pow(x, q);
  }
  return std::log(sum_q) / (1.0 - q);
}

inline double participation_entropy(const Eigen::Ref<const Eigen::VectorXd>& p, double q) {
  return participation_entropy(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())), q);
}

/// The 2M far-from-equilibrium product states |10>^(M+1-i) |01>^(i-1),
/// i = 1..M, followed by their global spin-flip partners.
inline std::vector<FockState> default_initial_states(int L, int M) {
  if (L != 2 * M || M < 1)
    throw ParameterError("default initial states need L = 2M, got L=" + std::to_string(L) +
                         ", M=" + std::to_string(M));
  std::vector<FockState> out;
  out.reserve(static_cast<std::size_t>(2 * M));
  for (int i = 1; i <= M; ++i) {
    std::string s;
    for (int k = 0; k < M + 1 - i; ++k) s += "10";
    for (int k = 0; k < i - 1; ++k) s += "01";
    out.push_back(state_from_string(s));
  }
  for (int i = 0; i < M; ++i) out.push_back(flip_all(out[static_cast<std::size_t>(i)]));
  return out;
}

/// Multinomial resampling of a distribution with `shots` draws.
inline Eigen::VectorXd resample_shots(const Eigen::Ref<const Eigen::VectorXd>& p, int shots,
                                      CounterRng& rng) {
  if (shots < 1) throw ParameterError("shots must be positive");
  std::vector<double> cdf(static_cast<std::size_t>(p.size()));
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) cdf[static_cast<std::size_t>(i)] = acc += std::max(p[i], 0.0);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(p.size());
  for (int s = 0; s < shots; ++s) {
    const double u = rng.uniform() * acc;
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const auto idx = std::min<std::ptrdiff_t>(it - cdf.begin(), p.size() - 1);
    counts[idx] += 1.0;
  }
  return counts / static_cast<double>(shots);
}

struct QuenchOptions {
  EvolveOptions evolve;
  unsigned workers = 1;
  int shots = 0;  // 0 disables shot-noise resampling
  std::uint64_t shot_seed = 0;
  std::uint64_t point_index = 0;  // keys the resampling streams
};

struct QuenchDiagnostics {
  EvolveMethod method = EvolveMethod::Dense;
  KrylovStats krylov;
  std::size_t dimension = 0;
};

namespace detail {

inline std::shared_ptr<const SectorBasis> common_sector(const std::vector<FockState>& states, int L) {
  if (states.empty()) throw ParameterError("at least one initial state is required");
  const int M = states.front().excitations();
  for (const auto& s : states) {
    if (s.length != L)
      throw ParameterError("initial state " + to_string(s) + " has " + std::to_string(s.length) +
                           " sites, expected " + std::to_string(L));
    if (s.excitations() != M)
      throw ParameterError("initial states mix excitation sectors (" + std::to_string(M) +
                           " vs " + std::to_string(s.excitations()) + ")");
  }
  return std::make_shared<const SectorBasis>(L, M);
}

inline void merge(QuenchDiagnostics& into, const QuenchDiagnostics& d) {
  into.method = d.method;
  into.dimension = d.dimension;
  into.krylov.steps += d.krylov.steps;
  into.krylov.max_dimension_used = std::max(into.krylov.max_dimension_used, d.krylov.max_dimension_used);
  into.krylov.max_step_error = std::max(into.krylov.max_step_error, d.krylov.max_step_error);
  into.krylov.happy_breakdowns += d.krylov.happy_breakdowns;
  into.krylov.initial_step = d.krylov.initial_step;
}

/// Runs every (phase, state) trajectory; visit(traj, k, p) sees the
/// probability vector at time index k. Trajectory index = draw * n_states + state.
template <class Visit>
QuenchDiagnostics run_trajectories(const ModelParams& params, const std::vector<FockState>& initial_states,
                                   const std::vector<double>& deltas, std::span<const double> times,
                                   const QuenchOptions& opt, Visit&& visit) {
  auto basis = common_sector(initial_states, params.L);
  const std::size_t n_states = initial_states.size();
  std::vector<QuenchDiagnostics> diag(deltas.size());
  parallel_for(deltas.size(), opt.workers, [&](std::size_t r) {
    ModelParams p = params;
    p.delta = deltas[r];
    const auto h = build_sector_hamiltonian(p, basis);
    Evolver ev(h, opt.evolve);
    for (std::size_t s = 0; s < n_states; ++s) {
      const std::size_t traj = r * n_states + s;
      const auto psi0 = PureState::basis_state(basis, initial_states[s]);
      std::optional<CounterRng> rng;
      if (opt.shots > 0) rng.emplace(stream_key(opt.shot_seed, opt.point_index, traj));
      ev.run(psi0.amps, times, [&](std::size_t k, const Eigen::VectorXcd& v) {
        Eigen::VectorXd prob = v.cwiseAbs2();
        prob /= prob.sum();
        if (rng) prob = resample_shots(prob, opt.shots, *rng);
        visit(traj, k, prob);
      });
    }
    diag[r].method = ev.method();
    diag[r].krylov = ev.krylov_stats();
    diag[r].dimension = h.dimension();
  });
  QuenchDiagnostics out;
  for (const auto& d : diag) merge(out, d);
  return out;
}

}  // namespace detail

struct PeSeries {
  std::vector<double> orders;      // q values
  std::vector<TimeSeries> series;  // one per order
  QuenchDiagnostics diagnostics;
};

/// Participation entropies S_q(t) for every (phase draw, initial state)
/// trajectory. All initial states must share one excitation sector.
inline PeSeries quench_pe_series(const ModelParams& params, const std::vector<FockState>& initial_states,
                                 const std::vector<double>& deltas, std::span<const double> times,
                                 const std::vector<double>& orders, const QuenchOptions& opt = {}) {
  if (deltas.empty()) throw ParameterError("at least one phase draw is required");
  if (orders.empty()) throw ParameterError("at least one entropy order is required");
  for (const double q : orders)
    if (!(q >= 1.0)) throw ParameterError("entropy orders must be >= 1");
  const std::size_t n_traj = deltas.size() * initial_states.size();
  PeSeries out;
  out.orders = orders;
  out.series.resize(orders.size());
  for (auto& ts : out.series) {
    ts.times.assign(times.begin(), times.end());
    ts.samples.assign(n_traj, std::vector<double>(times.size(), 0.0));
  }
  out.diagnostics = detail::run_trajectories(
      params, initial_states, deltas, times, opt,
      [&](std::size_t traj, std::size_t k, const Eigen::VectorXd& prob) {
        for (std::size_t o = 0; o < orders.size(); ++o)
          out.series[o].samples[traj][k] = participation_entropy(prob, orders[o]);
      });
  return out;
}

struct OccupancySeries {
  std::vector<TimeSeries> sites;  // sites[j] is P_{j+1}(t)
  QuenchDiagnostics diagnostics;
};

/// P_j(t) for one initial state averaged over phase draws.
inline OccupancySeries quench_occupancy(const ModelParams& params, const FockState& initial_state,
                                        const std::vector<double>& deltas, std::span<const double> times,
                                        const QuenchOptions& opt = {}) {
  if (deltas.empty()) throw ParameterError("at least one phase draw is required");
  const std::vector<FockState> states{initial_state};
  auto basis = detail::common_sector(states, params.L);
  OccupancySeries out;
  out.sites.resize(static_cast<std::size_t>(params.L));
  for (auto& ts : out.sites) {
    ts.times.assign(times.begin(), times.end());
    ts.samples.assign(deltas.size(), std::vector<double>(times.size(), 0.0));
  }
  out.diagnostics = detail::run_trajectories(
      params, states, deltas, times, opt,
      [&](std::size_t traj, std::size_t k, const Eigen::VectorXd& prob) {
        const auto occ = occupancy(*basis, prob);
        for (std::size_t j = 0; j < occ.size(); ++j) out.sites[j].samples[traj][k] = occ[j];
      });
  return out;
}

}  // namespace gaah
