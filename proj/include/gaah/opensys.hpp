#pragma once

// Lindblad evolution of the full 2^L density matrix with per-qubit energy
// relaxation and pure dephasing.
//
//   d rho/dt = -i[H, rho] + sum_n ( K rho K^+ - {K^+ K, rho}/2 )
//
// with K_deph = (1 - 2 n_n)/sqrt(2 T2_n) and K_relax = a_n/sqrt(T1_n).
// Both act diagonally or as a single bit flip in the computational basis,
// so the dissipator is applied element-wise:
//   dephasing   -> -rho_ab * sum over bits differing in a, b of 1/T2_n
//   decay       -> -rho_ab * (r(a) + r(b))/2,  r(s) = sum over set bits of 1/T1_n
//   jump        -> +rho_{a|n, b|n} / T1_n   when bit n is clear in a and b
// A lone coherence rho_01 therefore decays at 1/(2 T1) + 1/T2.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <concepts>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gaah/basis.hpp"
#include "gaah/dynamics.hpp"
#include "gaah/error.hpp"
#include "gaah/model.hpp"
#include "gaah/parallel.hpp"

namespace gaah {

/// Mean relaxation and dephasing times of the reference device, ns.
inline constexpr double kReferenceT1 = 22300.0;
inline constexpr double kReferenceT2 = 4000.0;

/// Per-qubit relaxation times of the reference device, ns.
inline constexpr std::array<double, 10> kReferenceT1PerQubit = {
    14300.0, 14800.0, 33000.0, 17900.0, 30700.0, 28100.0, 26300.0, 21500.0, 24400.0, 32900.0};

struct NoiseModel {
  std::vector<double> T1;  // ns per qubit, +inf disables relaxation
  std::vector<double> T2;  // ns per qubit, +inf disables dephasing

  static NoiseModel uniform(int L, double t1, double t2) {
    NoiseModel n{std::vector<double>(static_cast<std::size_t>(L), t1),
                 std::vector<double>(static_cast<std::size_t>(L), t2)};
    n.validate(L);
    return n;
  }

  static NoiseModel closed(int L) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    return uniform(L, inf, inf);
  }

  /// Broadcasts one-element lists to L entries and checks positivity.
  void validate(int L) {
    auto fix = [L](std::vector<double>& v, const char* name) {
      if (v.size() == 1) v.assign(static_cast<std::size_t>(L), v.front());
      if (v.size() != static_cast<std::size_t>(L))
        throw ParameterError(std::string(name) + " needs 1 or " + std::to_string(L) +
                             " entries, got " + std::to_string(v.size()));
      for (const double x : v)
        if (!(x > 0.0)) throw ParameterError(std::string(name) + " entries must be > 0");
    };
    fix(T1, "T1");
    fix(T2, "T2");
  }
};

struct DensityMatrix {
  int L = 0;
  Eigen::MatrixXcd rho;

  static DensityMatrix from_pure(int L, const Eigen::VectorXcd& psi) {
    if (psi.size() != (Eigen::Index{1} << L)) throw ParameterError("state is not on the full 2^L space");
    return {L, psi * psi.adjoint()};
  }

  static DensityMatrix from_basis_state(const FockState& s) {
    DensityMatrix d{s.length, Eigen::MatrixXcd::Zero(Eigen::Index{1} << s.length,
                                                     Eigen::Index{1} << s.length)};
    d.rho(s.bits, s.bits) = 1.0;
    return d;
  }

  std::complex<double> trace() const { return rho.trace(); }
  Eigen::VectorXd populations() const { return rho.diagonal().real(); }
};

/// Embeds a sector state into the full 2^L space (index = bitmask).
inline Eigen::VectorXcd embed(const PureState& psi) {
  const auto& basis = *psi.basis;
  Eigen::VectorXcd full = Eigen::VectorXcd::Zero(Eigen::Index{1} << basis.sites());
  for (std::size_t k = 0; k < basis.size(); ++k)
    full[basis.states()[k]] = psi.amps[static_cast<Eigen::Index>(k)];
  return full;
}

/// Site occupations from a full-space population vector.
inline std::vector<double> occupancy_full(int L, const Eigen::Ref<const Eigen::VectorXd>& p) {
  std::vector<double> occ(static_cast<std::size_t>(L), 0.0);
  for (Eigen::Index s = 0; s < p.size(); ++s)
    for (int j = 0; j < L; ++j)
      if ((s >> j) & 1) occ[static_cast<std::size_t>(j)] += p[s];
  return occ;
}

class LindbladOperator {
 public:
  LindbladOperator(SparseMatrix h, NoiseModel noise, int L) : L_(L), h_(std::move(h)), noise_(std::move(noise)) {
    const Eigen::Index dim = Eigen::Index{1} << L;
    if (h_.rows() != dim || h_.cols() != dim)
      throw ParameterError("Hamiltonian dimension " + std::to_string(h_.rows()) +
                           " does not match 2^L = " + std::to_string(dim));
    noise_.validate(L);
    h_col_ = h_;
    deph_.assign(static_cast<std::size_t>(dim), 0.0);
    relax_.assign(static_cast<std::size_t>(dim), 0.0);
    for (Eigen::Index s = 0; s < dim; ++s) {
      for (int n = 0; n < L; ++n) {
        if (!((s >> n) & 1)) continue;
        deph_[static_cast<std::size_t>(s)] += 1.0 / noise_.T2[static_cast<std::size_t>(n)];
        relax_[static_cast<std::size_t>(s)] += 1.0 / noise_.T1[static_cast<std::size_t>(n)];
      }
    }
    for (int n = 0; n < L; ++n)
      if (std::isfinite(noise_.T1[static_cast<std::size_t>(n)])) jump_sites_.push_back(n);
    dissipative_ = !jump_sites_.empty() ||
                   std::any_of(noise_.T2.begin(), noise_.T2.end(), [](double t) { return std::isfinite(t); });
  }

  int sites() const noexcept { return L_; }
  Eigen::Index dimension() const noexcept { return h_.rows(); }

  void apply(const Eigen::MatrixXcd& rho, Eigen::MatrixXcd& out) const {
    if (rho.rows() != dimension() || rho.cols() != dimension())
      throw ParameterError("density matrix dimension does not match the operator");
    const std::complex<double> minus_i(0.0, -1.0);
    out.noalias() = h_ * rho;
    out.noalias() -= rho * h_col_;
    out *= minus_i;
    if (!dissipative_) return;
    const Eigen::Index dim = dimension();
    for (Eigen::Index b = 0; b < dim; ++b) {
      const double rb = relax_[static_cast<std::size_t>(b)];
      for (Eigen::Index a = 0; a < dim; ++a) {
        const double rate = deph_[static_cast<std::size_t>(a ^ b)] +
                            0.5 * (relax_[static_cast<std::size_t>(a)] + rb);
        out(a, b) -= rate * rho(a, b);
      }
    }
    for (const int n : jump_sites_) {
      const double g = 1.0 / noise_.T1[static_cast<std::size_t>(n)];
      const Eigen::Index bit = Eigen::Index{1} << n;
      for (Eigen::Index b = 0; b < dim; ++b) {
        if (b & bit) continue;
        for (Eigen::Index a = 0; a < dim; ++a) {
          if (a & bit) continue;
          out(a, b) += g * rho(a | bit, b | bit);
        }
      }
    }
  }

 private:
  int L_;
  SparseMatrix h_;
  Eigen::SparseMatrix<double> h_col_;
  NoiseModel noise_;
  std::vector<double> deph_;   // indexed by a ^ b
  std::vector<double> relax_;  // indexed by state
  std::vector<int> jump_sites_;
  bool dissipative_ = false;
};

/// d rho / dt for the given Hamiltonian and noise.
inline DensityMatrix lindblad_rhs(const DensityMatrix& rho, const SparseMatrix& h_full, const NoiseModel& noise) {
  LindbladOperator op(h_full, noise, rho.L);
  DensityMatrix out{rho.L, Eigen::MatrixXcd(rho.rho.rows(), rho.rho.cols())};
  op.apply(rho.rho, out.rho);
  return out;
}

struct LindbladOptions {
  double tolerance = 1e-8;  // local error per step, Frobenius norm relative to |rho|_F
  double initial_step = 0.0;  // 0 picks one from the Hamiltonian bound
  int max_steps = 10'000'000;
};

struct LindbladStats {
  long accepted = 0;
  long rejected = 0;
  double min_step = std::numeric_limits<double>::infinity();
  double max_step = 0.0;
};

/// Dormand-Prince 5(4) integration; observer(k, rho) is called at every
/// requested time. Each accepted step is followed by Hermitian symmetrisation.
template <class Observer>
  requires std::invocable<Observer&, std::size_t, const DensityMatrix&>
LindbladStats evolve_lindblad(const DensityMatrix& rho0, const SparseMatrix& h_full, const NoiseModel& noise,
                              std::span<const double> times, Observer&& observer,
                              const LindbladOptions& opt = {}) {
  if (!(opt.tolerance > 0.0)) throw ParameterError("tolerance must be positive");
  const Eigen::MatrixXcd& r0 = rho0.rho;
  if ((r0 - r0.adjoint()).norm() > 1e-9) throw DomainError("initial density matrix is not Hermitian");
  if (std::abs(r0.trace() - 1.0) > 1e-9) throw DomainError("initial density matrix does not have unit trace");
  for (std::size_t k = 0; k < times.size(); ++k)
    if (times[k] < 0.0 || (k > 0 && times[k] < times[k - 1]))
      throw ParameterError("times must be non-negative and sorted");

  const LindbladOperator op(h_full, noise, rho0.L);
  const Eigen::Index dim = op.dimension();

  // Dormand-Prince tableau.
  constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  constexpr double a21 = 1.0 / 5;
  constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                   a65 = -5103.0 / 18656;
  constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                   e6 = 22.0 / 525, e7 = -1.0 / 40;
  (void)c2, (void)c3, (void)c4, (void)c5;  // autonomous system

  Eigen::MatrixXcd y = r0, y_new(dim, dim), tmp(dim, dim), err(dim, dim);
  std::array<Eigen::MatrixXcd, 7> k;
  for (auto& m : k) m.resize(dim, dim);

  LindbladStats stats;
  double t = 0.0;
  std::size_t next = 0;
  DensityMatrix view{rho0.L, {}};
  auto emit = [&](std::size_t idx) {
    view.rho = y;
    observer(idx, static_cast<const DensityMatrix&>(view));
  };
  while (next < times.size() && times[next] == 0.0) emit(next++);
  if (next == times.size()) return stats;

  const double bound = gershgorin_bound(h_full) + 1e-300;
  double h = opt.initial_step > 0.0 ? opt.initial_step : 0.1 / bound;
  op.apply(y, k[0]);
  bool fsal_ready = true;
  long steps = 0;
  while (next < times.size()) {
    if (++steps > opt.max_steps) throw NumericalError("Lindblad integration exceeded max_steps");
    const double target = times[next];
    bool hits = false;
    double step = h;
    if (t + step >= target) {
      step = target - t;
      hits = true;
    }
    if (!fsal_ready) op.apply(y, k[0]);
    tmp = y + step * a21 * k[0];
    op.apply(tmp, k[1]);
    tmp = y + step * (a31 * k[0] + a32 * k[1]);
    op.apply(tmp, k[2]);
    tmp = y + step * (a41 * k[0] + a42 * k[1] + a43 * k[2]);
    op.apply(tmp, k[3]);
    tmp = y + step * (a51 * k[0] + a52 * k[1] + a53 * k[2] + a54 * k[3]);
    op.apply(tmp, k[4]);
    tmp = y + step * (a61 * k[0] + a62 * k[1] + a63 * k[2] + a64 * k[3] + a65 * k[4]);
    op.apply(tmp, k[5]);
    y_new = y + step * (b1 * k[0] + b3 * k[2] + b4 * k[3] + b5 * k[4] + b6 * k[5]);
    op.apply(y_new, k[6]);
    err = step * (e1 * k[0] + e3 * k[2] + e4 * k[3] + e5 * k[4] + e6 * k[5] + e7 * k[6]);
    const double scale = std::max(y.norm(), y_new.norm());
    const double e = err.norm() / scale;
    const double factor = e > 0.0 ? std::clamp(0.9 * std::pow(opt.tolerance / e, 0.2), 0.2, 5.0) : 5.0;
    if (e <= opt.tolerance) {
      y = 0.5 * (y_new + y_new.adjoint());
      t = hits ? target : t + step;
      ++stats.accepted;
      stats.min_step = std::min(stats.min_step, step);
      stats.max_step = std::max(stats.max_step, step);
      // FSAL: k7 is the derivative at y_new; symmetrisation moves y only by rounding.
      std::swap(k[0], k[6]);
      fsal_ready = true;
      while (next < times.size() && times[next] <= t) emit(next++);
      if (!hits) h = step * factor;
    } else {
      ++stats.rejected;
      h = step * factor;
      fsal_ready = true;  // k[0] still belongs to y
      if (h < 1e-12 * std::max(1.0, times.back()))
        throw NumericalError("Lindblad step size underflow at t=" + std::to_string(t) + " ns, error " +
                             std::to_string(e));
    }
  }
  return stats;
}

inline std::vector<DensityMatrix> evolve_lindblad(const DensityMatrix& rho0, const SparseMatrix& h_full,
                                                  const NoiseModel& noise, std::span<const double> times,
                                                  const LindbladOptions& opt = {}) {
  std::vector<DensityMatrix> out;
  out.reserve(times.size());
  evolve_lindblad(rho0, h_full, noise, times,
                  [&](std::size_t, const DensityMatrix& d) { out.push_back(d); }, opt);
  return out;
}

struct PostSelection {
  Eigen::VectorXd probabilities;  // over the sector, in rank order
  double sector_weight = 0.0;
  double discarded_weight = 0.0;
};

/// Restricts a full-space distribution to one excitation sector and
/// renormalises it. Entries above -1e-9 are treated as rounding and clipped.
inline PostSelection post_select(const Eigen::Ref<const Eigen::VectorXd>& full, const SectorBasis& sector) {
  if (full.size() != (Eigen::Index{1} << sector.sites()))
    throw ParameterError("distribution size does not match 2^L");
  double total = 0.0;
  for (Eigen::Index i = 0; i < full.size(); ++i) {
    if (full[i] < -1e-9) throw DomainError("negative probability at index " + std::to_string(i));
    total += std::max(full[i], 0.0);
  }
  PostSelection out;
  out.probabilities.resize(static_cast<Eigen::Index>(sector.size()));
  double w = 0.0;
  for (std::size_t k = 0; k < sector.size(); ++k) {
    const double p = std::max(full[sector.states()[k]], 0.0);
    out.probabilities[static_cast<Eigen::Index>(k)] = p;
    w += p;
  }
  if (!(w > 0.0)) throw DomainError("post-selection sector has zero weight");
  out.probabilities /= w;
  out.sector_weight = w / total;
  out.discarded_weight = 1.0 - out.sector_weight;
  return out;
}

struct LindbladSeries {
  std::vector<double> orders;
  std::vector<TimeSeries> entropy;    // per order, from post-selected populations
  std::vector<TimeSeries> occupancy;  // per site, raw (not post-selected)
  TimeSeries sector_weight;
  LindbladStats stats;
};

/// Open-system counterpart of quench_pe_series: one density-matrix
/// trajectory per (phase draw, initial state), trajectory = draw * n_states + state.
inline LindbladSeries lindblad_pe_series(const ModelParams& params, const std::vector<FockState>& initial_states,
                                         const std::vector<double>& deltas, std::span<const double> times,
                                         const std::vector<double>& orders, const NoiseModel& noise,
                                         const LindbladOptions& opt = {}, unsigned workers = 1) {
  if (params.L > 10) throw ParameterError("Lindblad evolution is limited to L <= 10");
  if (deltas.empty()) throw ParameterError("at least one phase draw is required");
  const auto basis = detail::common_sector(initial_states, params.L);
  const std::size_t n_states = initial_states.size();
  const std::size_t n_traj = n_states * deltas.size();
  LindbladSeries out;
  out.orders = orders;
  auto shape = [&](TimeSeries& ts) {
    ts.times.assign(times.begin(), times.end());
    ts.samples.assign(n_traj, std::vector<double>(times.size(), 0.0));
  };
  out.entropy.resize(orders.size());
  for (auto& ts : out.entropy) shape(ts);
  out.occupancy.resize(static_cast<std::size_t>(params.L));
  for (auto& ts : out.occupancy) shape(ts);
  shape(out.sector_weight);
  std::vector<LindbladStats> stats(n_traj);
  parallel_for(n_traj, workers, [&](std::size_t traj) {
    ModelParams p = params;
    p.delta = deltas[traj / n_states];
    const SparseMatrix h = build_full_hamiltonian(p);
    const auto rho0 = DensityMatrix::from_basis_state(initial_states[traj % n_states]);
    stats[traj] = evolve_lindblad(
        rho0, h, noise, times,
        [&](std::size_t k, const DensityMatrix& d) {
          const Eigen::VectorXd pop = d.populations();
          const auto occ = occupancy_full(d.L, pop);
          for (std::size_t j = 0; j < occ.size(); ++j) out.occupancy[j].samples[traj][k] = occ[j];
          const auto sel = post_select(pop, *basis);
          out.sector_weight.samples[traj][k] = sel.sector_weight;
          for (std::size_t o = 0; o < orders.size(); ++o)
            out.entropy[o].samples[traj][k] = participation_entropy(sel.probabilities, orders[o]);
        },
        opt);
  });
  for (const auto& s : stats) {
    out.stats.accepted += s.accepted;
    out.stats.rejected += s.rejected;
    out.stats.min_step = std::min(out.stats.min_step, s.min_step);
    out.stats.max_step = std::max(out.stats.max_step, s.max_step);
  }
  return out;
}

}  // namespace gaah
