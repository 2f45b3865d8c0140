#pragma once

// Lanczos approximation of exp(-i H t) v for a real symmetric sparse H.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <span>
#include <string>
#include <vector>

#include "gaah/error.hpp"
#include "gaah/model.hpp"

namespace gaah {

struct KrylovOptions {
  int initial_dimension = 20;
  int max_dimension = 60;
  double step_tolerance = 1e-10;  // a-posteriori error bound per step, 2-norm
};

/// Run statistics, kept so they can be written into run metadata.
struct KrylovStats {
  int steps = 0;
  int max_dimension_used = 0;
  int happy_breakdowns = 0;
  double max_step_error = 0.0;
  double initial_step = 0.0;  // from the Gershgorin bound
};

namespace detail {

inline void csr_apply(const SparseMatrix& h, const Eigen::VectorXcd& x, Eigen::VectorXcd& y) {
  const auto* outer = h.outerIndexPtr();
  const auto* inner = h.innerIndexPtr();
  const double* val = h.valuePtr();
  for (Eigen::Index r = 0; r < h.rows(); ++r) {
    std::complex<double> acc = 0.0;
    for (auto k = outer[r]; k < outer[r + 1]; ++k) acc += val[k] * x[inner[k]];
    y[r] = acc;
  }
}

}  // namespace detail

/// Propagates one state through an increasing list of output times.
///
/// Each step builds an orthonormal Krylov basis V_m (full
/// reorthogonalisation) with tridiagonal projection T_m and estimates the
/// step error by beta * h_{m+1,m} * |[exp(-i tau T_m)]_{m,1}|. A failing
/// step first enlarges m up to `max_dimension`, then halves tau. All output
/// times falling inside an accepted step are evaluated from the same basis.
class KrylovPropagator {
 public:
  KrylovPropagator(const SparseMatrix& h, double spectral_bound, KrylovOptions opt = {})
      : h_(h), bound_(std::max(spectral_bound, 1e-300)), opt_(opt) {
    if (opt_.initial_dimension < 2 || opt_.max_dimension < opt_.initial_dimension)
      throw ParameterError("invalid Krylov dimensions");
  }

  const KrylovStats& stats() const noexcept { return stats_; }

  /// Returns exp(-i H t_k) psi0 for each t_k; times must be sorted and >= 0.
  std::vector<Eigen::VectorXcd> propagate(const Eigen::VectorXcd& psi0,
                                          std::span<const double> times) {
    std::vector<Eigen::VectorXcd> out;
    out.reserve(times.size());
    propagate(psi0, times, [&](std::size_t, const Eigen::VectorXcd& v) { out.push_back(v); });
    return out;
  }

  template <class Sink>
  void propagate(const Eigen::VectorXcd& psi0, std::span<const double> times, Sink&& sink) {
    const auto n = psi0.size();
    if (n != h_.rows()) throw ParameterError("state dimension does not match Hamiltonian");
    for (std::size_t k = 0; k < times.size(); ++k) {
      if (times[k] < 0.0 || (k > 0 && times[k] < times[k - 1]))
        throw ParameterError("times must be non-negative and sorted");
    }
    Eigen::VectorXcd v = psi0;
    double t_now = 0.0;
    std::size_t next = 0;
    while (next < times.size() && times[next] == 0.0) sink(next++, v);
    double tau = std::min(0.5 * opt_.initial_dimension / bound_,
                          times.empty() ? 0.0 : times.back());
    stats_.initial_step = tau;

    while (next < times.size()) {
      const double remaining = times.back() - t_now;
      tau = std::min(tau, remaining);
      build_basis(v, opt_.initial_dimension);
      double err = 0.0;
      for (;;) {
        if (breakdown_) {
          err = 0.0;
          break;
        }
        err = error_estimate(tau);
        if (err <= opt_.step_tolerance) break;
        if (m_ < opt_.max_dimension) {
          extend_basis(std::min(opt_.max_dimension, m_ + 10));
          continue;
        }
        tau *= 0.5;
        if (tau < 1e-14 * std::max(1.0, times.back()))
          throw NumericalError("Krylov step collapsed: m=" + std::to_string(m_) +
                               ", tau=" + std::to_string(tau) + ", error=" + std::to_string(err));
      }
      const double t_end = t_now + tau;
      while (next < times.size() && times[next] <= t_end * (1.0 + 1e-15)) {
        sink(next, combine(times[next] - t_now));
        ++next;
      }
      v = combine(tau);
      t_now = t_end;
      ++stats_.steps;
      stats_.max_dimension_used = std::max(stats_.max_dimension_used, m_);
      stats_.max_step_error = std::max(stats_.max_step_error, err);
      if (breakdown_) ++stats_.happy_breakdowns;
      // Grow the step when the estimate leaves headroom.
      if (!breakdown_ && err > 0.0)
        tau *= std::clamp(0.9 * std::pow(opt_.step_tolerance / err, 1.0 / m_), 0.5, 2.0);
      else
        tau *= 2.0;
    }
  }

 private:
  void build_basis(const Eigen::VectorXcd& v, int m) {
    const auto n = v.size();
    basis_.resize(n, opt_.max_dimension + 1);
    alpha_.assign(static_cast<std::size_t>(opt_.max_dimension), 0.0);
    beta_.assign(static_cast<std::size_t>(opt_.max_dimension), 0.0);
    norm_ = v.norm();
    basis_.col(0) = v / norm_;
    m_ = 0;
    breakdown_ = false;
    work_.resize(n);
    extend_basis(m);
  }

  void extend_basis(int m) {
    const auto n = basis_.rows();
    const int limit = std::min<int>(m, static_cast<int>(n));
    while (m_ < limit && !breakdown_) {
      const int j = m_;
      detail::csr_apply(h_, basis_.col(j), work_);
      const double a = basis_.col(j).dot(work_).real();
      alpha_[static_cast<std::size_t>(j)] = a;
      work_ -= a * basis_.col(j);
      if (j > 0) work_ -= beta_[static_cast<std::size_t>(j - 1)] * basis_.col(j - 1);
      for (int pass = 0; pass < 2; ++pass)
        for (int i = 0; i <= j; ++i) work_ -= basis_.col(i).dot(work_) * basis_.col(i);
      const double b = work_.norm();
      beta_[static_cast<std::size_t>(j)] = b;
      ++m_;
      if (b <= 1e-13 * bound_ || m_ == static_cast<int>(n)) {
        breakdown_ = true;
        break;
      }
      basis_.col(j + 1) = work_ / b;
    }
    Eigen::VectorXd diag(m_), off(std::max(m_ - 1, 0));
    for (int i = 0; i < m_; ++i) diag[i] = alpha_[static_cast<std::size_t>(i)];
    for (int i = 0; i + 1 < m_; ++i) off[i] = beta_[static_cast<std::size_t>(i)];
    if (m_ == 1) {
      ritz_values_ = diag;
      ritz_vectors_ = Eigen::MatrixXd::Ones(1, 1);
    } else {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
      es.computeFromTridiagonal(diag, off, Eigen::ComputeEigenvectors);
      ritz_values_ = es.eigenvalues();
      ritz_vectors_ = es.eigenvectors();
    }
  }

  /// Coefficients y = exp(-i tau T_m) e_1 in the Krylov basis.
  Eigen::VectorXcd small_exponential(double tau) const {
    Eigen::VectorXcd phase(m_);
    for (int k = 0; k < m_; ++k)
      phase[k] = std::polar(1.0, -tau * ritz_values_[k]) * ritz_vectors_(0, k);
    return ritz_vectors_.cast<std::complex<double>>() * phase;
  }

  double error_estimate(double tau) const {
    const Eigen::VectorXcd y = small_exponential(tau);
    return norm_ * beta_[static_cast<std::size_t>(m_ - 1)] * std::abs(y[m_ - 1]);
  }

  Eigen::VectorXcd combine(double tau) const {
    const Eigen::VectorXcd y = small_exponential(tau);
    return norm_ * (basis_.leftCols(m_) * y);
  }

  const SparseMatrix& h_;
  double bound_;
  KrylovOptions opt_;
  KrylovStats stats_;

  Eigen::MatrixXcd basis_;
  Eigen::VectorXcd work_;
  std::vector<double> alpha_, beta_;
  Eigen::VectorXd ritz_values_;
  Eigen::MatrixXd ritz_vectors_;
  double norm_ = 1.0;
  int m_ = 0;
  bool breakdown_ = false;
};

}  // namespace gaah
