#pragma once

// Fixed-excitation (U(1)) sectors of an L-site hard-core chain.
//
// Site j (1-based) is stored in bit j-1. Strings are written with site 1
// leftmost, so "1000" is the state with only site 1 occupied.

#include <array>
#include <bit>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "gaah/error.hpp"

namespace gaah {

inline constexpr int kMaxSites = 30;

struct FockState {
  std::uint32_t bits = 0;
  int length = 0;

  int excitations() const noexcept { return std::popcount(bits); }
  /// Occupation of 1-based site `site`.
  bool occupied(int site) const noexcept { return (bits >> (site - 1)) & 1U; }

  friend bool operator==(const FockState&, const FockState&) = default;
};

namespace detail {

constexpr std::array<std::array<std::uint64_t, kMaxSites + 2>, kMaxSites + 2>
make_binomials() {
  std::array<std::array<std::uint64_t, kMaxSites + 2>, kMaxSites + 2> c{};
  for (int n = 0; n <= kMaxSites + 1; ++n) {
    c[n][0] = 1;
    for (int k = 1; k <= n; ++k) c[n][k] = c[n - 1][k - 1] + (k <= n - 1 ? c[n - 1][k] : 0);
  }
  return c;
}

inline constexpr auto kBinomials = make_binomials();

}  // namespace detail

/// C(n, k) for 0 <= n <= 31; zero when k > n.
constexpr std::uint64_t binomial(int n, int k) noexcept {
  if (k < 0 || n < 0 || k > n) return 0;
  return detail::kBinomials[n][k];
}

/// Parses "1010..." into a FockState; character j (0-based) is site j+1.
inline FockState state_from_string(std::string_view spec) {
  if (spec.empty() || spec.size() > static_cast<std::size_t>(kMaxSites))
    throw ParameterError("state string must have 1.." + std::to_string(kMaxSites) +
                         " characters, got " + std::to_string(spec.size()));
  FockState s{0, static_cast<int>(spec.size())};
  for (std::size_t j = 0; j < spec.size(); ++j) {
    if (spec[j] == '1')
      s.bits |= 1U << j;
    else if (spec[j] != '0')
      throw ParameterError("state string '" + std::string(spec) +
                           "' contains a character other than 0/1");
  }
  return s;
}

inline std::string to_string(const FockState& s) {
  std::string out(static_cast<std::size_t>(s.length), '0');
  for (int j = 0; j < s.length; ++j)
    if ((s.bits >> j) & 1U) out[static_cast<std::size_t>(j)] = '1';
  return out;
}

/// Applies the global spin flip to every site of the chain.
inline FockState flip_all(const FockState& s) {
  const std::uint32_t mask = s.length == 32 ? ~0U : ((1U << s.length) - 1U);
  return {~s.bits & mask, s.length};
}

/// All bitmasks of L sites with exactly M set bits, in ascending order.
class SectorBasis {
 public:
  SectorBasis(int sites, int excitations) : sites_(sites), excitations_(excitations) {
    if (sites < 1 || sites > kMaxSites)
      throw ParameterError("L must lie in [1, " + std::to_string(kMaxSites) + "], got " +
                           std::to_string(sites));
    if (excitations < 0 || excitations > sites)
      throw ParameterError("M must lie in [0, L=" + std::to_string(sites) + "], got " +
                           std::to_string(excitations));
    const auto count = binomial(sites, excitations);
    states_.reserve(count);
    if (excitations == 0) {
      states_.push_back(0);
      return;
    }
    // Gosper's hack walks same-popcount masks in increasing order.
    std::uint64_t v = (std::uint64_t{1} << excitations) - 1;
    const std::uint64_t limit = std::uint64_t{1} << sites;
    while (v < limit) {
      states_.push_back(static_cast<std::uint32_t>(v));
      const std::uint64_t t = v | (v - 1);
      v = (t + 1) | (((~t & (t + 1)) - 1) >> (std::countr_zero(v) + 1));
    }
  }

  int sites() const noexcept { return sites_; }
  int excitations() const noexcept { return excitations_; }
  std::size_t size() const noexcept { return states_.size(); }
  const std::vector<std::uint32_t>& states() const noexcept { return states_; }

  FockState state(std::size_t k) const { return {states_.at(k), sites_}; }

  /// Combinadic rank: sum over set bits p_1 < ... < p_M of C(p_i, i).
  std::size_t rank(std::uint32_t bits) const {
    if (std::popcount(bits) != excitations_ ||
        (sites_ < 32 && (bits >> sites_) != 0))
      throw DomainError("state does not belong to sector (L=" + std::to_string(sites_) +
                        ", M=" + std::to_string(excitations_) + ")");
    std::uint64_t r = 0;
    int i = 1;
    while (bits != 0) {
      const int p = std::countr_zero(bits);
      r += binomial(p, i++);
      bits &= bits - 1;
    }
    return static_cast<std::size_t>(r);
  }

  std::size_t rank(const FockState& s) const {
    if (s.length != sites_)
      throw DomainError("state has " + std::to_string(s.length) + " sites, sector has " +
                        std::to_string(sites_));
    return rank(s.bits);
  }

  std::size_t index_of(const FockState& s) const { return rank(s); }

  FockState unrank(std::size_t k) const {
    if (k >= states_.size())
      throw ParameterError("rank " + std::to_string(k) + " outside sector of size " +
                           std::to_string(states_.size()));
    std::uint64_t r = k;
    std::uint32_t bits = 0;
    int p = sites_ - 1;
    for (int i = excitations_; i >= 1; --i) {
      while (binomial(p, i) > r) --p;
      bits |= 1U << p;
      r -= binomial(p, i);
      --p;
    }
    return {bits, sites_};
  }

 private:
  int sites_;
  int excitations_;
  std::vector<std::uint32_t> states_;
};

inline SectorBasis enumerate_sector(int sites, int excitations) {
  return SectorBasis(sites, excitations);
}

}  // namespace gaah
