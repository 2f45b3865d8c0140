#pragma once

// Counter-based random streams. Every draw is a pure function of
// (master seed, point index, trajectory index, counter), so results do not
// depend on how work is scheduled across threads.

#include <cstdint>
#include <numbers>
#include <vector>

namespace gaah {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Key of the stream owned by trajectory `trajectory` of grid point `point`.
constexpr std::uint64_t stream_key(std::uint64_t master, std::uint64_t point,
                                   std::uint64_t trajectory) noexcept {
  return splitmix64(splitmix64(splitmix64(master) ^ point) ^ (trajectory * 0xd1b54a32d192ed03ULL));
}

class CounterRng {
 public:
  explicit constexpr CounterRng(std::uint64_t key) noexcept : key_(key) {}

  constexpr std::uint64_t next() noexcept { return splitmix64(key_ ^ splitmix64(counter_++)); }

  /// Uniform in [0, 1) with 53 random bits.
  constexpr double uniform() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Uniform phase in [-pi, pi) for draw `draw` at grid point `point`.
inline double draw_phase(std::uint64_t master, std::uint64_t point, std::uint64_t draw) {
  CounterRng rng(stream_key(master, point, draw));
  const double phase = -std::numbers::pi + 2.0 * std::numbers::pi * rng.uniform();
  return phase < std::numbers::pi ? phase : -std::numbers::pi;
}

inline std::vector<double> draw_phases(std::uint64_t master, std::uint64_t point, int count) {
  std::vector<double> out(static_cast<std::size_t>(count));
  for (int r = 0; r < count; ++r)
    out[static_cast<std::size_t>(r)] = draw_phase(master, point, static_cast<std::uint64_t>(r));
  return out;
}

}  // namespace gaah
