#pragma once

// Deterministic random source shared by every stochastic operation.
//
// Draws come from std::mt19937_64, whose output sequence is fixed by the C++
// standard. Uniforms use the top 53 bits of one 64-bit word; normals use the
// Box-Muller transform over two uniforms and cache the second variate. Both
// conversions are written out here rather than delegated to <random>
// distributions, whose algorithms are implementation-defined.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "tresdiff/common.hpp"

namespace tresdiff {

class RngState {
 public:
  explicit RngState(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  /// Number of 64-bit words consumed so far.
  std::uint64_t position() const noexcept { return position_; }

  /// Rebuild a state from (seed, position). Any cached normal variate is dropped,
  /// so restore only at positions recorded right after next_u64/uniform calls or
  /// after an even number of normal draws.
  static RngState restore(std::uint64_t seed, std::uint64_t position) {
    RngState r(seed);
    r.engine_.discard(position);
    r.position_ = position;
    return r;
  }

  std::uint64_t next_u64() {
    ++position_;
    return engine_();
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [lo, hi] (inclusive) by rejection, unbiased.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    require(hi >= lo, "uniform_int: empty range");
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(next_u64());
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % span);
    std::uint64_t r;
    do {
      r = next_u64();
    } while (r >= limit);
    return lo + static_cast<std::int64_t>(r % span);
  }

  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(th);
    has_cached_ = true;
    return r * std::cos(th);
  }

  Image normal_image(int h, int w) {
    Image img(h, w);
    for (double& v : img.pixels) v = normal();
    return img;
  }

  /// Independent child stream; deterministic in the parent state.
  RngState fork() { return RngState(next_u64() ^ 0x9E3779B97F4A7C15ULL); }

 private:
  std::uint64_t seed_;
  std::uint64_t position_ = 0;
  std::mt19937_64 engine_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace tresdiff
