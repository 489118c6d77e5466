#ifndef SGDLAB_RNG_HPP
#define SGDLAB_RNG_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>

namespace sgdlab {

/// SplitMix64 step on a state word: mix64(s) is the output SplitMix64
/// produces from state s. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Child stream key for `index` under `parent`. Used for the
/// master seed -> replica -> iteration hierarchy; never sequential seeds.
constexpr std::uint64_t derive_key(std::uint64_t parent,
                                   std::uint64_t index) noexcept {
  return mix64(parent ^ mix64(index ^ 0x6a09e667f3bcc909ULL));
}

/// Counter-based generator: the i-th output of stream `key` is a pure
/// function of (key, i), so any draw can be reproduced without replaying
/// the stream. Normals are produced by Box-Muller so that sequences do not
/// depend on the standard library's distribution implementations.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  constexpr explicit CounterRng(std::uint64_t key = 0) noexcept : key_{key} {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  constexpr result_type operator()() noexcept {
    return mix64(key_ ^ mix64(counter_++));
  }

  /// Uniform on [0, 1).
  double uniform() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  /// Uniform on (0, 1].
  double uniform_pos() noexcept {
    return static_cast<double>(((*this)() >> 11) + 1) * 0x1.0p-53;
  }

  /// Uniform integer on [0, n) by multiply-shift.
  std::uint64_t bounded(std::uint64_t n) noexcept {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>((*this)()) * n) >> 64);
  }

  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform_pos()));
    const double t = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  void fill_normal(std::span<double> out, double stddev = 1.0) noexcept {
    for (double& v : out) v = stddev * normal();
  }

  /// Uniform direction on the unit sphere in R^out.size().
  void unit_sphere(std::span<double> out) noexcept {
    double sq = 0.0;
    do {
      sq = 0.0;
      for (double& v : out) {
        v = normal();
        sq += v * v;
      }
    } while (sq == 0.0);
    const double inv = 1.0 / std::sqrt(sq);
    for (double& v : out) v *= inv;
  }

  constexpr std::uint64_t key() const noexcept { return key_; }
  constexpr std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace sgdlab

#endif  // SGDLAB_RNG_HPP
