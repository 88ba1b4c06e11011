#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>

namespace gateshare {

/// Deterministic random stream. All stochastic components of a run draw from
/// explicitly seeded instances of this class; two runs with the same seed are
/// bitwise identical. Distribution transforms are implemented by hand so the
/// produced doubles do not depend on the standard library vendor.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed);

  std::uint64_t next_u64();

  /// Uniform on [0, 1) with 53 bits of mantissa.
  double uniform();

  /// Standard normal via Box-Muller (cosine branch only, so the stream state
  /// is exactly the engine state).
  double normal();

  /// Gumbel(0,1) draw: -log(-log u) with u clamped to [1e-12, 1-1e-12].
  double gumbel();

  std::array<double, 2> gumbel_pair();

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  /// Independent stream derived from this stream's original seed and a salt.
  /// Does not consume or depend on the current state.
  SeededRng derive(std::uint64_t salt) const;

  std::uint64_t seed() const { return seed_; }

  std::string save_state() const;
  void load_state(const std::string& text);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

/// splitmix64 mix step; used for seed derivation and config hashing.
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace gateshare
