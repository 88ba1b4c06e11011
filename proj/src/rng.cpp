#include "gateshare/rng.hpp"

#include <cmath>
#include <sstream>

#include "gateshare/error.hpp"

namespace gateshare {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

SeededRng::SeededRng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

std::uint64_t SeededRng::next_u64() { return engine_(); }

double SeededRng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double SeededRng::normal() {
  double u1 = uniform();
  double u2 = uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double SeededRng::gumbel() {
  double u = uniform();
  if (u < 1e-12) u = 1e-12;
  if (u > 1.0 - 1e-12) u = 1.0 - 1e-12;
  return -std::log(-std::log(u));
}

std::array<double, 2> SeededRng::gumbel_pair() {
  const double a = gumbel();
  const double b = gumbel();
  return {a, b};
}

std::uint64_t SeededRng::below(std::uint64_t n) {
  if (n == 0) throw ConfigError("SeededRng::below: n must be positive");
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return x % n;
}

SeededRng SeededRng::derive(std::uint64_t salt) const {
  return SeededRng(splitmix64(seed_ ^ splitmix64(salt + 0x51ED270B9E3779B9ull)));
}

std::string SeededRng::save_state() const {
  std::ostringstream os;
  os << seed_ << " ";
  os << engine_;
  return os.str();
}

void SeededRng::load_state(const std::string& text) {
  std::istringstream is(text);
  is >> seed_;
  is >> engine_;
  if (is.fail()) throw ConfigError("SeededRng::load_state: malformed state string");
}

}  // namespace gateshare
