#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ventlab {

// Thrown for malformed configuration or structurally invalid inputs.
// The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Thrown when a computation produces non-finite values (divergence,
// misconfigured plant). The CLI maps this to exit code 3.
class NumericFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Valve command range: percent open.
inline constexpr double kUMax = 100.0;

// Discrete time base shared by traces, waveforms and the plant.
struct TimeGrid {
  double dt = 0.03;           // seconds per step
  int steps_per_breath = 100; // 3 s breath at the default dt
  int insp_steps = 40;        // inspiratory prefix of each breath

  void validate() const {
    if (!(dt > 0.0)) throw ConfigError("TimeGrid: dt must be > 0");
    if (steps_per_breath <= 0)
      throw ConfigError("TimeGrid: steps_per_breath must be > 0");
    if (insp_steps <= 0 || insp_steps >= steps_per_breath)
      throw ConfigError("TimeGrid: need 0 < insp_steps < steps_per_breath");
  }
};

namespace detail {

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace detail

// Small deterministic generator (splitmix64 core). Every stochastic
// operation in the repo draws from a stream derived from the run seed
// and a fixed label, so reruns with the same seed are bit-identical.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() { return detail::splitmix64(state_); }

  // uniform in [0, 1)
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  bool bernoulli(double p) { return uniform01() < p; }

  // Box-Muller with a cached spare, so draws come in a fixed order.
  double normal(double mean, double sigma) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + sigma * spare_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return mean + sigma * r * std::cos(a);
  }

  // index in [0, n)
  size_t index(size_t n) { return static_cast<size_t>(next_u64() % n); }

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Derives an independent seed from the master seed and a label.
inline uint64_t derive_seed(uint64_t master_seed, std::string_view label) {
  uint64_t s = master_seed ^ detail::fnv1a(label);
  detail::splitmix64(s);  // decorrelate nearby seeds
  return s;
}

// Derives an independent stream from the master seed and a label.
inline Rng derive_rng(uint64_t master_seed, std::string_view label) {
  return Rng(derive_seed(master_seed, label));
}

inline void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericFault(std::string(what) + " is not finite");
}

}  // namespace ventlab
