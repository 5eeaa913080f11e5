#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace dbda {

// Deterministic random source. mt19937_64 supplies the raw stream; all
// derived draws (uniform, normal, shuffle) are implemented here rather than
// through std::*_distribution so that a seed pins the exact byte-level
// results across standard library versions.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next() { return engine_(); }

  // [0,1), 53-bit resolution.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; the spare value is cached.
  double normal();

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  // Unbiased integer in [0, n). n must be > 0.
  uint64_t below(uint64_t n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Derives an independent stream seed from (seed, salt).
  static uint64_t mix(uint64_t seed, uint64_t salt);

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dbda
