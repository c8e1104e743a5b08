#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace hseg {

/// Deterministic random source. Wraps mt19937 (whose output sequence the
/// standard pins down exactly) and applies its own distribution transforms,
/// so a seed reproduces the identical stream on every platform and stdlib.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(static_cast<std::uint32_t>(seed ^ (seed >> 32))) {}

  std::uint32_t next_u32() { return gen_(); }

  /// Uniform integer in [lo, hi], inclusive. Rejection sampling, no modulo bias.
  int uniform_int(int lo, int hi);

  /// Uniform float in [lo, hi).
  float uniform(float lo = 0.0f, float hi = 1.0f);

  bool coin_flip() { return (next_u32() & 1u) != 0; }

  /// Box-Muller normal draw; caches the spare value.
  float normal(float mean, float stddev);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    // Fisher-Yates with the rejection-sampled index draw above.
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      int j = uniform_int(0, i);
      std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
    }
  }

 private:
  std::mt19937 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace hseg
