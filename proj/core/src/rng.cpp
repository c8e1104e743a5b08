#include "hseg/rng.hpp"

#include <cmath>

#include "hseg/errors.hpp"

namespace hseg {

int Rng::uniform_int(int lo, int hi) {
  if (lo > hi) throw UsageError("uniform_int: lo > hi");
  const std::uint64_t span = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
  if (span == 0) return lo;  // full 32-bit range
  const std::uint64_t limit = (1ull << 32) - ((1ull << 32) % span);
  std::uint64_t draw;
  do {
    draw = next_u32();
  } while (draw >= limit);
  return lo + static_cast<int>(draw % span);
}

float Rng::uniform(float lo, float hi) {
  const double u = static_cast<double>(next_u32()) * (1.0 / 4294967296.0);
  return lo + static_cast<float>(u * (static_cast<double>(hi) - static_cast<double>(lo)));
}

float Rng::normal(float mean, float stddev) {
  if (has_spare_) {
    has_spare_ = false;
    return mean + stddev * static_cast<float>(spare_);
  }
  double u1, u2;
  do {
    u1 = static_cast<double>(next_u32()) * (1.0 / 4294967296.0);
  } while (u1 <= 0.0);
  u2 = static_cast<double>(next_u32()) * (1.0 / 4294967296.0);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * M_PI * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return mean + stddev * static_cast<float>(radius * std::cos(angle));
}

}  // namespace hseg
