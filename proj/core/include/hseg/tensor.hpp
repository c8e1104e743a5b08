#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hseg/errors.hpp"

namespace hseg {

/// Dimension sizes, outermost first. NCHW order for 4-d activations.
using Shape = std::vector<int>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);
bool same_shape(const Shape& a, const Shape& b);

/// Dense row-major 32-bit float array. A Tensor is a plain value: copying
/// copies the buffer, and nothing mutates one behind your back. Gradient
/// bookkeeping lives on the Tape, not here; `requires_grad` only marks
/// leaves when they are registered on a tape.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor scalar(float value);
  static Tensor full(Shape shape, float value);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const;
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

  float operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
  float& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }

  /// Value of a single-element tensor.
  float item() const;

  bool all_finite() const;

  bool requires_grad = false;

 private:
  Shape shape_;
  std::vector<float> data_;
};

/// Flat index into an NCHW tensor.
inline std::int64_t idx4(const Shape& s, int n, int c, int h, int w) {
  return ((static_cast<std::int64_t>(n) * s[1] + c) * s[2] + h) * s[3] + w;
}

/// Throws DimensionError naming both shapes unless they match.
void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

}  // namespace hseg
