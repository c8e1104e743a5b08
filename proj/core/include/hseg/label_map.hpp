#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hseg/tensor.hpp"

namespace hseg {

/// Tissue classes of the categorical segmentation.
inline constexpr int kNumClasses = 4;
inline constexpr std::uint8_t kNonLung = 0;
inline constexpr std::uint8_t kHealthyLung = 1;
inline constexpr std::uint8_t kGgo = 2;
inline constexpr std::uint8_t kCon = 3;

/// Per-pixel class map, row-major. Values are always < kNumClasses.
class LabelMap {
 public:
  LabelMap() = default;
  LabelMap(int height, int width);
  LabelMap(int height, int width, std::vector<std::uint8_t> values);

  int height() const { return height_; }
  int width() const { return width_; }
  std::int64_t size() const { return static_cast<std::int64_t>(values_.size()); }

  std::uint8_t at(int row, int col) const {
    return values_[static_cast<std::size_t>(row) * width_ + col];
  }
  std::uint8_t& at(int row, int col) {
    return values_[static_cast<std::size_t>(row) * width_ + col];
  }

  std::span<const std::uint8_t> values() const { return values_; }
  std::span<std::uint8_t> values() { return values_; }

  bool operator==(const LabelMap& other) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> values_;
};

/// One-hot target [N,kNumClasses,H,W] for a batch of label maps.
Tensor one_hot(std::span<const LabelMap> batch);

/// Binary lung-cavity mask [N,1,H,W]: 1 where the class is healthy lung,
/// GGO or consolidation.
Tensor lung_mask(std::span<const LabelMap> batch);

}  // namespace hseg
