#include "hseg/label_map.hpp"

#include "hseg/errors.hpp"

namespace hseg {

LabelMap::LabelMap(int height, int width)
    : height_(height),
      width_(width),
      values_(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), 0) {
  if (height < 0 || width < 0) throw DimensionError("negative label map dimensions");
}

LabelMap::LabelMap(int height, int width, std::vector<std::uint8_t> values)
    : height_(height), width_(width), values_(std::move(values)) {
  if (height < 0 || width < 0) throw DimensionError("negative label map dimensions");
  if (static_cast<std::size_t>(height) * static_cast<std::size_t>(width) != values_.size()) {
    throw DimensionError("label map " + std::to_string(height) + "x" + std::to_string(width) +
                         " wants " + std::to_string(height * width) + " values, got " +
                         std::to_string(values_.size()));
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (values_[i] >= kNumClasses) {
      throw FormatError("label value " + std::to_string(values_[i]) + " out of range at pixel " +
                        std::to_string(i));
    }
  }
}

Tensor one_hot(std::span<const LabelMap> batch) {
  if (batch.empty()) throw UsageError("one_hot: empty batch");
  const int H = batch[0].height();
  const int W = batch[0].width();
  const std::int64_t plane = static_cast<std::int64_t>(H) * W;
  Tensor out({static_cast<int>(batch.size()), kNumClasses, H, W});
  for (std::size_t n = 0; n < batch.size(); ++n) {
    if (batch[n].height() != H || batch[n].width() != W) {
      throw DimensionError("one_hot: inconsistent label map sizes in batch");
    }
    const std::int64_t base = static_cast<std::int64_t>(n) * kNumClasses * plane;
    auto vals = batch[n].values();
    for (std::int64_t p = 0; p < plane; ++p) {
      out[base + static_cast<std::int64_t>(vals[static_cast<std::size_t>(p)]) * plane + p] = 1.0f;
    }
  }
  return out;
}

Tensor lung_mask(std::span<const LabelMap> batch) {
  if (batch.empty()) throw UsageError("lung_mask: empty batch");
  const int H = batch[0].height();
  const int W = batch[0].width();
  const std::int64_t plane = static_cast<std::int64_t>(H) * W;
  Tensor out({static_cast<int>(batch.size()), 1, H, W});
  for (std::size_t n = 0; n < batch.size(); ++n) {
    if (batch[n].height() != H || batch[n].width() != W) {
      throw DimensionError("lung_mask: inconsistent label map sizes in batch");
    }
    auto vals = batch[n].values();
    for (std::int64_t p = 0; p < plane; ++p) {
      if (vals[static_cast<std::size_t>(p)] != kNonLung) {
        out[static_cast<std::int64_t>(n) * plane + p] = 1.0f;
      }
    }
  }
  return out;
}

}  // namespace hseg
