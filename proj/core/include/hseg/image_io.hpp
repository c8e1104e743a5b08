#pragma once

#include <filesystem>

#include "hseg/label_map.hpp"
#include "hseg/tensor.hpp"

namespace hseg {

/// Binary PGM ("P5", maxval 255) image reader. Pixel bytes map to floats in
/// [0,1] via v/255; the result is [H,W].
Tensor read_image_pgm(const std::filesystem::path& path);

/// Inverse of read_image_pgm: floats map to bytes by round-half-up of v*255
/// (clamped). The header is written canonically as "P5\n<w> <h>\n255\n", so
/// write(read(f)) reproduces files this library wrote byte-for-byte.
void write_image_pgm(const std::filesystem::path& path, const Tensor& image);

/// Binary PGM whose pixel values are tissue classes {0,1,2,3}. Any larger
/// value is a format error naming the pixel index.
LabelMap read_labels_pgm(const std::filesystem::path& path);
void write_labels_pgm(const std::filesystem::path& path, const LabelMap& labels);

}  // namespace hseg
