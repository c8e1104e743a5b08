#pragma once

#include <filesystem>

#include "hseg/tensor.hpp"

namespace hseg {

/// Soft-map file format: ASCII header line "SSEG 1 <H> <W> <L>\n"
/// followed by H*W*L little-endian IEEE-754 floats, pixel-major (row, then
/// column) with the label index innermost. Roundtrips bit-identically.
/// The input tensor is [L,H,W]; uncertainty maps export with L = 1.
void write_softmap(const std::filesystem::path& path, const Tensor& soft);

/// Reads a soft map back as [L,H,W]. With `validate_sums`, channel sums are
/// checked against 1 within 1e-5.
Tensor read_softmap(const std::filesystem::path& path, bool validate_sums = false);

}  // namespace hseg
