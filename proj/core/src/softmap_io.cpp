#include "hseg/softmap_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "hseg/errors.hpp"

namespace hseg {

void write_softmap(const std::filesystem::path& path, const Tensor& soft) {
  if (soft.rank() != 3) {
    throw DimensionError("write_softmap: tensor must be [L,H,W], got " + shape_str(soft.shape()));
  }
  const int L = soft.dim(0), H = soft.dim(1), W = soft.dim(2);
  const std::int64_t plane = static_cast<std::int64_t>(H) * W;
  std::string out = "SSEG 1 " + std::to_string(H) + " " + std::to_string(W) + " " +
                    std::to_string(L) + "\n";
  out.reserve(out.size() + static_cast<std::size_t>(soft.size()) * 4);
  for (std::int64_t p = 0; p < plane; ++p) {
    for (int l = 0; l < L; ++l) {
      const float v = soft[static_cast<std::int64_t>(l) * plane + p];
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failure on " + path.string());
}

Tensor read_softmap(const std::filesystem::path& path, bool validate_sums) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on " + path.string());

  const std::size_t eol = bytes.find('\n');
  if (eol == std::string::npos) {
    throw FormatError("missing header line in " + path.string(), 0);
  }
  const std::string header = bytes.substr(0, eol);
  int version = 0, H = 0, W = 0, L = 0;
  char trailing = 0;
  if (std::sscanf(header.c_str(), "SSEG %d %d %d %d%c", &version, &H, &W, &L, &trailing) != 4) {
    throw FormatError("malformed soft-map header \"" + header + "\" in " + path.string(), 0);
  }
  if (version != 1) {
    throw FormatError("unsupported soft-map version " + std::to_string(version), 0);
  }
  if (H <= 0 || W <= 0 || L <= 0) {
    throw FormatError("non-positive soft-map dimensions in " + path.string(), 0);
  }
  const std::int64_t payload_offset = static_cast<std::int64_t>(eol) + 1;
  const std::int64_t count = static_cast<std::int64_t>(H) * W * L;
  const std::int64_t want = count * 4;
  const std::int64_t have = static_cast<std::int64_t>(bytes.size()) - payload_offset;
  if (have != want) {
    throw FormatError("soft-map payload size mismatch in " + path.string() + ": expected " +
                          std::to_string(want) + " bytes, have " + std::to_string(have),
                      payload_offset);
  }

  Tensor out({L, H, W});
  const std::int64_t plane = static_cast<std::int64_t>(H) * W;
  for (std::int64_t p = 0; p < plane; ++p) {
    for (int l = 0; l < L; ++l) {
      const std::int64_t at = payload_offset + (p * L + l) * 4;
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        bits |= static_cast<std::uint32_t>(
                    static_cast<std::uint8_t>(bytes[static_cast<std::size_t>(at + b)]))
                << (8 * b);
      }
      float v;
      std::memcpy(&v, &bits, 4);
      out[static_cast<std::int64_t>(l) * plane + p] = v;
    }
  }
  if (validate_sums) {
    for (std::int64_t p = 0; p < plane; ++p) {
      float sum = 0.0f;
      for (int l = 0; l < L; ++l) sum += out[static_cast<std::int64_t>(l) * plane + p];
      if (std::fabs(sum - 1.0f) > 1e-5f) {
        throw FormatError("soft-map channel sum " + std::to_string(sum) +
                          " deviates from 1 at pixel " + std::to_string(p));
      }
    }
  }
  return out;
}

}  // namespace hseg
