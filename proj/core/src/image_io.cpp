#include "hseg/image_io.hpp"

#include <cmath>
#include <fstream>

#include "hseg/errors.hpp"

namespace hseg {

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on " + path.string());
  return bytes;
}

bool is_pnm_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

// Whitespace/comment-tolerant header tokenizer, as the PNM spec allows.
struct PnmHeader {
  int width;
  int height;
  std::int64_t payload_offset;
};

PnmHeader parse_p5_header(const std::string& bytes, const std::filesystem::path& path) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw FormatError("not a binary PGM (expected magic \"P5\") in " + path.string(), 0);
  }
  std::int64_t pos = 2;
  auto next_int = [&](const char* what) {
    while (pos < static_cast<std::int64_t>(bytes.size())) {
      if (is_pnm_space(bytes[static_cast<std::size_t>(pos)])) {
        ++pos;
      } else if (bytes[static_cast<std::size_t>(pos)] == '#') {
        while (pos < static_cast<std::int64_t>(bytes.size()) &&
               bytes[static_cast<std::size_t>(pos)] != '\n') {
          ++pos;
        }
      } else {
        break;
      }
    }
    if (pos >= static_cast<std::int64_t>(bytes.size()) ||
        !std::isdigit(static_cast<unsigned char>(bytes[static_cast<std::size_t>(pos)]))) {
      throw FormatError(std::string("expected ") + what + " in PGM header of " + path.string(),
                        pos);
    }
    long v = 0;
    while (pos < static_cast<std::int64_t>(bytes.size()) &&
           std::isdigit(static_cast<unsigned char>(bytes[static_cast<std::size_t>(pos)]))) {
      v = v * 10 + (bytes[static_cast<std::size_t>(pos)] - '0');
      if (v > 1 << 20) throw FormatError(std::string(what) + " out of range in " + path.string(), pos);
      ++pos;
    }
    return static_cast<int>(v);
  };

  PnmHeader h;
  h.width = next_int("width");
  h.height = next_int("height");
  const std::int64_t maxval_pos = pos;
  const int maxval = next_int("maxval");
  if (maxval != 255) {
    throw FormatError("PGM maxval must be 255, got " + std::to_string(maxval) + " in " +
                          path.string(),
                      maxval_pos);
  }
  if (pos >= static_cast<std::int64_t>(bytes.size()) ||
      !is_pnm_space(bytes[static_cast<std::size_t>(pos)])) {
    throw FormatError("missing whitespace after maxval in " + path.string(), pos);
  }
  h.payload_offset = pos + 1;
  return h;
}

std::pair<PnmHeader, std::string> read_p5(const std::filesystem::path& path) {
  std::string bytes = slurp(path);
  PnmHeader h = parse_p5_header(bytes, path);
  const std::int64_t want = static_cast<std::int64_t>(h.width) * h.height;
  const std::int64_t have = static_cast<std::int64_t>(bytes.size()) - h.payload_offset;
  if (have < want) {
    throw FormatError("PGM payload truncated in " + path.string() + ": expected " +
                          std::to_string(want) + " pixel bytes, have " + std::to_string(have),
                      static_cast<std::int64_t>(bytes.size()));
  }
  if (have > want) {
    throw FormatError("trailing bytes after PGM payload in " + path.string(),
                      h.payload_offset + want);
  }
  return {h, std::move(bytes)};
}

void write_p5(const std::filesystem::path& path, int width, int height,
              const std::string& payload) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("write failure on " + path.string());
}

}  // namespace

Tensor read_image_pgm(const std::filesystem::path& path) {
  auto [h, bytes] = read_p5(path);
  Tensor img({h.height, h.width});
  for (std::int64_t i = 0; i < img.size(); ++i) {
    const auto v = static_cast<std::uint8_t>(bytes[static_cast<std::size_t>(h.payload_offset + i)]);
    img[i] = static_cast<float>(v) / 255.0f;
  }
  return img;
}

void write_image_pgm(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 2) {
    throw DimensionError("write_image_pgm: image must be [H,W], got " + shape_str(image.shape()));
  }
  std::string payload(static_cast<std::size_t>(image.size()), '\0');
  for (std::int64_t i = 0; i < image.size(); ++i) {
    const float scaled = std::floor(image[i] * 255.0f + 0.5f);  // round half up
    const int v = static_cast<int>(std::clamp(scaled, 0.0f, 255.0f));
    payload[static_cast<std::size_t>(i)] = static_cast<char>(v);
  }
  write_p5(path, image.dim(1), image.dim(0), payload);
}

LabelMap read_labels_pgm(const std::filesystem::path& path) {
  auto [h, bytes] = read_p5(path);
  std::vector<std::uint8_t> values(static_cast<std::size_t>(h.width) *
                                   static_cast<std::size_t>(h.height));
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto v = static_cast<std::uint8_t>(
        bytes[static_cast<std::size_t>(h.payload_offset) + i]);
    if (v >= kNumClasses) {
      throw FormatError("label value " + std::to_string(v) + " out of range at pixel " +
                            std::to_string(i) + " in " + path.string(),
                        h.payload_offset + static_cast<std::int64_t>(i));
    }
    values[i] = v;
  }
  return LabelMap(h.height, h.width, std::move(values));
}

void write_labels_pgm(const std::filesystem::path& path, const LabelMap& labels) {
  std::string payload(static_cast<std::size_t>(labels.size()), '\0');
  auto vals = labels.values();
  for (std::size_t i = 0; i < vals.size(); ++i) payload[i] = static_cast<char>(vals[i]);
  write_p5(path, labels.width(), labels.height(), payload);
}

}  // namespace hseg
