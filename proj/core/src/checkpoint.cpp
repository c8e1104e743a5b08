#include "hseg/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "hseg/errors.hpp"
#include "hseg/label_map.hpp"

namespace hseg {

namespace {

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  std::int64_t offset() const { return pos_; }

  void need(std::int64_t n, const char* what) {
    if (pos_ + n > static_cast<std::int64_t>(bytes_.size())) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what + ": need " +
                            std::to_string(n) + " bytes, have " +
                            std::to_string(bytes_.size() - static_cast<std::size_t>(pos_)),
                        pos_);
    }
  }

  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(bytes_[static_cast<std::size_t>(pos_++)]);
  }

  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) {
      v |= static_cast<std::uint16_t>(static_cast<std::uint8_t>(
               bytes_[static_cast<std::size_t>(pos_ + i)]))
           << (8 * i);
    }
    pos_ += 2;
    return v;
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(
               bytes_[static_cast<std::size_t>(pos_ + i)]))
           << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::string raw(std::int64_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(static_cast<std::size_t>(pos_), static_cast<std::size_t>(n));
    pos_ += n;
    return s;
  }

  std::vector<float> floats(std::int64_t n, const char* what) {
    need(4 * n, what);
    std::vector<float> out(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        bits |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(
                    bytes_[static_cast<std::size_t>(pos_ + 4 * i + b)]))
                << (8 * b);
      }
      std::memcpy(&out[static_cast<std::size_t>(i)], &bits, 4);
    }
    pos_ += 4 * n;
    return out;
  }

  bool at_end() const { return pos_ == static_cast<std::int64_t>(bytes_.size()); }

 private:
  std::string bytes_;
  std::int64_t pos_ = 0;
};

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on " + path.string());
  return bytes;
}

}  // namespace

std::int64_t checkpoint_file_size(
    const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
  std::int64_t total = 4 + 4 + 4;  // magic, version, count
  for (const auto& [name, t] : tensors) {
    total += 2 + static_cast<std::int64_t>(name.size()) + 1 + 4 * t->rank() + 4 * t->size();
  }
  return total;
}

void write_named_tensors(const std::filesystem::path& path,
                         const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
  std::string out;
  out.reserve(static_cast<std::size_t>(checkpoint_file_size(tensors)));
  out.append(kCheckpointMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > 0xffff) throw UsageError("tensor name too long: " + name);
    for (char c : name) {
      if (static_cast<unsigned char>(c) > 0x7f) {
        throw UsageError("tensor name must be ASCII: " + name);
      }
    }
    if (t->rank() > 0xff) throw UsageError("tensor rank too large");
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.append(name);
    out.push_back(static_cast<char>(t->rank()));
    for (int d : t->shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (std::int64_t i = 0; i < t->size(); ++i) put_f32(out, (*t)[i]);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failure on " + path.string());
}

std::vector<NamedTensor> read_named_tensors(const std::filesystem::path& path) {
  Reader r(slurp(path));
  const std::string magic = r.raw(4, "magic");
  if (std::memcmp(magic.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError("bad checkpoint magic in " + path.string(), 0);
  }
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  }
  const std::uint32_t count = r.u32("tensor count");
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = r.u16("name length");
    const std::string name = r.raw(name_len, "name");
    const std::uint8_t rank = r.u8("rank");
    Shape shape(rank);
    std::int64_t n = 1;
    for (int d = 0; d < rank; ++d) {
      shape[static_cast<std::size_t>(d)] = static_cast<int>(r.u32("dim"));
      n *= shape[static_cast<std::size_t>(d)];
    }
    std::vector<float> data = r.floats(n, name.c_str());
    out.emplace_back(name, Tensor(std::move(shape), std::move(data)));
  }
  if (!r.at_end()) {
    throw FormatError("trailing bytes after last tensor in " + path.string(), r.offset());
  }
  return out;
}

void save_checkpoint(const SegModel& model, const std::filesystem::path& path) {
  write_named_tensors(path, model.named_params());
}

namespace {

struct TensorIndex {
  std::map<std::string, Tensor> by_name;

  const Tensor& get(const std::string& name) const {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("checkpoint missing tensor " + name);
    return it->second;
  }
};

TensorIndex index_tensors(std::vector<NamedTensor> tensors) {
  TensorIndex idx;
  for (auto& [name, t] : tensors) {
    if (!idx.by_name.emplace(name, std::move(t)).second) {
      throw FormatError("duplicate tensor name " + name + " in checkpoint");
    }
  }
  return idx;
}

UNetConfig infer_unet_config(const TensorIndex& idx, const std::string& prefix,
                             const std::string& adapter) {
  UNetConfig cfg;
  const Tensor& aw = idx.get(adapter + ".weight");
  if (aw.rank() != 4) throw FormatError(adapter + ".weight has rank " + std::to_string(aw.rank()));
  cfg.base_channels = aw.dim(0);
  cfg.in_channels = aw.dim(1);
  const Tensor& e0 = idx.get(prefix + ".enc0.conv_a.weight");
  cfg.kernel_size = e0.dim(2);
  const Tensor& head = idx.get(prefix + ".head.weight");
  cfg.out_channels = head.dim(0);
  int depth = 0;
  while (idx.by_name.count(prefix + ".enc" + std::to_string(depth) + ".conv_a.weight")) ++depth;
  cfg.depth = depth;
  return cfg;
}

template <typename Model>
void assign_all(Model& model, const TensorIndex& idx) {
  std::size_t assigned = 0;
  for (const auto& [name, t] : model.named_params()) {
    auto it = idx.by_name.find(name);
    if (it == idx.by_name.end()) throw FormatError("checkpoint missing tensor " + name);
    if (!same_shape(t->shape(), it->second.shape())) {
      throw FormatError("checkpoint tensor " + name + " has shape " +
                        shape_str(it->second.shape()) + ", model expects " +
                        shape_str(t->shape()));
    }
    model.set_param(name, it->second);
    ++assigned;
  }
  if (assigned != idx.by_name.size()) {
    throw FormatError("checkpoint holds " + std::to_string(idx.by_name.size()) +
                      " tensors, model consumes " + std::to_string(assigned));
  }
}

bool has_lnet(const TensorIndex& idx) {
  return idx.by_name.count("adapter_l.weight") != 0;
}

}  // namespace

HUNetCompound load_hunet_checkpoint(const std::filesystem::path& path) {
  TensorIndex idx = index_tensors(read_named_tensors(path));
  if (!has_lnet(idx)) {
    throw FormatError("checkpoint " + path.string() + " holds a flat model, not a compound");
  }
  UNetConfig lcfg = infer_unet_config(idx, "lnet", "adapter_l");
  UNetConfig ccfg = infer_unet_config(idx, "cnet", "adapter_c");
  HUNetCompound model(lcfg, ccfg, /*seed=*/0);
  assign_all(model, idx);
  return model;
}

std::unique_ptr<SegModel> load_model_checkpoint(const std::filesystem::path& path) {
  TensorIndex idx = index_tensors(read_named_tensors(path));
  if (has_lnet(idx)) {
    UNetConfig lcfg = infer_unet_config(idx, "lnet", "adapter_l");
    UNetConfig ccfg = infer_unet_config(idx, "cnet", "adapter_c");
    auto model = std::make_unique<HUNetCompound>(lcfg, ccfg, /*seed=*/0);
    assign_all(*model, idx);
    return model;
  }
  UNetConfig ccfg = infer_unet_config(idx, "cnet", "adapter_c");
  auto model = std::make_unique<FlatCNet>(ccfg, /*seed=*/0);
  assign_all(*model, idx);
  return model;
}

}  // namespace hseg
