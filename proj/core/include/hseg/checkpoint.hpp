#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "hseg/hunet.hpp"

namespace hseg {

/// Checkpoint container format, version 1:
///   magic "HSEG" | u32 version | u32 tensor count
///   per tensor: u16 name length | name bytes (ASCII) | u8 rank |
///               rank x u32 dims | product(dims) x f32
/// All integers and floats little-endian. Save/load roundtrips bit-exactly.
inline constexpr char kCheckpointMagic[4] = {'H', 'S', 'E', 'G'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

using NamedTensor = std::pair<std::string, Tensor>;

void write_named_tensors(const std::filesystem::path& path,
                         const std::vector<std::pair<std::string, const Tensor*>>& tensors);
std::vector<NamedTensor> read_named_tensors(const std::filesystem::path& path);

/// Exact on-disk size of a checkpoint holding these tensors.
std::int64_t checkpoint_file_size(
    const std::vector<std::pair<std::string, const Tensor*>>& tensors);

/// Serializes a model's parameters in canonical order.
void save_checkpoint(const SegModel& model, const std::filesystem::path& path);

/// Rebuilds a hierarchical compound from a checkpoint. The architecture is
/// recovered from the parameter names and shapes; a flat checkpoint is a
/// format error here.
HUNetCompound load_hunet_checkpoint(const std::filesystem::path& path);

/// Loads either model kind, dispatching on the stored parameter names.
std::unique_ptr<SegModel> load_model_checkpoint(const std::filesystem::path& path);

}  // namespace hseg
