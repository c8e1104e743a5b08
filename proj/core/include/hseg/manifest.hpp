#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hseg/label_map.hpp"
#include "hseg/tensor.hpp"

namespace hseg {

/// One dataset slice. Paths are relative to the manifest's directory.
struct SliceRecord {
  std::string image_path;
  std::string label_path;
  std::string split;  // "train" or "test"
  std::string volume_id;
  int slice_index = 0;
};

/// Ordered dataset index, persisted as one tab-separated record per line:
/// image_path, label_path, split, volume_id, slice_index. Record order is the
/// file order, never the filesystem enumeration order.
struct DatasetManifest {
  std::vector<SliceRecord> records;
  std::filesystem::path base_dir;  // directory the paths are relative to

  static DatasetManifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Checks the split tags, uniqueness of (volume, slice) and that every
  /// referenced file exists.
  void validate() const;

  std::vector<SliceRecord> split(const std::string& tag) const;
};

/// A slice loaded into memory.
struct LoadedSlice {
  Tensor image;  // [H,W]
  LabelMap labels;
  SliceRecord record;
};

std::vector<LoadedSlice> load_slices(const DatasetManifest& manifest, const std::string& split);

}  // namespace hseg
