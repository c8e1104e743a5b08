#include "hseg/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "hseg/errors.hpp"
#include "hseg/image_io.hpp"

namespace hseg {

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  DatasetManifest m;
  m.base_dir = path.parent_path();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 5) {
      throw FormatError("manifest line " + std::to_string(line_no) + " has " +
                        std::to_string(fields.size()) + " fields, expected 5");
    }
    SliceRecord rec;
    rec.image_path = fields[0];
    rec.label_path = fields[1];
    rec.split = fields[2];
    rec.volume_id = fields[3];
    try {
      rec.slice_index = std::stoi(fields[4]);
    } catch (const std::exception&) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": bad slice index \"" +
                        fields[4] + "\"");
    }
    m.records.push_back(std::move(rec));
  }
  return m;
}

void DatasetManifest::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open manifest " + path.string() + " for writing");
  for (const SliceRecord& r : records) {
    out << r.image_path << '\t' << r.label_path << '\t' << r.split << '\t' << r.volume_id << '\t'
        << r.slice_index << '\n';
  }
  if (!out) throw IoError("write failure on " + path.string());
}

void DatasetManifest::validate() const {
  std::set<std::pair<std::string, int>> seen;
  for (const SliceRecord& r : records) {
    if (r.split != "train" && r.split != "test") {
      throw FormatError("manifest split tag must be train or test, got \"" + r.split + "\"");
    }
    if (!seen.emplace(r.volume_id, r.slice_index).second) {
      throw FormatError("duplicate manifest record for volume " + r.volume_id + " slice " +
                        std::to_string(r.slice_index));
    }
    for (const std::string& p : {r.image_path, r.label_path}) {
      if (!std::filesystem::exists(base_dir / p)) {
        throw IoError("manifest references missing file " + (base_dir / p).string());
      }
    }
  }
}

std::vector<SliceRecord> DatasetManifest::split(const std::string& tag) const {
  std::vector<SliceRecord> out;
  for (const SliceRecord& r : records) {
    if (r.split == tag) out.push_back(r);
  }
  return out;
}

std::vector<LoadedSlice> load_slices(const DatasetManifest& manifest, const std::string& split) {
  std::vector<LoadedSlice> out;
  for (const SliceRecord& r : manifest.records) {
    if (!split.empty() && r.split != split) continue;
    LoadedSlice s;
    s.image = read_image_pgm(manifest.base_dir / r.image_path);
    s.labels = read_labels_pgm(manifest.base_dir / r.label_path);
    if (s.labels.height() != s.image.dim(0) || s.labels.width() != s.image.dim(1)) {
      throw FormatError("image/label size mismatch for volume " + r.volume_id + " slice " +
                        std::to_string(r.slice_index));
    }
    s.record = r;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace hseg
