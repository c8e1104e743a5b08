#include "hseg/phantom.hpp"

#include <cmath>
#include <cstdio>

#include "hseg/errors.hpp"
#include "hseg/image_io.hpp"

namespace hseg {

void PhantomConfig::validate() const {
  if (n_volumes < 1) throw ConfigError("n_volumes must be >= 1");
  if (train_volumes < 0 || train_volumes > n_volumes) {
    throw ConfigError("train_volumes must be in [0, n_volumes]");
  }
  if (slices_per_volume < 1) throw ConfigError("slices_per_volume must be >= 1");
  auto range_ok = [](float lo, float hi) { return lo >= 0.0f && lo <= hi; };
  if (!range_ok(healthy_intensity_lo, healthy_intensity_hi) ||
      !range_ok(ggo_intensity_lo, ggo_intensity_hi) ||
      !range_ok(con_intensity_lo, con_intensity_hi) ||
      !range_ok(body_intensity_lo, body_intensity_hi)) {
    throw ConfigError("phantom intensity ranges must satisfy 0 <= lo <= hi");
  }
  if (!(healthy_intensity_hi < ggo_intensity_lo)) {
    throw ConfigError("GGO intensity range must lie strictly above the healthy-lung range");
  }
  if (!(ggo_intensity_hi < con_intensity_lo)) {
    throw ConfigError("CON intensity range must lie strictly above the GGO range");
  }
  if (noise_sigma < 0.0f) throw ConfigError("noise_sigma must be >= 0");
  if (max_ggo_blobs < 0 || max_con_blobs < 0) throw ConfigError("blob counts must be >= 0");
  if (!range_ok(lung_radius_x_lo, lung_radius_x_hi) ||
      !range_ok(lung_radius_y_lo, lung_radius_y_hi) ||
      !range_ok(blob_radius_lo, blob_radius_hi)) {
    throw ConfigError("phantom geometry ranges must satisfy 0 <= lo <= hi");
  }
  // The geometry must resolve to at least a few pixels.
  const float s = static_cast<float>(image_size);
  if (lung_radius_x_lo * s < 3.0f || lung_radius_y_lo * s < 3.0f || blob_radius_lo * s < 2.0f) {
    throw ConfigError("image_size " + std::to_string(image_size) +
                      " too small for the configured lung/blob geometry");
  }
}

namespace {

struct Ellipse {
  float cx, cy, rx, ry;

  float norm_radius(float x, float y) const {
    const float dx = (x - cx) / rx;
    const float dy = (y - cy) / ry;
    return std::sqrt(dx * dx + dy * dy);
  }

  bool contains(float x, float y) const { return norm_radius(x, y) < 1.0f; }
};

struct VolumeGeometry {
  Ellipse body;
  Ellipse lungs[2];
  float healthy_value;
  float body_value;
};

VolumeGeometry sample_volume_geometry(const PhantomConfig& cfg, Rng& rng) {
  const float s = static_cast<float>(cfg.image_size);
  VolumeGeometry g;
  g.body = {s * rng.uniform(0.48f, 0.52f), s * rng.uniform(0.50f, 0.54f),
            s * rng.uniform(0.40f, 0.46f), s * rng.uniform(0.38f, 0.45f)};
  for (int i = 0; i < 2; ++i) {
    // Keep a clear mediastinum strip between the lungs.
    const float cx = (i == 0) ? rng.uniform(0.27f, 0.32f) : rng.uniform(0.68f, 0.73f);
    g.lungs[i] = {s * cx, s * rng.uniform(0.47f, 0.55f),
                  s * rng.uniform(cfg.lung_radius_x_lo, cfg.lung_radius_x_hi),
                  s * rng.uniform(cfg.lung_radius_y_lo, cfg.lung_radius_y_hi)};
  }
  g.healthy_value = rng.uniform(cfg.healthy_intensity_lo, cfg.healthy_intensity_hi);
  g.body_value = rng.uniform(cfg.body_intensity_lo, cfg.body_intensity_hi);
  return g;
}

// Blends a pathology blob into the image and claims its labels. Only pixels
// already inside the lung cavity are relabelled, so pathology can never leak
// outside a lung ellipse. Intensity fades over the outer 12% of the blob
// radius toward the underlying tissue.
void stamp_blob(Tensor& image, LabelMap& labels, const Ellipse& blob, float value,
                std::uint8_t cls) {
  const int H = labels.height(), W = labels.width();
  const int r0 = std::max(0, static_cast<int>(std::floor(blob.cy - blob.ry)) - 1);
  const int r1 = std::min(H - 1, static_cast<int>(std::ceil(blob.cy + blob.ry)) + 1);
  const int c0 = std::max(0, static_cast<int>(std::floor(blob.cx - blob.rx)) - 1);
  const int c1 = std::min(W - 1, static_cast<int>(std::ceil(blob.cx + blob.rx)) + 1);
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      const float rn = blob.norm_radius(static_cast<float>(c), static_cast<float>(r));
      if (rn >= 1.0f) continue;
      if (labels.at(r, c) == kNonLung) continue;
      const float t = std::min(1.0f, (1.0f - rn) / 0.12f);
      const float smooth = t * t * (3.0f - 2.0f * t);
      float& px = image[static_cast<std::int64_t>(r) * W + c];
      px += smooth * (value - px);
      labels.at(r, c) = cls;
    }
  }
}

// Uniform point inside an ellipse, by rejection from the bounding box.
std::pair<float, float> sample_inside(const Ellipse& e, Rng& rng) {
  while (true) {
    const float x = rng.uniform(e.cx - e.rx, e.cx + e.rx);
    const float y = rng.uniform(e.cy - e.ry, e.cy + e.ry);
    if (e.contains(x, y)) return {x, y};
  }
}

// Radius-1, 8-connectivity morphological perturbation of one class region.
// Dilation stays inside the lung cavity of the reference labels.
void perturb_class(const LabelMap& reference, LabelMap& out, std::uint8_t cls, bool dilate) {
  const int H = reference.height(), W = reference.width();
  auto in_class = [&](int r, int c) { return out.at(r, c) == cls; };
  std::vector<std::pair<int, int>> changes;
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      if (dilate) {
        if (in_class(r, c)) continue;
        if (reference.at(r, c) == kNonLung) continue;  // raters stay inside the cavity
        bool neighbour = false;
        for (int dr = -1; dr <= 1 && !neighbour; ++dr) {
          for (int dc = -1; dc <= 1 && !neighbour; ++dc) {
            const int nr = r + dr, nc = c + dc;
            if (nr >= 0 && nr < H && nc >= 0 && nc < W && in_class(nr, nc)) neighbour = true;
          }
        }
        if (neighbour) changes.emplace_back(r, c);
      } else {
        if (!in_class(r, c)) continue;
        bool outside_neighbour = false;
        for (int dr = -1; dr <= 1 && !outside_neighbour; ++dr) {
          for (int dc = -1; dc <= 1 && !outside_neighbour; ++dc) {
            const int nr = r + dr, nc = c + dc;
            if (nr < 0 || nr >= H || nc < 0 || nc >= W || !in_class(nr, nc)) {
              outside_neighbour = true;
            }
          }
        }
        if (outside_neighbour) changes.emplace_back(r, c);
      }
    }
  }
  for (auto [r, c] : changes) {
    out.at(r, c) = dilate ? cls : kHealthyLung;
  }
}

LabelMap make_rater2(const LabelMap& labels, Rng& rng) {
  LabelMap out = labels;
  for (std::uint8_t cls : {kGgo, kCon}) {
    perturb_class(labels, out, cls, rng.coin_flip());
  }
  return out;
}

}  // namespace

std::vector<PhantomSlice> generate_phantom_volume(const PhantomConfig& cfg, Rng& rng) {
  cfg.validate();
  const int S = cfg.image_size;
  const float sf = static_cast<float>(S);
  const VolumeGeometry geo = sample_volume_geometry(cfg, rng);

  std::vector<PhantomSlice> slices;
  slices.reserve(static_cast<std::size_t>(cfg.slices_per_volume));
  for (int s = 0; s < cfg.slices_per_volume; ++s) {
    PhantomSlice slice;
    slice.image = Tensor::full({S, S}, 0.02f);  // air background
    slice.labels = LabelMap(S, S);
    for (int r = 0; r < S; ++r) {
      for (int c = 0; c < S; ++c) {
        const float x = static_cast<float>(c), y = static_cast<float>(r);
        if (geo.body.contains(x, y)) {
          slice.image[static_cast<std::int64_t>(r) * S + c] = geo.body_value;
        }
        for (const Ellipse& lung : geo.lungs) {
          if (lung.contains(x, y)) {
            slice.image[static_cast<std::int64_t>(r) * S + c] = geo.healthy_value;
            slice.labels.at(r, c) = kHealthyLung;
          }
        }
      }
    }

    const int n_ggo = rng.uniform_int(0, cfg.max_ggo_blobs);
    const int n_con = rng.uniform_int(0, cfg.max_con_blobs);
    auto make_blob = [&]() {
      const Ellipse& lung = geo.lungs[rng.uniform_int(0, 1)];
      auto [cx, cy] = sample_inside(lung, rng);
      const float base = sf * rng.uniform(cfg.blob_radius_lo, cfg.blob_radius_hi);
      return Ellipse{cx, cy, base * rng.uniform(0.7f, 1.3f), base * rng.uniform(0.7f, 1.3f)};
    };
    for (int i = 0; i < n_ggo; ++i) {
      stamp_blob(slice.image, slice.labels, make_blob(),
                 rng.uniform(cfg.ggo_intensity_lo, cfg.ggo_intensity_hi), kGgo);
    }
    for (int i = 0; i < n_con; ++i) {
      stamp_blob(slice.image, slice.labels, make_blob(),
                 rng.uniform(cfg.con_intensity_lo, cfg.con_intensity_hi), kCon);
    }

    for (std::int64_t i = 0; i < slice.image.size(); ++i) {
      const float noisy = slice.image[i] + rng.normal(0.0f, cfg.noise_sigma);
      slice.image[i] = std::clamp(noisy, 0.0f, 1.0f);
    }

    if (cfg.rater2_labels) slice.labels2 = make_rater2(slice.labels, rng);
    slices.push_back(std::move(slice));
  }
  return slices;
}

DatasetManifest generate_phantom_dataset(const PhantomConfig& cfg,
                                         const std::filesystem::path& out_dir) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  std::filesystem::create_directories(out_dir / "labels", ec);
  if (cfg.rater2_labels) std::filesystem::create_directories(out_dir / "labels2", ec);
  if (!std::filesystem::is_directory(out_dir / "images")) {
    throw IoError("cannot create output directory " + (out_dir / "images").string());
  }

  DatasetManifest manifest;
  manifest.base_dir = out_dir;
  Rng rng(cfg.seed);
  char name[64];
  for (int v = 0; v < cfg.n_volumes; ++v) {
    const std::vector<PhantomSlice> slices = generate_phantom_volume(cfg, rng);
    char vol_id[16];
    std::snprintf(vol_id, sizeof(vol_id), "vol%03d", v);
    for (int s = 0; s < static_cast<int>(slices.size()); ++s) {
      std::snprintf(name, sizeof(name), "%s_slice%02d.pgm", vol_id, s);
      const std::string file = name;
      write_image_pgm(out_dir / "images" / file, slices[static_cast<std::size_t>(s)].image);
      write_labels_pgm(out_dir / "labels" / file, slices[static_cast<std::size_t>(s)].labels);
      if (cfg.rater2_labels) {
        write_labels_pgm(out_dir / "labels2" / file, slices[static_cast<std::size_t>(s)].labels2);
      }
      SliceRecord rec;
      rec.image_path = "images/" + file;
      rec.label_path = "labels/" + file;
      rec.split = v < cfg.train_volumes ? "train" : "test";
      rec.volume_id = vol_id;
      rec.slice_index = s;
      manifest.records.push_back(std::move(rec));
    }
  }
  manifest.save(out_dir / "manifest.tsv");
  return manifest;
}

}  // namespace hseg
