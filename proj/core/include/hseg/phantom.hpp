#pragma once

#include <filesystem>

#include "hseg/manifest.hpp"
#include "hseg/rng.hpp"

namespace hseg {

/// Settings of the procedural lung phantom. Intensity ranges are disjoint and
/// ordered (healthy < GGO < CON < body), which keeps the class-intensity
/// ordering testable while texture noise and boundary smoothing keep the
/// segmentation task non-trivial.
struct PhantomConfig {
  int n_volumes = 12;
  int train_volumes = 8;  // volumes [0, train_volumes) get the train split tag
  int slices_per_volume = 8;
  int image_size = 64;
  std::uint64_t seed = 7;

  float healthy_intensity_lo = 0.05f, healthy_intensity_hi = 0.20f;
  float ggo_intensity_lo = 0.35f, ggo_intensity_hi = 0.55f;
  float con_intensity_lo = 0.65f, con_intensity_hi = 0.85f;
  float body_intensity_lo = 0.90f, body_intensity_hi = 1.00f;
  float noise_sigma = 0.05f;

  // Lung ellipse geometry, as fractions of the image size.
  float lung_radius_x_lo = 0.11f, lung_radius_x_hi = 0.15f;
  float lung_radius_y_lo = 0.26f, lung_radius_y_hi = 0.34f;

  // Pathology blob radii, as fractions of the image size.
  float blob_radius_lo = 0.06f, blob_radius_hi = 0.13f;
  int max_ggo_blobs = 3;
  int max_con_blobs = 2;

  /// Emit a second, boundary-perturbed annotation set (labels2/) standing in
  /// for an independent human rater.
  bool rater2_labels = true;

  void validate() const;
};

/// In-memory slice produced by the generator.
struct PhantomSlice {
  Tensor image;       // [S,S]
  LabelMap labels;    // ground truth
  LabelMap labels2;   // perturbed second annotation (when enabled)
};

/// Generates one volume's slices; exposed separately so tests can inspect
/// slices without touching the filesystem. `volume_rng` drives everything.
std::vector<PhantomSlice> generate_phantom_volume(const PhantomConfig& config, Rng& volume_rng);

/// Writes the full dataset (images/, labels/, optional labels2/ and
/// manifest.tsv) under `out_dir` and returns the manifest. Byte-identical
/// output for identical configs.
DatasetManifest generate_phantom_dataset(const PhantomConfig& config,
                                         const std::filesystem::path& out_dir);

}  // namespace hseg
