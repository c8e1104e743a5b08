#pragma once

#include <filesystem>
#include <string>

#include "hseg/ensemble.hpp"
#include "hseg/phantom.hpp"

namespace hseg {

/// Flat key=value run configuration ('#' starts a comment). Unknown keys are
/// rejected; every value is validated against its module's invariants when
/// the consuming command starts. CLI flags override file values.
///
/// Keys: depth, base_channels, kernel_size, epochs, batch_size, patch_size,
/// learning_rate, lnet_loss_weight, augment_flip, lambda, epsilon, log_clip,
/// class_weights (auto | four comma-separated floats), ensemble_k, base_seed,
/// seed, n_volumes, train_volumes, slices_per_volume, image_size,
/// noise_sigma, healthy_intensity, ggo_intensity, con_intensity,
/// body_intensity (ranges as lo,hi), lung_radius_x, lung_radius_y,
/// blob_radius, max_ggo_blobs, max_con_blobs, rater2_labels.
struct RunConfig {
  EnsembleConfig ensemble;  // holds the train config and both U-Net configs
  PhantomConfig phantom;
  bool auto_class_weights = true;

  RunConfig();

  /// Applies one key=value assignment; ConfigError on unknown keys or
  /// malformed values.
  void set(const std::string& key, const std::string& value);

  static RunConfig load(const std::filesystem::path& path);
};

}  // namespace hseg
