#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "hseg/hunet.hpp"
#include "hseg/label_map.hpp"
#include "hseg/losses.hpp"
#include "hseg/optimizer.hpp"
#include "hseg/rng.hpp"

namespace hseg {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 4;
  int patch_size = 32;
  float learning_rate = 1e-3f;
  LossConfig loss;
  std::uint64_t seed = 1;
  float lnet_loss_weight = 1.0f;
  bool augment_flip = true;

  /// `spatial_divisor` is the model's 2^depth requirement.
  void validate(int spatial_divisor) const;
};

/// One training example: grayscale image [H,W] in [0,1] plus its labels.
struct TrainingSample {
  Tensor image;
  LabelMap labels;
};

/// Identically cropped (and possibly flipped) image/label patch.
struct PatchSample {
  Tensor image;  // [patch,patch]
  LabelMap labels;
};

/// Uniformly random top-left crop; with `flip`, a fair-coin horizontal flip
/// is applied to image and labels together.
PatchSample sample_patch(const Tensor& image, const LabelMap& labels, int patch_size, Rng& rng,
                         bool flip = false);

/// Assembled minibatch ready for a train step.
struct Batch {
  Tensor images;    // [B,1,P,P]
  Tensor targets;   // [B,4,P,P] one-hot
  Tensor lung;      // [B,1,P,P]
};

Batch make_batch(std::span<const PatchSample> patches);

struct StepLosses {
  float total;
  float lnet;
  float cnet;
};

/// Forward, backward and one optimizer update. Returned losses are the values
/// before the update. Models without a lung head skip the binary term.
StepLosses train_step(SegModel& model, const Batch& batch, AdamOptimizer& optimizer,
                      const TrainConfig& config, long step_index);

struct TraceRow {
  int epoch;
  int step;  // global step index
  float total;
  float lnet;
  float cnet;
};

struct TrainResult {
  std::vector<TraceRow> trace;
};

/// Full training run: per epoch a seeded shuffle, random patch batches and one
/// train_step per batch. Fully determined by (data, config, model seed).
TrainResult train_model(std::span<const TrainingSample> data, SegModel& model,
                        const TrainConfig& config);

/// CSV export with header epoch,step,total,lnet,cnet.
void write_loss_trace_csv(std::ostream& out, std::span<const TraceRow> trace);

/// Inverse relative class frequency over the samples' labels, normalized to
/// mean 1. Absent classes are counted as one pixel to stay finite.
std::vector<float> inverse_frequency_weights(std::span<const TrainingSample> data);

}  // namespace hseg
