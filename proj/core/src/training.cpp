#include "hseg/training.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "hseg/errors.hpp"

namespace hseg {

void TrainConfig::validate(int spatial_divisor) const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (patch_size < 1) throw ConfigError("patch_size must be >= 1");
  if (patch_size % spatial_divisor != 0) {
    throw ConfigError("patch_size " + std::to_string(patch_size) + " must be divisible by " +
                      std::to_string(spatial_divisor));
  }
  if (!(learning_rate > 0.0f) && learning_rate != 0.0f) {
    throw ConfigError("learning_rate must be >= 0");
  }
  if (lnet_loss_weight < 0.0f) throw ConfigError("lnet_loss_weight must be >= 0");
  loss.validate();
}

PatchSample sample_patch(const Tensor& image, const LabelMap& labels, int patch_size, Rng& rng,
                         bool flip) {
  if (image.rank() != 2) {
    throw DimensionError("sample_patch: image must be [H,W], got " + shape_str(image.shape()));
  }
  const int H = image.dim(0), W = image.dim(1);
  if (labels.height() != H || labels.width() != W) {
    throw DimensionError("sample_patch: labels " + std::to_string(labels.height()) + "x" +
                         std::to_string(labels.width()) + " vs image " + shape_str(image.shape()));
  }
  if (patch_size > H || patch_size > W) {
    throw GeometryError("sample_patch: patch " + std::to_string(patch_size) +
                        " exceeds image " + shape_str(image.shape()));
  }
  const int top = rng.uniform_int(0, H - patch_size);
  const int left = rng.uniform_int(0, W - patch_size);
  const bool do_flip = flip && rng.coin_flip();

  PatchSample out;
  out.image = Tensor({patch_size, patch_size});
  out.labels = LabelMap(patch_size, patch_size);
  for (int r = 0; r < patch_size; ++r) {
    for (int c = 0; c < patch_size; ++c) {
      const int sc = do_flip ? (left + patch_size - 1 - c) : (left + c);
      out.image[static_cast<std::int64_t>(r) * patch_size + c] =
          image[static_cast<std::int64_t>(top + r) * W + sc];
      out.labels.at(r, c) = labels.at(top + r, sc);
    }
  }
  return out;
}

Batch make_batch(std::span<const PatchSample> patches) {
  if (patches.empty()) throw UsageError("make_batch: empty batch");
  const int B = static_cast<int>(patches.size());
  const int P = patches[0].image.dim(0);
  Batch batch;
  batch.images = Tensor({B, 1, P, P});
  std::vector<LabelMap> labels;
  labels.reserve(patches.size());
  for (int b = 0; b < B; ++b) {
    const PatchSample& s = patches[static_cast<std::size_t>(b)];
    if (s.image.dim(0) != P || s.image.dim(1) != P) {
      throw DimensionError("make_batch: inconsistent patch sizes");
    }
    std::copy_n(s.image.data().data(), static_cast<std::int64_t>(P) * P,
                batch.images.data().data() + static_cast<std::int64_t>(b) * P * P);
    labels.push_back(s.labels);
  }
  batch.targets = one_hot(labels);
  batch.lung = lung_mask(labels);
  return batch;
}

StepLosses train_step(SegModel& model, const Batch& batch, AdamOptimizer& optimizer,
                      const TrainConfig& config, long step_index) {
  if (batch.images.rank() != 4) throw DimensionError("train_step: batch images must be [B,1,P,P]");

  Tape tape;
  TapeBinding binding(tape, /*trainable=*/true);
  ValueId image = tape.leaf(batch.images, false);
  auto out = model.forward(tape, binding, image);

  ValueId target = tape.leaf(batch.targets, false);
  ValueId cnet = cnet_total_loss(tape, out.class_soft, target, config.loss);
  ValueId total = cnet;
  float lnet_value = 0.0f;
  if (out.lung_soft) {
    ValueId lung_target = tape.leaf(batch.lung, false);
    ValueId lnet = binary_ce_loss(tape, *out.lung_soft, lung_target, config.loss.log_clip);
    lnet_value = tape.value(lnet).item();
    total = tape.add(tape.mul_scalar(lnet, config.lnet_loss_weight), cnet);
  }
  const float cnet_value = tape.value(cnet).item();
  const float total_value = tape.value(total).item();
  if (!std::isfinite(total_value)) {
    throw TrainingError("non-finite training loss", step_index);
  }

  tape.backward(total);

  auto params = model.parameters();
  std::vector<const Tensor*> grads;
  grads.reserve(params.size());
  for (const ParamRef& p : params) grads.push_back(&tape.grad(binding.id_of(p.tensor)));
  optimizer.step(params, grads);

  return {total_value, lnet_value, cnet_value};
}

TrainResult train_model(std::span<const TrainingSample> data, SegModel& model,
                        const TrainConfig& config) {
  if (data.empty()) throw UsageError("train_model: empty dataset");
  config.validate(model.spatial_divisor());

  Rng rng(config.seed);
  AdamOptimizer optimizer(AdamConfig{.learning_rate = config.learning_rate});
  TrainResult result;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  long global_step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<PatchSample> patches;
      patches.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const TrainingSample& s = data[order[i]];
        patches.push_back(
            sample_patch(s.image, s.labels, config.patch_size, rng, config.augment_flip));
      }
      StepLosses losses = train_step(model, make_batch(patches), optimizer, config, global_step);
      result.trace.push_back(
          {epoch, static_cast<int>(global_step), losses.total, losses.lnet, losses.cnet});
      ++global_step;
    }
  }
  return result;
}

void write_loss_trace_csv(std::ostream& out, std::span<const TraceRow> trace) {
  out << "epoch,step,total,lnet,cnet\n";
  char line[160];
  for (const TraceRow& row : trace) {
    std::snprintf(line, sizeof(line), "%d,%d,%.9g,%.9g,%.9g\n", row.epoch, row.step,
                  static_cast<double>(row.total), static_cast<double>(row.lnet),
                  static_cast<double>(row.cnet));
    out << line;
  }
}

std::vector<float> inverse_frequency_weights(std::span<const TrainingSample> data) {
  if (data.empty()) throw UsageError("inverse_frequency_weights: empty dataset");
  std::array<std::int64_t, kNumClasses> counts{};
  for (const TrainingSample& s : data) {
    for (std::uint8_t v : s.labels.values()) ++counts[v];
  }
  std::array<double, kNumClasses> inv{};
  double sum = 0.0;
  for (int l = 0; l < kNumClasses; ++l) {
    inv[static_cast<std::size_t>(l)] =
        1.0 / static_cast<double>(std::max<std::int64_t>(counts[static_cast<std::size_t>(l)], 1));
    sum += inv[static_cast<std::size_t>(l)];
  }
  std::vector<float> weights(kNumClasses);
  for (int l = 0; l < kNumClasses; ++l) {
    weights[static_cast<std::size_t>(l)] =
        static_cast<float>(inv[static_cast<std::size_t>(l)] * kNumClasses / sum);
  }
  return weights;
}

}  // namespace hseg
