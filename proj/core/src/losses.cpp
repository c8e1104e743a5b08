#include "hseg/losses.hpp"

#include <cmath>

#include "hseg/errors.hpp"

namespace hseg {

void LossConfig::validate() const {
  if (lambda < 0.0f || lambda > 1.0f) {
    throw ConfigError("lambda must be in [0,1], got " + std::to_string(lambda));
  }
  if (!(epsilon > 0.0f)) {
    throw ConfigError("epsilon must be > 0, got " + std::to_string(epsilon));
  }
  if (num_labels < 1) throw ConfigError("num_labels must be >= 1");
  if (static_cast<int>(class_weights.size()) != num_labels) {
    throw ConfigError("expected " + std::to_string(num_labels) + " class weights, got " +
                      std::to_string(class_weights.size()));
  }
  bool any_positive = false;
  for (float w : class_weights) {
    if (w < 0.0f) throw ConfigError("class weights must be >= 0");
    if (w > 0.0f) any_positive = true;
  }
  if (!any_positive) throw ConfigError("at least one class weight must be > 0");
  if (!(log_clip > 0.0f) || log_clip >= 0.5f) {
    throw ConfigError("log_clip must be in (0, 0.5)");
  }
}

namespace {

void check_pred_target(const Tape& tape, ValueId pred, ValueId target) {
  const Tensor& p = tape.value(pred);
  const Tensor& t = tape.value(target);
  if (p.rank() != 4) {
    throw DimensionError("loss: prediction must be [N,L,H,W], got " + shape_str(p.shape()));
  }
  require_same_shape(p, t, "loss");
}

}  // namespace

ValueId dice_loss_label(Tape& tape, ValueId pred, ValueId target, int label, float epsilon) {
  check_pred_target(tape, pred, target);
  ValueId p = tape.select_channel(pred, label);
  ValueId y = tape.select_channel(target, label);
  ValueId overlap = tape.sum_all(tape.mul(y, p));
  ValueId denom = tape.add_scalar(tape.sum_all(tape.add(y, p)), epsilon);
  ValueId frac = tape.div(tape.mul_scalar(overlap, 2.0f), denom);
  return tape.add_scalar(tape.mul_scalar(frac, -1.0f), 1.0f);
}

ValueId weighted_dice_loss(Tape& tape, ValueId pred, ValueId target, const LossConfig& config) {
  config.validate();
  check_pred_target(tape, pred, target);
  if (tape.value(pred).dim(1) != config.num_labels) {
    throw DimensionError("weighted_dice_loss: prediction has " +
                         std::to_string(tape.value(pred).dim(1)) + " channels, config expects " +
                         std::to_string(config.num_labels));
  }
  ValueId total = -1;
  for (int l = 0; l < config.num_labels; ++l) {
    ValueId term =
        tape.mul_scalar(dice_loss_label(tape, pred, target, l, config.epsilon),
                        config.class_weights[static_cast<std::size_t>(l)]);
    total = (total < 0) ? term : tape.add(total, term);
  }
  return total;
}

ValueId weighted_ce_loss(Tape& tape, ValueId pred, ValueId target, const LossConfig& config) {
  config.validate();
  check_pred_target(tape, pred, target);
  if (tape.value(pred).dim(1) != config.num_labels) {
    throw DimensionError("weighted_ce_loss: prediction has " +
                         std::to_string(tape.value(pred).dim(1)) + " channels, config expects " +
                         std::to_string(config.num_labels));
  }
  ValueId log_pred = tape.log(tape.clamp(pred, config.log_clip, 1.0f - config.log_clip));
  ValueId total = -1;
  for (int l = 0; l < config.num_labels; ++l) {
    ValueId picked = tape.mul(tape.select_channel(target, l), tape.select_channel(log_pred, l));
    ValueId term = tape.mul_scalar(tape.sum_all(picked),
                                   -config.class_weights[static_cast<std::size_t>(l)]);
    total = (total < 0) ? term : tape.add(total, term);
  }
  return total;
}

ValueId binary_ce_loss(Tape& tape, ValueId pred_lung, ValueId target_lung, float log_clip) {
  const Tensor& p = tape.value(pred_lung);
  const Tensor& t = tape.value(target_lung);
  require_same_shape(p, t, "binary_ce_loss");
  ValueId clipped = tape.clamp(pred_lung, log_clip, 1.0f - log_clip);
  ValueId pos = tape.mul(target_lung, tape.log(clipped));
  ValueId one_minus_t = tape.add_scalar(tape.mul_scalar(target_lung, -1.0f), 1.0f);
  ValueId one_minus_p = tape.add_scalar(tape.mul_scalar(clipped, -1.0f), 1.0f);
  ValueId neg = tape.mul(one_minus_t, tape.log(one_minus_p));
  return tape.mul_scalar(tape.sum_all(tape.add(pos, neg)), -1.0f);
}

ValueId cnet_total_loss(Tape& tape, ValueId pred, ValueId target, const LossConfig& config) {
  config.validate();
  ValueId wce = weighted_ce_loss(tape, pred, target, config);
  ValueId dice = weighted_dice_loss(tape, pred, target, config);
  return tape.add(tape.mul_scalar(wce, config.lambda), tape.mul_scalar(dice, 1.0f - config.lambda));
}

}  // namespace hseg
