#pragma once

#include <vector>

#include "hseg/tape.hpp"

namespace hseg {

/// Shared knobs of the training objectives. `class_weights` compensates the
/// class imbalance, `lambda` blends cross-entropy against Dice, `epsilon`
/// keeps the Dice denominator positive.
struct LossConfig {
  std::vector<float> class_weights{1.0f, 1.0f, 1.0f, 1.0f};
  float lambda = 0.5f;
  float epsilon = 1e-6f;
  int num_labels = 4;
  float log_clip = 1e-7f;

  void validate() const;
};

/// Per-label Dice loss over every pixel in the batch:
///   1 - 2*sum(y_l * p_l) / (sum(y_l + p_l) + epsilon).
/// `pred` and `target` are [N,L,H,W]; `target` is one-hot.
ValueId dice_loss_label(Tape& tape, ValueId pred, ValueId target, int label, float epsilon);

/// Sum of per-label Dice losses weighted by class_weights.
ValueId weighted_dice_loss(Tape& tape, ValueId pred, ValueId target, const LossConfig& config);

/// Weighted categorical cross-entropy, summed (not averaged) over pixels:
///   -sum_p sum_l w_l * y_l * log(p_l).
/// Predictions are clamped to [log_clip, 1-log_clip] before the log.
ValueId weighted_ce_loss(Tape& tape, ValueId pred, ValueId target, const LossConfig& config);

/// Two-class cross-entropy with unit weights for the lung-mask head.
/// `pred_lung` holds sigmoid outputs [N,1,H,W], `target_lung` is a 0/1 mask.
ValueId binary_ce_loss(Tape& tape, ValueId pred_lung, ValueId target_lung,
                       float log_clip = 1e-7f);

/// Blended objective: lambda * WCE + (1 - lambda) * weighted Dice.
ValueId cnet_total_loss(Tape& tape, ValueId pred, ValueId target, const LossConfig& config);

}  // namespace hseg
