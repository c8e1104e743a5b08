#pragma once

#include <span>
#include <vector>

#include "hseg/params.hpp"

namespace hseg {

struct AdamConfig {
  float learning_rate = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
};

/// Adam with bias correction. State is keyed by parameter position, so the
/// caller must pass the same parameter list (same order) on every step.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig config) : config_(config) {}

  /// Applies one update. `grads[i]` is the gradient for `params[i]`.
  void step(std::span<ParamRef> params, std::span<const Tensor* const> grads);

  long step_count() const { return step_; }

 private:
  AdamConfig config_;
  std::vector<Tensor> first_moment_;
  std::vector<Tensor> second_moment_;
  long step_ = 0;
};

}  // namespace hseg
