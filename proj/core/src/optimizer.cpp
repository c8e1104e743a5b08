#include "hseg/optimizer.hpp"

#include <cmath>

#include "hseg/errors.hpp"

namespace hseg {

void AdamOptimizer::step(std::span<ParamRef> params, std::span<const Tensor* const> grads) {
  if (params.size() != grads.size()) {
    throw UsageError("optimizer step: " + std::to_string(params.size()) + " params vs " +
                     std::to_string(grads.size()) + " grads");
  }
  if (first_moment_.empty()) {
    first_moment_.reserve(params.size());
    second_moment_.reserve(params.size());
    for (const ParamRef& p : params) {
      first_moment_.emplace_back(p.tensor->shape());
      second_moment_.emplace_back(p.tensor->shape());
    }
  } else if (first_moment_.size() != params.size()) {
    throw UsageError("optimizer step: parameter list changed size");
  }
  ++step_;
  const float b1 = config_.beta1;
  const float b2 = config_.beta2;
  const float bias1 = 1.0f - std::pow(b1, static_cast<float>(step_));
  const float bias2 = 1.0f - std::pow(b2, static_cast<float>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i].tensor;
    const Tensor& g = *grads[i];
    require_same_shape(p, g, "optimizer step");
    Tensor& m = first_moment_[i];
    Tensor& v = second_moment_[i];
    for (std::int64_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (1.0f - b1) * g[j];
      v[j] = b2 * v[j] + (1.0f - b2) * g[j] * g[j];
      const float mhat = m[j] / bias1;
      const float vhat = v[j] / bias2;
      p[j] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

}  // namespace hseg
