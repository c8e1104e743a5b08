#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hseg/tape.hpp"

namespace hseg {

/// Named reference to a model parameter tensor.
struct ParamRef {
  std::string name;
  Tensor* tensor;
};

/// Registers model parameters as leaves on a tape and remembers the mapping,
/// so gradients can be fetched per parameter after backward().
class TapeBinding {
 public:
  TapeBinding(Tape& tape, bool trainable) : tape_(&tape), trainable_(trainable) {}

  ValueId bind(const Tensor& param) {
    ValueId id = tape_->leaf(param, trainable_);
    bound_.emplace_back(&param, id);
    return id;
  }

  ValueId id_of(const Tensor* param) const {
    for (const auto& [t, id] : bound_) {
      if (t == param) return id;
    }
    throw UsageError("parameter was not bound on this tape");
  }

  bool trainable() const { return trainable_; }
  const std::vector<std::pair<const Tensor*, ValueId>>& bound() const { return bound_; }

 private:
  Tape* tape_;
  bool trainable_;
  std::vector<std::pair<const Tensor*, ValueId>> bound_;
};

}  // namespace hseg
