#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "hseg/tensor.hpp"

namespace hseg {

/// Handle to a value recorded on a Tape.
using ValueId = std::int32_t;

/// Reverse-mode autodiff tape. Every operation appends a node holding the
/// forward result, its operand ids and a gradient-propagation rule; nodes
/// are therefore already in topological order and backward() is a single
/// reverse sweep with summation into operand gradients.
///
/// A tape is single-owner: record and differentiate from one thread.
/// Distinct tapes share no state and may run fully in parallel.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  ValueId leaf(Tensor value);
  ValueId leaf(Tensor value, bool requires_grad);

  // Elementwise arithmetic on identically shaped tensors.
  ValueId add(ValueId a, ValueId b);
  ValueId sub(ValueId a, ValueId b);
  ValueId mul(ValueId a, ValueId b);
  ValueId div(ValueId a, ValueId b);
  ValueId add_scalar(ValueId a, float c);
  ValueId mul_scalar(ValueId a, float c);

  /// Sum of all entries, as a [1] tensor.
  ValueId sum_all(ValueId a);

  /// Hard clamp to [lo, hi]; gradient passes only strictly inside the range.
  ValueId clamp(ValueId a, float lo, float hi);
  ValueId log(ValueId a);

  ValueId relu(ValueId a);
  ValueId sigmoid(ValueId a);
  /// Softmax along the channel axis of an [N,L,H,W] tensor.
  ValueId softmax_channels(ValueId a);

  /// 2-d convolution: input [N,C,H,W], kernel [F,C,kh,kw] with odd kh,kw,
  /// bias [F], zero padding. Output size must divide exactly.
  ValueId conv2d(ValueId input, ValueId kernel, ValueId bias, int stride = 1, int padding = 0);

  /// 2x2 non-overlapping max pool; H and W must be even. Backward routes the
  /// gradient to the first-in-row-major argmax of each window.
  ValueId maxpool2(ValueId a);

  /// Nearest-neighbour x2 upsampling.
  ValueId upsample_nearest2(ValueId a);

  /// Channel concatenation of [N,Ca,H,W] and [N,Cb,H,W].
  ValueId concat_channels(ValueId a, ValueId b);

  /// Single channel of an [N,C,H,W] tensor as [N,1,H,W].
  ValueId select_channel(ValueId a, int channel);

  const Tensor& value(ValueId id) const { return node(id).value; }
  bool requires_grad(ValueId id) const { return node(id).requires_grad; }
  std::size_t num_nodes() const { return nodes_.size(); }

  /// Reverse accumulation from a scalar loss. After the call every
  /// requires-grad node has a gradient tensor of its value's shape; nodes the
  /// loss does not reach get zeros. May be invoked once per tape.
  void backward(ValueId loss);

  /// Gradient of the node the last backward() ran for. UsageError before any
  /// backward, or for nodes that do not require grad.
  const Tensor& grad(ValueId id) const;

 private:
  struct Node;
  using BackwardFn = std::function<void(Tape&, const Node&)>;

  struct Node {
    Tensor value;
    Tensor grad;  // allocated during backward
    ValueId id = -1;
    ValueId parent[3] = {-1, -1, -1};
    int num_parents = 0;
    bool requires_grad = false;
    BackwardFn backward_fn;  // empty for leaves / no-grad nodes
  };

  Node& node(ValueId id);
  const Node& node(ValueId id) const;
  ValueId push(Tensor value, std::initializer_list<ValueId> parents, const char* op_name,
               BackwardFn fn);
  /// Gradient buffer of a parent, zero-allocated on first touch; nullptr when
  /// the parent does not require grad.
  Tensor* grad_buffer(ValueId id);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace hseg
