#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hseg/unet.hpp"

namespace hseg {

/// Common surface of the trainable segmentation networks: the hierarchical
/// compound and the flat ablation variant.
class SegModel {
 public:
  struct ForwardOut {
    ValueId class_soft;                 // [N,4,H,W] softmax output
    std::optional<ValueId> lung_soft;   // [N,1,H,W] sigmoid output, when present
  };

  virtual ~SegModel() = default;

  /// Records the full forward pass on `tape`; parameters are registered
  /// through `binding`. `image` is [N,1,H,W].
  virtual ForwardOut forward(Tape& tape, TapeBinding& binding, ValueId image) const = 0;

  /// Parameters in a stable canonical order (also the checkpoint order).
  virtual std::vector<ParamRef> parameters() = 0;
  virtual std::vector<std::pair<std::string, const Tensor*>> named_params() const = 0;

  std::int64_t parameter_count() const;

  /// Spatial dims of inputs must be divisible by this.
  virtual int spatial_divisor() const = 0;
};

/// Two-stage cascade: the L-Net extracts the lung cavity, the C-Net receives
/// the image concatenated with the soft lung mask and partitions it into the
/// four tissue classes. Both stages live on one tape, so the C-Net loss
/// backpropagates into the L-Net.
class HUNetCompound : public SegModel {
 public:
  HUNetCompound() = default;
  HUNetCompound(const UNetConfig& lnet_config, const UNetConfig& cnet_config, std::uint64_t seed);

  ForwardOut forward(Tape& tape, TapeBinding& binding, ValueId image) const override;
  std::vector<ParamRef> parameters() override;
  std::vector<std::pair<std::string, const Tensor*>> named_params() const override;
  int spatial_divisor() const override;

  const UNetConfig& lnet_config() const { return lnet_.config(); }
  const UNetConfig& cnet_config() const { return cnet_.config(); }

  /// Overwrites one parameter by canonical name (checkpoint loading).
  void set_param(const std::string& name, Tensor value);

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& self, F& f) {
    f("adapter_l.weight", self.adapter_l_.weight);
    f("adapter_l.bias", self.adapter_l_.bias);
    self.lnet_.visit_params("lnet", f);
    f("adapter_c.weight", self.adapter_c_.weight);
    f("adapter_c.bias", self.adapter_c_.bias);
    self.cnet_.visit_params("cnet", f);
  }

  ConvParam adapter_l_;  // 1x1 conv: image channels -> L-Net encoder width
  ConvParam adapter_c_;  // 1x1 conv: image+mask channels -> C-Net encoder width
  UNet lnet_;
  UNet cnet_;
};

/// Validates the configs and builds a seeded compound. Identical seeds give
/// bit-identical parameters.
HUNetCompound build_hunet(const UNetConfig& lnet_config, const UNetConfig& cnet_config,
                          std::uint64_t seed);

/// Ablation variant: the C-Net alone on the raw image, no lung stage.
class FlatCNet : public SegModel {
 public:
  FlatCNet() = default;
  FlatCNet(const UNetConfig& cnet_config, std::uint64_t seed);

  ForwardOut forward(Tape& tape, TapeBinding& binding, ValueId image) const override;
  std::vector<ParamRef> parameters() override;
  std::vector<std::pair<std::string, const Tensor*>> named_params() const override;
  int spatial_divisor() const override { return cnet_.config().spatial_divisor(); }

  const UNetConfig& cnet_config() const { return cnet_.config(); }
  void set_param(const std::string& name, Tensor value);

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& self, F& f) {
    f("adapter_c.weight", self.adapter_.weight);
    f("adapter_c.bias", self.adapter_.bias);
    self.cnet_.visit_params("cnet", f);
  }

  ConvParam adapter_;
  UNet cnet_;
};

/// Inference outputs of a model on a single image.
struct Inference {
  Tensor class_soft;                // [4,H,W]
  std::optional<Tensor> lung_soft;  // [H,W]
};

/// Runs a forward pass without gradient tracking. `image` is [H,W] or [1,H,W].
Inference infer(const SegModel& model, const Tensor& image);

}  // namespace hseg
