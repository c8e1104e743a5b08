#pragma once

#include <array>
#include <string>
#include <vector>

#include "hseg/params.hpp"
#include "hseg/rng.hpp"
#include "hseg/tape.hpp"

namespace hseg {

/// Geometry of one U-Net branch. `in_channels` is the raw channel count the
/// branch receives (before its 1x1 channel adapter); the encoder itself runs
/// at `base_channels` on the top level, doubling per pooling step.
struct UNetConfig {
  int depth = 3;
  int base_channels = 12;
  int in_channels = 1;
  int out_channels = 4;
  int kernel_size = 3;

  void validate() const;
  int spatial_divisor() const { return 1 << depth; }
};

/// One convolution: weight [F,C,k,k] plus bias [F].
struct ConvParam {
  Tensor weight;
  Tensor bias;
};

/// He-style initialization: normal with stddev sqrt(2 / fan_in), zero bias.
ConvParam make_conv(int out_channels, int in_channels, int kernel_size, Rng& rng);

/// Encoder/decoder with skip connections. Per level the encoder applies two
/// conv+ReLU blocks and a 2x2 max pool; the decoder mirrors them with
/// nearest-neighbour upsampling and skip concatenation. A final 1x1 conv
/// produces `out_channels` logits. Shape-preserving: pad = kernel/2.
class UNet {
 public:
  UNet() = default;
  UNet(const UNetConfig& config, Rng& rng);

  const UNetConfig& config() const { return config_; }

  /// `input` must be [N, base_channels, H, W] with H, W divisible by 2^depth.
  ValueId forward(Tape& tape, TapeBinding& binding, ValueId input) const;

  template <typename F>
  void visit_params(const std::string& prefix, F&& f) {
    visit_impl(*this, prefix, f);
  }
  template <typename F>
  void visit_params(const std::string& prefix, F&& f) const {
    visit_impl(*this, prefix, f);
  }

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& self, const std::string& prefix, F& f) {
    for (std::size_t i = 0; i < self.enc_.size(); ++i) {
      const std::string lvl = prefix + ".enc" + std::to_string(i);
      f(lvl + ".conv_a.weight", self.enc_[i][0].weight);
      f(lvl + ".conv_a.bias", self.enc_[i][0].bias);
      f(lvl + ".conv_b.weight", self.enc_[i][1].weight);
      f(lvl + ".conv_b.bias", self.enc_[i][1].bias);
    }
    f(prefix + ".bottleneck.conv_a.weight", self.bottleneck_[0].weight);
    f(prefix + ".bottleneck.conv_a.bias", self.bottleneck_[0].bias);
    f(prefix + ".bottleneck.conv_b.weight", self.bottleneck_[1].weight);
    f(prefix + ".bottleneck.conv_b.bias", self.bottleneck_[1].bias);
    for (std::size_t i = self.dec_.size(); i-- > 0;) {
      const std::string lvl = prefix + ".dec" + std::to_string(i);
      f(lvl + ".conv_a.weight", self.dec_[i][0].weight);
      f(lvl + ".conv_a.bias", self.dec_[i][0].bias);
      f(lvl + ".conv_b.weight", self.dec_[i][1].weight);
      f(lvl + ".conv_b.bias", self.dec_[i][1].bias);
    }
    f(prefix + ".head.weight", self.head_.weight);
    f(prefix + ".head.bias", self.head_.bias);
  }

  UNetConfig config_;
  std::vector<std::array<ConvParam, 2>> enc_;  // per level
  std::array<ConvParam, 2> bottleneck_;
  std::vector<std::array<ConvParam, 2>> dec_;  // per level, applied deepest first
  ConvParam head_;
};

}  // namespace hseg
