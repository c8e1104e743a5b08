#include "hseg/unet.hpp"

#include <cmath>

#include "hseg/errors.hpp"

namespace hseg {

void UNetConfig::validate() const {
  if (depth < 1) throw ConfigError("unet depth must be >= 1, got " + std::to_string(depth));
  if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
  if (in_channels < 1) throw ConfigError("in_channels must be >= 1");
  if (out_channels < 1) throw ConfigError("out_channels must be >= 1");
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw ConfigError("kernel_size must be odd and positive, got " + std::to_string(kernel_size));
  }
}

ConvParam make_conv(int out_channels, int in_channels, int kernel_size, Rng& rng) {
  ConvParam p;
  p.weight = Tensor({out_channels, in_channels, kernel_size, kernel_size});
  const float fan_in = static_cast<float>(in_channels) * kernel_size * kernel_size;
  const float stddev = std::sqrt(2.0f / fan_in);
  for (std::int64_t i = 0; i < p.weight.size(); ++i) p.weight[i] = rng.normal(0.0f, stddev);
  p.bias = Tensor({out_channels});
  return p;
}

UNet::UNet(const UNetConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const int k = config_.kernel_size;
  int width = config_.base_channels;
  enc_.reserve(static_cast<std::size_t>(config_.depth));
  for (int level = 0; level < config_.depth; ++level) {
    const int in = (level == 0) ? config_.base_channels : width / 2;
    enc_.push_back({make_conv(width, in, k, rng), make_conv(width, width, k, rng)});
    width *= 2;
  }
  bottleneck_ = {make_conv(width, width / 2, k, rng), make_conv(width, width, k, rng)};
  dec_.resize(static_cast<std::size_t>(config_.depth));
  for (int level = config_.depth - 1; level >= 0; --level) {
    const int skip = config_.base_channels << level;
    const int deep = skip * 2;
    dec_[static_cast<std::size_t>(level)] = {make_conv(skip, deep + skip, k, rng),
                                             make_conv(skip, skip, k, rng)};
  }
  head_ = make_conv(config_.out_channels, config_.base_channels, 1, rng);
}

ValueId UNet::forward(Tape& tape, TapeBinding& binding, ValueId input) const {
  const Tensor& x = tape.value(input);
  if (x.rank() != 4 || x.dim(1) != config_.base_channels) {
    throw DimensionError("unet forward: expected [N," + std::to_string(config_.base_channels) +
                         ",H,W], got " + shape_str(x.shape()));
  }
  const int divisor = config_.spatial_divisor();
  if (x.dim(2) % divisor != 0 || x.dim(3) % divisor != 0) {
    throw GeometryError("unet forward: spatial dims of " + shape_str(x.shape()) +
                        " must be divisible by " + std::to_string(divisor));
  }
  const int pad = config_.kernel_size / 2;
  auto conv_relu = [&](ValueId v, const ConvParam& p) {
    return tape.relu(tape.conv2d(v, binding.bind(p.weight), binding.bind(p.bias), 1, pad));
  };

  ValueId cur = input;
  std::vector<ValueId> skips;
  skips.reserve(enc_.size());
  for (const auto& level : enc_) {
    cur = conv_relu(cur, level[0]);
    cur = conv_relu(cur, level[1]);
    skips.push_back(cur);
    cur = tape.maxpool2(cur);
  }
  cur = conv_relu(cur, bottleneck_[0]);
  cur = conv_relu(cur, bottleneck_[1]);
  for (std::size_t level = dec_.size(); level-- > 0;) {
    cur = tape.upsample_nearest2(cur);
    cur = tape.concat_channels(cur, skips[level]);
    cur = conv_relu(cur, dec_[level][0]);
    cur = conv_relu(cur, dec_[level][1]);
  }
  return tape.conv2d(cur, binding.bind(head_.weight), binding.bind(head_.bias), 1, 0);
}

}  // namespace hseg
