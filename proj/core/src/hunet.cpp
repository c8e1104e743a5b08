#include "hseg/hunet.hpp"

#include "hseg/errors.hpp"
#include "hseg/label_map.hpp"

namespace hseg {

std::int64_t SegModel::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : named_params()) n += t->size();
  return n;
}

HUNetCompound::HUNetCompound(const UNetConfig& lnet_config, const UNetConfig& cnet_config,
                             std::uint64_t seed) {
  lnet_config.validate();
  cnet_config.validate();
  if (lnet_config.out_channels != 1) {
    throw ConfigError("L-Net must have out_channels 1, got " +
                      std::to_string(lnet_config.out_channels));
  }
  if (cnet_config.out_channels != kNumClasses) {
    throw ConfigError("C-Net must have out_channels " + std::to_string(kNumClasses) + ", got " +
                      std::to_string(cnet_config.out_channels));
  }
  if (cnet_config.in_channels != lnet_config.in_channels + lnet_config.out_channels) {
    throw ConfigError("C-Net in_channels must equal image channels + L-Net output channels (" +
                      std::to_string(lnet_config.in_channels + lnet_config.out_channels) +
                      "), got " + std::to_string(cnet_config.in_channels));
  }
  Rng rng(seed);
  adapter_l_ = make_conv(lnet_config.base_channels, lnet_config.in_channels, 1, rng);
  lnet_ = UNet(lnet_config, rng);
  adapter_c_ = make_conv(cnet_config.base_channels, cnet_config.in_channels, 1, rng);
  cnet_ = UNet(cnet_config, rng);
}

SegModel::ForwardOut HUNetCompound::forward(Tape& tape, TapeBinding& binding,
                                            ValueId image) const {
  const Tensor& img = tape.value(image);
  if (img.rank() != 4 || img.dim(1) != lnet_.config().in_channels) {
    throw DimensionError("hunet forward: expected [N," +
                         std::to_string(lnet_.config().in_channels) + ",H,W], got " +
                         shape_str(img.shape()));
  }
  const int divisor = spatial_divisor();
  if (img.dim(2) % divisor != 0 || img.dim(3) % divisor != 0) {
    throw GeometryError("hunet forward: spatial dims of " + shape_str(img.shape()) +
                        " must be divisible by " + std::to_string(divisor));
  }
  ValueId l_in =
      tape.conv2d(image, binding.bind(adapter_l_.weight), binding.bind(adapter_l_.bias), 1, 0);
  ValueId lung_soft = tape.sigmoid(lnet_.forward(tape, binding, l_in));

  ValueId c_raw = tape.concat_channels(image, lung_soft);
  ValueId c_in =
      tape.conv2d(c_raw, binding.bind(adapter_c_.weight), binding.bind(adapter_c_.bias), 1, 0);
  ValueId class_soft = tape.softmax_channels(cnet_.forward(tape, binding, c_in));
  return {class_soft, lung_soft};
}

std::vector<ParamRef> HUNetCompound::parameters() {
  std::vector<ParamRef> out;
  auto collect = [&](const std::string& name, Tensor& t) { out.push_back({name, &t}); };
  visit_impl(*this, collect);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> HUNetCompound::named_params() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  auto collect = [&](const std::string& name, const Tensor& t) { out.emplace_back(name, &t); };
  visit_impl(*this, collect);
  return out;
}

int HUNetCompound::spatial_divisor() const {
  return std::max(lnet_.config().spatial_divisor(), cnet_.config().spatial_divisor());
}

void HUNetCompound::set_param(const std::string& name, Tensor value) {
  bool done = false;
  auto assign = [&](const std::string& n, Tensor& t) {
    if (n == name) {
      require_same_shape(t, value, "set_param");
      t = std::move(value);
      done = true;
    }
  };
  visit_impl(*this, assign);
  if (!done) throw UsageError("unknown parameter: " + name);
}

HUNetCompound build_hunet(const UNetConfig& lnet_config, const UNetConfig& cnet_config,
                          std::uint64_t seed) {
  return HUNetCompound(lnet_config, cnet_config, seed);
}

FlatCNet::FlatCNet(const UNetConfig& cnet_config, std::uint64_t seed) {
  cnet_config.validate();
  if (cnet_config.out_channels != kNumClasses) {
    throw ConfigError("C-Net must have out_channels " + std::to_string(kNumClasses));
  }
  Rng rng(seed);
  adapter_ = make_conv(cnet_config.base_channels, cnet_config.in_channels, 1, rng);
  cnet_ = UNet(cnet_config, rng);
}

SegModel::ForwardOut FlatCNet::forward(Tape& tape, TapeBinding& binding, ValueId image) const {
  const Tensor& img = tape.value(image);
  if (img.rank() != 4 || img.dim(1) != cnet_.config().in_channels) {
    throw DimensionError("flat forward: expected [N," +
                         std::to_string(cnet_.config().in_channels) + ",H,W], got " +
                         shape_str(img.shape()));
  }
  ValueId c_in =
      tape.conv2d(image, binding.bind(adapter_.weight), binding.bind(adapter_.bias), 1, 0);
  ValueId class_soft = tape.softmax_channels(cnet_.forward(tape, binding, c_in));
  return {class_soft, std::nullopt};
}

std::vector<ParamRef> FlatCNet::parameters() {
  std::vector<ParamRef> out;
  auto collect = [&](const std::string& name, Tensor& t) { out.push_back({name, &t}); };
  visit_impl(*this, collect);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> FlatCNet::named_params() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  auto collect = [&](const std::string& name, const Tensor& t) { out.emplace_back(name, &t); };
  visit_impl(*this, collect);
  return out;
}

void FlatCNet::set_param(const std::string& name, Tensor value) {
  bool done = false;
  auto assign = [&](const std::string& n, Tensor& t) {
    if (n == name) {
      require_same_shape(t, value, "set_param");
      t = std::move(value);
      done = true;
    }
  };
  visit_impl(*this, assign);
  if (!done) throw UsageError("unknown parameter: " + name);
}

Inference infer(const SegModel& model, const Tensor& image) {
  Tensor img = image;
  if (img.rank() == 2) {
    img = Tensor({1, 1, image.dim(0), image.dim(1)},
                 std::vector<float>(image.data().begin(), image.data().end()));
  } else if (img.rank() == 3 && img.dim(0) == 1) {
    img = Tensor({1, 1, image.dim(1), image.dim(2)},
                 std::vector<float>(image.data().begin(), image.data().end()));
  } else if (img.rank() != 4) {
    throw DimensionError("infer: expected [H,W] or [1,H,W] image, got " + shape_str(img.shape()));
  }
  if (img.dim(0) != 1) throw UsageError("infer: single-image batches only");

  Tape tape;
  TapeBinding binding(tape, /*trainable=*/false);
  ValueId input = tape.leaf(img, false);
  auto out = model.forward(tape, binding, input);

  const Tensor& soft = tape.value(out.class_soft);
  const int H = soft.dim(2), W = soft.dim(3);
  Inference result;
  result.class_soft = Tensor({kNumClasses, H, W},
                             std::vector<float>(soft.data().begin(), soft.data().end()));
  if (out.lung_soft) {
    const Tensor& lung = tape.value(*out.lung_soft);
    result.lung_soft =
        Tensor({H, W}, std::vector<float>(lung.data().begin(), lung.data().end()));
  }
  return result;
}

}  // namespace hseg
