#pragma once

// Double-precision reference implementations, independent of the tape path.
// These back the finite-difference oracles: forward passes evaluated here
// accumulate in f64, so central differences stay clean at h = 1e-3.

#include <map>
#include <string>
#include <vector>

#include "hseg/hunet.hpp"
#include "hseg/losses.hpp"
#include "hseg/tensor.hpp"

namespace refops {

struct DTensor {
  hseg::Shape shape;
  std::vector<double> data;

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  double& at(std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
  double at(std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }
};

DTensor from_tensor(const hseg::Tensor& t);

DTensor conv2d(const DTensor& x, const DTensor& k, const DTensor& b, int stride, int pad);
DTensor maxpool2(const DTensor& x);
DTensor upsample_nearest2(const DTensor& x);
DTensor concat_channels(const DTensor& a, const DTensor& b);
DTensor select_channel(const DTensor& x, int channel);
DTensor relu(const DTensor& x);
DTensor sigmoid(const DTensor& x);
DTensor softmax_channels(const DTensor& x);
DTensor add(const DTensor& a, const DTensor& b);
DTensor sub(const DTensor& a, const DTensor& b);
DTensor mul(const DTensor& a, const DTensor& b);
DTensor divide(const DTensor& a, const DTensor& b);
DTensor clamp(const DTensor& x, double lo, double hi);
DTensor log(const DTensor& x);
double sum(const DTensor& x);
double weighted_sum(const DTensor& x, const DTensor& w);

// Losses, mirroring hseg/losses.hpp in f64.
double dice_loss_label(const DTensor& pred, const DTensor& target, int label, double eps);
double weighted_dice_loss(const DTensor& pred, const DTensor& target,
                          const hseg::LossConfig& cfg);
double weighted_ce_loss(const DTensor& pred, const DTensor& target, const hseg::LossConfig& cfg);
double binary_ce_loss(const DTensor& pred, const DTensor& target, double clip);
double cnet_total_loss(const DTensor& pred, const DTensor& target, const hseg::LossConfig& cfg);

// Reference mirror of the network forward passes, driven by the parameter
// map taken from a live model.
using ParamMap = std::map<std::string, DTensor>;
ParamMap param_map(const hseg::SegModel& model);

DTensor unet_forward(const hseg::UNetConfig& cfg, const ParamMap& params,
                     const std::string& prefix, const DTensor& input);

struct HUNetOut {
  DTensor lung_soft;
  DTensor class_soft;
};
HUNetOut hunet_forward(const hseg::UNetConfig& lcfg, const hseg::UNetConfig& ccfg,
                       const ParamMap& params, const DTensor& image);

}  // namespace refops
