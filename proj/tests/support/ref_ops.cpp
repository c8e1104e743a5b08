#include "ref_ops.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

namespace refops {

using hseg::Shape;

namespace {

std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

DTensor zeros(Shape s) {
  DTensor t;
  t.shape = std::move(s);
  t.data.assign(static_cast<std::size_t>(numel(t.shape)), 0.0);
  return t;
}

std::int64_t idx4(const Shape& s, int n, int c, int h, int w) {
  return ((static_cast<std::int64_t>(n) * s[1] + c) * s[2] + h) * s[3] + w;
}

}  // namespace

DTensor from_tensor(const hseg::Tensor& t) {
  DTensor out;
  out.shape = t.shape();
  out.data.assign(t.data().begin(), t.data().end());
  return out;
}

DTensor conv2d(const DTensor& x, const DTensor& k, const DTensor& b, int stride, int pad) {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int F = k.dim(0), KH = k.dim(2), KW = k.dim(3);
  assert(k.dim(1) == C);
  const int OH = (H + 2 * pad - KH) / stride + 1;
  const int OW = (W + 2 * pad - KW) / stride + 1;
  DTensor out = zeros({N, F, OH, OW});
  for (int n = 0; n < N; ++n) {
    for (int f = 0; f < F; ++f) {
      for (int oh = 0; oh < OH; ++oh) {
        for (int ow = 0; ow < OW; ++ow) {
          double acc = b.at(f);
          for (int c = 0; c < C; ++c) {
            for (int kh = 0; kh < KH; ++kh) {
              for (int kw = 0; kw < KW; ++kw) {
                const int ih = oh * stride - pad + kh;
                const int iw = ow * stride - pad + kw;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;  // zero padding
                acc += k.at(((static_cast<std::int64_t>(f) * C + c) * KH + kh) * KW + kw) *
                       x.at(idx4(x.shape, n, c, ih, iw));
              }
            }
          }
          out.at(idx4(out.shape, n, f, oh, ow)) = acc;
        }
      }
    }
  }
  return out;
}

DTensor maxpool2(const DTensor& x) {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  DTensor out = zeros({N, C, H / 2, W / 2});
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      for (int oh = 0; oh < H / 2; ++oh) {
        for (int ow = 0; ow < W / 2; ++ow) {
          double best = x.at(idx4(x.shape, n, c, oh * 2, ow * 2));
          best = std::max(best, x.at(idx4(x.shape, n, c, oh * 2, ow * 2 + 1)));
          best = std::max(best, x.at(idx4(x.shape, n, c, oh * 2 + 1, ow * 2)));
          best = std::max(best, x.at(idx4(x.shape, n, c, oh * 2 + 1, ow * 2 + 1)));
          out.at(idx4(out.shape, n, c, oh, ow)) = best;
        }
      }
    }
  }
  return out;
}

DTensor upsample_nearest2(const DTensor& x) {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  DTensor out = zeros({N, C, H * 2, W * 2});
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      for (int h = 0; h < 2 * H; ++h) {
        for (int w = 0; w < 2 * W; ++w) {
          out.at(idx4(out.shape, n, c, h, w)) = x.at(idx4(x.shape, n, c, h / 2, w / 2));
        }
      }
    }
  }
  return out;
}

DTensor concat_channels(const DTensor& a, const DTensor& b) {
  const int N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), H = a.dim(2), W = a.dim(3);
  DTensor out = zeros({N, Ca + Cb, H, W});
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < Ca + Cb; ++c) {
      for (int h = 0; h < H; ++h) {
        for (int w = 0; w < W; ++w) {
          out.at(idx4(out.shape, n, c, h, w)) =
              c < Ca ? a.at(idx4(a.shape, n, c, h, w)) : b.at(idx4(b.shape, n, c - Ca, h, w));
        }
      }
    }
  }
  return out;
}

DTensor select_channel(const DTensor& x, int channel) {
  const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
  DTensor out = zeros({N, 1, H, W});
  for (int n = 0; n < N; ++n) {
    for (int h = 0; h < H; ++h) {
      for (int w = 0; w < W; ++w) {
        out.at(idx4(out.shape, n, 0, h, w)) = x.at(idx4(x.shape, n, channel, h, w));
      }
    }
  }
  return out;
}

DTensor relu(const DTensor& x) {
  DTensor out = x;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

DTensor sigmoid(const DTensor& x) {
  DTensor out = x;
  for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  return out;
}

DTensor softmax_channels(const DTensor& x) {
  const int N = x.dim(0), L = x.dim(1);
  const std::int64_t plane = static_cast<std::int64_t>(x.dim(2)) * x.dim(3);
  DTensor out = x;
  for (int n = 0; n < N; ++n) {
    for (std::int64_t p = 0; p < plane; ++p) {
      const std::int64_t base = static_cast<std::int64_t>(n) * L * plane + p;
      double mx = x.at(base);
      for (int l = 1; l < L; ++l) mx = std::max(mx, x.at(base + l * plane));
      double denom = 0.0;
      for (int l = 0; l < L; ++l) denom += std::exp(x.at(base + l * plane) - mx);
      for (int l = 0; l < L; ++l) {
        out.at(base + l * plane) = std::exp(x.at(base + l * plane) - mx) / denom;
      }
    }
  }
  return out;
}

DTensor add(const DTensor& a, const DTensor& b) {
  DTensor out = a;
  for (std::int64_t i = 0; i < out.size(); ++i) out.at(i) += b.at(i);
  return out;
}

DTensor sub(const DTensor& a, const DTensor& b) {
  DTensor out = a;
  for (std::int64_t i = 0; i < out.size(); ++i) out.at(i) -= b.at(i);
  return out;
}

DTensor mul(const DTensor& a, const DTensor& b) {
  DTensor out = a;
  for (std::int64_t i = 0; i < out.size(); ++i) out.at(i) *= b.at(i);
  return out;
}

DTensor divide(const DTensor& a, const DTensor& b) {
  DTensor out = a;
  for (std::int64_t i = 0; i < out.size(); ++i) out.at(i) /= b.at(i);
  return out;
}

DTensor clamp(const DTensor& x, double lo, double hi) {
  DTensor out = x;
  for (double& v : out.data) v = std::min(hi, std::max(lo, v));
  return out;
}

DTensor log(const DTensor& x) {
  DTensor out = x;
  for (double& v : out.data) v = std::log(v);
  return out;
}

double sum(const DTensor& x) {
  double acc = 0.0;
  for (double v : x.data) acc += v;
  return acc;
}

double weighted_sum(const DTensor& x, const DTensor& w) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < x.size(); ++i) acc += x.at(i) * w.at(i);
  return acc;
}

double dice_loss_label(const DTensor& pred, const DTensor& target, int label, double eps) {
  const DTensor p = select_channel(pred, label);
  const DTensor y = select_channel(target, label);
  double overlap = 0.0, denom = 0.0;
  for (std::int64_t i = 0; i < p.size(); ++i) {
    overlap += p.at(i) * y.at(i);
    denom += p.at(i) + y.at(i);
  }
  return 1.0 - 2.0 * overlap / (denom + eps);
}

double weighted_dice_loss(const DTensor& pred, const DTensor& target,
                          const hseg::LossConfig& cfg) {
  double total = 0.0;
  for (int l = 0; l < cfg.num_labels; ++l) {
    total += static_cast<double>(cfg.class_weights[static_cast<std::size_t>(l)]) *
             dice_loss_label(pred, target, l, cfg.epsilon);
  }
  return total;
}

double weighted_ce_loss(const DTensor& pred, const DTensor& target, const hseg::LossConfig& cfg) {
  const int L = pred.dim(1);
  const std::int64_t plane = static_cast<std::int64_t>(pred.dim(2)) * pred.dim(3);
  double total = 0.0;
  for (int n = 0; n < pred.dim(0); ++n) {
    for (std::int64_t p = 0; p < plane; ++p) {
      for (int l = 0; l < L; ++l) {
        const std::int64_t i = (static_cast<std::int64_t>(n) * L + l) * plane + p;
        const double clipped = std::min(1.0 - static_cast<double>(cfg.log_clip),
                                        std::max(static_cast<double>(cfg.log_clip), pred.at(i)));
        total -= static_cast<double>(cfg.class_weights[static_cast<std::size_t>(l)]) *
                 target.at(i) * std::log(clipped);
      }
    }
  }
  return total;
}

double binary_ce_loss(const DTensor& pred, const DTensor& target, double clip) {
  double total = 0.0;
  for (std::int64_t i = 0; i < pred.size(); ++i) {
    const double p = std::min(1.0 - clip, std::max(clip, pred.at(i)));
    total -= target.at(i) * std::log(p) + (1.0 - target.at(i)) * std::log(1.0 - p);
  }
  return total;
}

double cnet_total_loss(const DTensor& pred, const DTensor& target, const hseg::LossConfig& cfg) {
  const double lambda = cfg.lambda;
  return lambda * weighted_ce_loss(pred, target, cfg) +
         (1.0 - lambda) * weighted_dice_loss(pred, target, cfg);
}

ParamMap param_map(const hseg::SegModel& model) {
  ParamMap out;
  for (const auto& [name, t] : model.named_params()) out.emplace(name, from_tensor(*t));
  return out;
}

namespace {

const DTensor& get(const ParamMap& params, const std::string& name) {
  auto it = params.find(name);
  assert(it != params.end());
  return it->second;
}

DTensor conv_relu(const ParamMap& params, const std::string& prefix, const DTensor& x, int pad) {
  return relu(conv2d(x, get(params, prefix + ".weight"), get(params, prefix + ".bias"), 1, pad));
}

}  // namespace

DTensor unet_forward(const hseg::UNetConfig& cfg, const ParamMap& params,
                     const std::string& prefix, const DTensor& input) {
  const int pad = cfg.kernel_size / 2;
  DTensor cur = input;
  std::vector<DTensor> skips;
  for (int level = 0; level < cfg.depth; ++level) {
    const std::string lvl = prefix + ".enc" + std::to_string(level);
    cur = conv_relu(params, lvl + ".conv_a", cur, pad);
    cur = conv_relu(params, lvl + ".conv_b", cur, pad);
    skips.push_back(cur);
    cur = maxpool2(cur);
  }
  cur = conv_relu(params, prefix + ".bottleneck.conv_a", cur, pad);
  cur = conv_relu(params, prefix + ".bottleneck.conv_b", cur, pad);
  for (int level = cfg.depth - 1; level >= 0; --level) {
    const std::string lvl = prefix + ".dec" + std::to_string(level);
    cur = upsample_nearest2(cur);
    cur = concat_channels(cur, skips[static_cast<std::size_t>(level)]);
    cur = conv_relu(params, lvl + ".conv_a", cur, pad);
    cur = conv_relu(params, lvl + ".conv_b", cur, pad);
  }
  return conv2d(cur, get(params, prefix + ".head.weight"), get(params, prefix + ".head.bias"), 1,
                0);
}

HUNetOut hunet_forward(const hseg::UNetConfig& lcfg, const hseg::UNetConfig& ccfg,
                       const ParamMap& params, const DTensor& image) {
  DTensor l_in =
      conv2d(image, get(params, "adapter_l.weight"), get(params, "adapter_l.bias"), 1, 0);
  DTensor lung = sigmoid(unet_forward(lcfg, params, "lnet", l_in));
  DTensor c_raw = concat_channels(image, lung);
  DTensor c_in =
      conv2d(c_raw, get(params, "adapter_c.weight"), get(params, "adapter_c.bias"), 1, 0);
  DTensor cls = softmax_channels(unet_forward(ccfg, params, "cnet", c_in));
  return {std::move(lung), std::move(cls)};
}

}  // namespace refops
