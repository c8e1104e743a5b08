#include "hseg/tape.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace hseg {

namespace {

// Valid output range for one kernel offset: all o with 0 <= o*stride - pad + k < limit.
struct OutRange {
  int lo, hi;  // inclusive; empty if lo > hi
};

OutRange valid_out_range(int out_size, int limit, int stride, int pad, int k) {
  int lo = 0;
  if (pad - k > 0) lo = (pad - k + stride - 1) / stride;
  int hi = out_size - 1;
  const int num = limit - 1 + pad - k;
  if (num < 0) return {1, 0};
  hi = std::min(hi, num / stride);
  return {lo, hi};
}

void check_4d(const Tensor& t, const char* op) {
  if (t.rank() != 4) {
    throw DimensionError(std::string(op) + ": expected rank-4 tensor, got " + shape_str(t.shape()));
  }
}

}  // namespace

Tape::Node& Tape::node(ValueId id) {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    throw UsageError("invalid value id " + std::to_string(id));
  }
  return nodes_[static_cast<std::size_t>(id)];
}

const Tape::Node& Tape::node(ValueId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    throw UsageError("invalid value id " + std::to_string(id));
  }
  return nodes_[static_cast<std::size_t>(id)];
}

ValueId Tape::push(Tensor value, std::initializer_list<ValueId> parents, const char* op_name,
                   BackwardFn fn) {
  if (backward_done_) {
    throw UsageError("tape already differentiated; record on a fresh tape");
  }
  Node n;
  n.value = std::move(value);
  n.id = static_cast<ValueId>(nodes_.size());
  for (ValueId p : parents) {
    if (p >= n.id) throw UsageError("operand recorded after its consumer");
    n.parent[n.num_parents++] = p;
    if (node(p).requires_grad) n.requires_grad = true;
  }
  if (n.requires_grad && fn) n.backward_fn = std::move(fn);
#ifndef NDEBUG
  if (op_name != nullptr && !n.value.all_finite()) {
    throw NumericError(std::string("non-finite value out of ") + op_name);
  }
#endif
  (void)op_name;
  nodes_.push_back(std::move(n));
  return nodes_.back().id;
}

Tensor* Tape::grad_buffer(ValueId id) {
  Node& n = node(id);
  if (!n.requires_grad) return nullptr;
  if (n.grad.size() == 0) n.grad = Tensor(n.value.shape());
  return &n.grad;
}

ValueId Tape::leaf(Tensor value) {
  const bool rg = value.requires_grad;
  return leaf(std::move(value), rg);
}

ValueId Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.id = static_cast<ValueId>(nodes_.size());
  n.requires_grad = requires_grad;
  if (backward_done_) {
    throw UsageError("tape already differentiated; record on a fresh tape");
  }
  nodes_.push_back(std::move(n));
  return nodes_.back().id;
}

ValueId Tape::add(ValueId a, ValueId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require_same_shape(ta, tb, "add");
  Tensor out(ta.shape());
  for (std::int64_t i = 0; i < ta.size(); ++i) out[i] = ta[i] + tb[i];
  return push(std::move(out), {a, b}, "add", [a, b](Tape& t, const Node& self) {
    for (ValueId p : {a, b}) {
      if (Tensor* g = t.grad_buffer(p)) {
        for (std::int64_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
      }
    }
  });
}

ValueId Tape::sub(ValueId a, ValueId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require_same_shape(ta, tb, "sub");
  Tensor out(ta.shape());
  for (std::int64_t i = 0; i < ta.size(); ++i) out[i] = ta[i] - tb[i];
  return push(std::move(out), {a, b}, "sub", [a, b](Tape& t, const Node& self) {
    if (Tensor* g = t.grad_buffer(a)) {
      for (std::int64_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
    }
    if (Tensor* g = t.grad_buffer(b)) {
      for (std::int64_t i = 0; i < self.grad.size(); ++i) (*g)[i] -= self.grad[i];
    }
  });
}

ValueId Tape::mul(ValueId a, ValueId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require_same_shape(ta, tb, "mul");
  Tensor out(ta.shape());
  for (std::int64_t i = 0; i < ta.size(); ++i) out[i] = ta[i] * tb[i];
  return push(std::move(out), {a, b}, "mul", [a, b](Tape& t, const Node& self) {
    const Tensor& va = t.value(a);
    const Tensor& vb = t.value(b);
    if (Tensor* g = t.grad_buffer(a)) {
      for (std::int64_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] * vb[i];
    }
    if (Tensor* g = t.grad_buffer(b)) {
      for (std::int64_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] * va[i];
    }
  });
}

ValueId Tape::div(ValueId a, ValueId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require_same_shape(ta, tb, "div");
  Tensor out(ta.shape());
  for (std::int64_t i = 0; i < ta.size(); ++i) out[i] = ta[i] / tb[i];
  return push(std::move(out), {a, b}, "div", [a, b](Tape& t, const Node& self) {
    const Tensor& va = t.value(a);
    const Tensor& vb = t.value(b);
    if (Tensor* g = t.grad_buffer(a)) {
      for (std::int64_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] / vb[i];
    }
    if (Tensor* g = t.grad_buffer(b)) {
      for (std::int64_t i = 0; i < self.grad.size(); ++i) {
        (*g)[i] -= self.grad[i] * va[i] / (vb[i] * vb[i]);
      }
    }
  });
}

ValueId Tape::add_scalar(ValueId a, float c) {
  const Tensor& ta = value(a);
  Tensor out(ta.shape());
  for (std::int64_t i = 0; i < ta.size(); ++i) out[i] = ta[i] + c;
  return push(std::move(out), {a}, "add_scalar", [a](Tape& t, const Node& self) {
    if (Tensor* g = t.grad_buffer(a)) {
      for (std::int64_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
    }
  });
}

ValueId Tape::mul_scalar(ValueId a, float c) {
  const Tensor& ta = value(a);
  Tensor out(ta.shape());
  for (std::int64_t i = 0; i < ta.size(); ++i) out[i] = ta[i] * c;
  return push(std::move(out), {a}, "mul_scalar", [a, c](Tape& t, const Node& self) {
    if (Tensor* g = t.grad_buffer(a)) {
      for (std::int64_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] * c;
    }
  });
}

ValueId Tape::sum_all(ValueId a) {
  const Tensor& ta = value(a);
  double acc = 0.0;
  for (std::int64_t i = 0; i < ta.size(); ++i) acc += ta[i];
  return push(Tensor::scalar(static_cast<float>(acc)), {a}, "sum_all",
              [a](Tape& t, const Node& self) {
                if (Tensor* g = t.grad_buffer(a)) {
                  const float gv = self.grad[0];
                  for (std::int64_t i = 0; i < g->size(); ++i) (*g)[i] += gv;
                }
              });
}

ValueId Tape::clamp(ValueId a, float lo, float hi) {
  const Tensor& ta = value(a);
  Tensor out(ta.shape());
  for (std::int64_t i = 0; i < ta.size(); ++i) out[i] = std::min(hi, std::max(lo, ta[i]));
  return push(std::move(out), {a}, "clamp", [a, lo, hi](Tape& t, const Node& self) {
    const Tensor& va = t.value(a);
    if (Tensor* g = t.grad_buffer(a)) {
      for (std::int64_t i = 0; i < self.grad.size(); ++i) {
        if (va[i] > lo && va[i] < hi) (*g)[i] += self.grad[i];
      }
    }
  });
}

ValueId Tape::log(ValueId a) {
  const Tensor& ta = value(a);
  Tensor out(ta.shape());
  for (std::int64_t i = 0; i < ta.size(); ++i) out[i] = std::log(ta[i]);
  return push(std::move(out), {a}, "log", [a](Tape& t, const Node& self) {
    const Tensor& va = t.value(a);
    if (Tensor* g = t.grad_buffer(a)) {
      for (std::int64_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] / va[i];
    }
  });
}

ValueId Tape::relu(ValueId a) {
  const Tensor& ta = value(a);
  Tensor out(ta.shape());
  for (std::int64_t i = 0; i < ta.size(); ++i) out[i] = ta[i] > 0.0f ? ta[i] : 0.0f;
  return push(std::move(out), {a}, "relu", [a](Tape& t, const Node& self) {
    const Tensor& va = t.value(a);
    if (Tensor* g = t.grad_buffer(a)) {
      for (std::int64_t i = 0; i < self.grad.size(); ++i) {
        if (va[i] > 0.0f) (*g)[i] += self.grad[i];
      }
    }
  });
}

ValueId Tape::sigmoid(ValueId a) {
  const Tensor& ta = value(a);
  Tensor out(ta.shape());
  for (std::int64_t i = 0; i < ta.size(); ++i) {
    const float x = ta[i];
    if (x >= 0.0f) {
      out[i] = 1.0f / (1.0f + std::exp(-x));
    } else {
      const float e = std::exp(x);
      out[i] = e / (1.0f + e);
    }
  }
  ValueId id = push(std::move(out), {a}, "sigmoid", nullptr);
  // Backward uses the saved output, so attach the rule after the node exists.
  Node& n = node(id);
  if (n.requires_grad) {
    n.backward_fn = [a, id](Tape& t, const Node& self) {
      const Tensor& y = t.value(id);
      if (Tensor* g = t.grad_buffer(a)) {
        for (std::int64_t i = 0; i < self.grad.size(); ++i) {
          (*g)[i] += self.grad[i] * y[i] * (1.0f - y[i]);
        }
      }
    };
  }
  return id;
}

ValueId Tape::softmax_channels(ValueId a) {
  const Tensor& ta = value(a);
  check_4d(ta, "softmax_channels");
  const Shape s = ta.shape();
  const int N = s[0], L = s[1], H = s[2], W = s[3];
  const std::int64_t plane = static_cast<std::int64_t>(H) * W;
  Tensor out(s);
  for (int n = 0; n < N; ++n) {
    for (std::int64_t p = 0; p < plane; ++p) {
      const std::int64_t base = static_cast<std::int64_t>(n) * L * plane + p;
      float mx = ta[base];
      for (int l = 1; l < L; ++l) mx = std::max(mx, ta[base + l * plane]);
      double denom = 0.0;
      for (int l = 0; l < L; ++l) denom += std::exp(static_cast<double>(ta[base + l * plane] - mx));
      for (int l = 0; l < L; ++l) {
        out[base + l * plane] =
            static_cast<float>(std::exp(static_cast<double>(ta[base + l * plane] - mx)) / denom);
      }
    }
  }
  ValueId id = push(std::move(out), {a}, "softmax_channels", nullptr);
  Node& nd = node(id);
  if (nd.requires_grad) {
    nd.backward_fn = [a, id, N, L, plane](Tape& t, const Node& self) {
      const Tensor& y = t.value(id);
      Tensor* g = t.grad_buffer(a);
      if (!g) return;
      for (int n = 0; n < N; ++n) {
        for (std::int64_t p = 0; p < plane; ++p) {
          const std::int64_t base = static_cast<std::int64_t>(n) * L * plane + p;
          float dot = 0.0f;
          for (int l = 0; l < L; ++l) dot += self.grad[base + l * plane] * y[base + l * plane];
          for (int l = 0; l < L; ++l) {
            const std::int64_t k = base + l * plane;
            (*g)[k] += y[k] * (self.grad[k] - dot);
          }
        }
      }
    };
  }
  return id;
}

ValueId Tape::conv2d(ValueId input, ValueId kernel, ValueId bias, int stride, int padding) {
  const Tensor& x = value(input);
  const Tensor& k = value(kernel);
  const Tensor& b = value(bias);
  check_4d(x, "conv2d input");
  check_4d(k, "conv2d kernel");
  if (stride < 1) throw GeometryError("conv2d: stride must be >= 1");
  if (padding < 0) throw GeometryError("conv2d: padding must be >= 0");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int F = k.dim(0), KC = k.dim(1), KH = k.dim(2), KW = k.dim(3);
  if (KH % 2 == 0 || KW % 2 == 0) {
    throw GeometryError("conv2d: kernel dims must be odd, got " + shape_str(k.shape()));
  }
  if (KC != C) {
    throw DimensionError("conv2d: input " + shape_str(x.shape()) + " vs kernel " +
                         shape_str(k.shape()) + " channel mismatch");
  }
  if (b.rank() != 1 || b.dim(0) != F) {
    throw DimensionError("conv2d: bias " + shape_str(b.shape()) + " vs kernel " +
                         shape_str(k.shape()));
  }
  const int hn = H + 2 * padding - KH;
  const int wn = W + 2 * padding - KW;
  if (hn < 0 || wn < 0 || hn % stride != 0 || wn % stride != 0) {
    throw GeometryError("conv2d: output size not exact for input " + shape_str(x.shape()) +
                        ", kernel " + shape_str(k.shape()) + ", stride " + std::to_string(stride) +
                        ", padding " + std::to_string(padding));
  }
  const int OH = hn / stride + 1;
  const int OW = wn / stride + 1;

  Tensor out({N, F, OH, OW});
  const float* xd = x.data().data();
  const float* kd = k.data().data();
  const float* bd = b.data().data();
  float* od = out.data().data();
  for (int n = 0; n < N; ++n) {
    for (int f = 0; f < F; ++f) {
      float* oplane = od + idx4(out.shape(), n, f, 0, 0);
      for (std::int64_t i = 0; i < static_cast<std::int64_t>(OH) * OW; ++i) oplane[i] = bd[f];
      for (int c = 0; c < C; ++c) {
        const float* xplane = xd + idx4(x.shape(), n, c, 0, 0);
        for (int kh = 0; kh < KH; ++kh) {
          for (int kw = 0; kw < KW; ++kw) {
            const float wv = kd[((static_cast<std::int64_t>(f) * C + c) * KH + kh) * KW + kw];
            if (wv == 0.0f) continue;
            const OutRange rh = valid_out_range(OH, H, stride, padding, kh);
            const OutRange rw = valid_out_range(OW, W, stride, padding, kw);
            for (int oh = rh.lo; oh <= rh.hi; ++oh) {
              const int ih = oh * stride - padding + kh;
              float* orow = oplane + static_cast<std::int64_t>(oh) * OW;
              const float* xrow = xplane + static_cast<std::int64_t>(ih) * W;
              if (stride == 1) {
                const int shift = kw - padding;
                for (int ow = rw.lo; ow <= rw.hi; ++ow) orow[ow] += wv * xrow[ow + shift];
              } else {
                for (int ow = rw.lo; ow <= rw.hi; ++ow) {
                  orow[ow] += wv * xrow[ow * stride - padding + kw];
                }
              }
            }
          }
        }
      }
    }
  }

  return push(std::move(out), {input, kernel, bias}, "conv2d",
              [input, kernel, bias, stride, padding](Tape& t, const Node& self) {
                const Tensor& x = t.value(input);
                const Tensor& k = t.value(kernel);
                const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
                const int F = k.dim(0), KH = k.dim(2), KW = k.dim(3);
                const int OH = self.value.dim(2), OW = self.value.dim(3);
                const float* gy = self.grad.data().data();
                const float* xd = x.data().data();
                const float* kd = k.data().data();
                Tensor* gx = t.grad_buffer(input);
                Tensor* gk = t.grad_buffer(kernel);
                Tensor* gb = t.grad_buffer(bias);
                if (gb) {
                  float* gbd = gb->data().data();
                  for (int n = 0; n < N; ++n) {
                    for (int f = 0; f < F; ++f) {
                      const float* gplane = gy + idx4(self.value.shape(), n, f, 0, 0);
                      double acc = 0.0;
                      for (std::int64_t i = 0; i < static_cast<std::int64_t>(OH) * OW; ++i) {
                        acc += gplane[i];
                      }
                      gbd[f] += static_cast<float>(acc);
                    }
                  }
                }
                for (int n = 0; n < N; ++n) {
                  for (int f = 0; f < F; ++f) {
                    const float* gplane = gy + idx4(self.value.shape(), n, f, 0, 0);
                    for (int c = 0; c < C; ++c) {
                      const float* xplane = xd + idx4(x.shape(), n, c, 0, 0);
                      float* gxplane = gx ? gx->data().data() + idx4(x.shape(), n, c, 0, 0) : nullptr;
                      for (int kh = 0; kh < KH; ++kh) {
                        for (int kw = 0; kw < KW; ++kw) {
                          const std::int64_t ki =
                              ((static_cast<std::int64_t>(f) * C + c) * KH + kh) * KW + kw;
                          const float wv = kd[ki];
                          const OutRange rh = valid_out_range(OH, H, stride, padding, kh);
                          const OutRange rw = valid_out_range(OW, W, stride, padding, kw);
                          float kacc = 0.0f;
                          for (int oh = rh.lo; oh <= rh.hi; ++oh) {
                            const int ih = oh * stride - padding + kh;
                            const float* grow = gplane + static_cast<std::int64_t>(oh) * OW;
                            const float* xrow = xplane + static_cast<std::int64_t>(ih) * W;
                            float* gxrow =
                                gxplane ? gxplane + static_cast<std::int64_t>(ih) * W : nullptr;
                            if (stride == 1) {
                              const int shift = kw - padding;
                              if (gk) {
                                for (int ow = rw.lo; ow <= rw.hi; ++ow) {
                                  kacc += grow[ow] * xrow[ow + shift];
                                }
                              }
                              if (gxrow) {
                                for (int ow = rw.lo; ow <= rw.hi; ++ow) {
                                  gxrow[ow + shift] += wv * grow[ow];
                                }
                              }
                            } else {
                              for (int ow = rw.lo; ow <= rw.hi; ++ow) {
                                const int iw = ow * stride - padding + kw;
                                if (gk) kacc += grow[ow] * xrow[iw];
                                if (gxrow) gxrow[iw] += wv * grow[ow];
                              }
                            }
                          }
                          if (gk) gk->data()[static_cast<std::size_t>(ki)] += kacc;
                        }
                      }
                    }
                  }
                }
              });
}

ValueId Tape::maxpool2(ValueId a) {
  const Tensor& ta = value(a);
  check_4d(ta, "maxpool2");
  const int N = ta.dim(0), C = ta.dim(1), H = ta.dim(2), W = ta.dim(3);
  if (H % 2 != 0 || W % 2 != 0) {
    throw GeometryError("maxpool2: H and W must be even, got " + shape_str(ta.shape()));
  }
  const int OH = H / 2, OW = W / 2;
  Tensor out({N, C, OH, OW});
  std::vector<std::int32_t> argmax(static_cast<std::size_t>(out.size()));
  std::int64_t o = 0;
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      for (int oh = 0; oh < OH; ++oh) {
        for (int ow = 0; ow < OW; ++ow, ++o) {
          // First-encountered max in row-major window order.
          std::int64_t best = idx4(ta.shape(), n, c, oh * 2, ow * 2);
          float bv = ta[best];
          const std::int64_t cand[3] = {best + 1, best + W, best + W + 1};
          for (std::int64_t idx : cand) {
            if (ta[idx] > bv) {
              bv = ta[idx];
              best = idx;
            }
          }
          out[o] = bv;
          argmax[static_cast<std::size_t>(o)] = static_cast<std::int32_t>(best);
        }
      }
    }
  }
  return push(std::move(out), {a}, "maxpool2",
              [a, argmax = std::move(argmax)](Tape& t, const Node& self) {
                if (Tensor* g = t.grad_buffer(a)) {
                  for (std::int64_t i = 0; i < self.grad.size(); ++i) {
                    (*g)[argmax[static_cast<std::size_t>(i)]] += self.grad[i];
                  }
                }
              });
}

ValueId Tape::upsample_nearest2(ValueId a) {
  const Tensor& ta = value(a);
  check_4d(ta, "upsample_nearest2");
  const int N = ta.dim(0), C = ta.dim(1), H = ta.dim(2), W = ta.dim(3);
  Tensor out({N, C, H * 2, W * 2});
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      for (int h = 0; h < H; ++h) {
        const float* src = ta.data().data() + idx4(ta.shape(), n, c, h, 0);
        float* d0 = out.data().data() + idx4(out.shape(), n, c, h * 2, 0);
        float* d1 = out.data().data() + idx4(out.shape(), n, c, h * 2 + 1, 0);
        for (int w = 0; w < W; ++w) {
          d0[w * 2] = d0[w * 2 + 1] = d1[w * 2] = d1[w * 2 + 1] = src[w];
        }
      }
    }
  }
  return push(std::move(out), {a}, "upsample_nearest2", [a](Tape& t, const Node& self) {
    Tensor* g = t.grad_buffer(a);
    if (!g) return;
    const Shape& s = g->shape();
    const int N = s[0], C = s[1], H = s[2], W = s[3];
    for (int n = 0; n < N; ++n) {
      for (int c = 0; c < C; ++c) {
        for (int h = 0; h < H; ++h) {
          float* dst = g->data().data() + idx4(s, n, c, h, 0);
          const float* g0 = self.grad.data().data() + idx4(self.grad.shape(), n, c, h * 2, 0);
          const float* g1 = self.grad.data().data() + idx4(self.grad.shape(), n, c, h * 2 + 1, 0);
          for (int w = 0; w < W; ++w) {
            dst[w] += g0[w * 2] + g0[w * 2 + 1] + g1[w * 2] + g1[w * 2 + 1];
          }
        }
      }
    }
  });
}

ValueId Tape::concat_channels(ValueId a, ValueId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  check_4d(ta, "concat_channels");
  check_4d(tb, "concat_channels");
  if (ta.dim(0) != tb.dim(0) || ta.dim(2) != tb.dim(2) || ta.dim(3) != tb.dim(3)) {
    throw DimensionError("concat_channels: " + shape_str(ta.shape()) + " vs " +
                         shape_str(tb.shape()));
  }
  const int N = ta.dim(0), Ca = ta.dim(1), Cb = tb.dim(1), H = ta.dim(2), W = ta.dim(3);
  const std::int64_t plane = static_cast<std::int64_t>(H) * W;
  Tensor out({N, Ca + Cb, H, W});
  for (int n = 0; n < N; ++n) {
    std::copy_n(ta.data().data() + static_cast<std::int64_t>(n) * Ca * plane, Ca * plane,
                out.data().data() + static_cast<std::int64_t>(n) * (Ca + Cb) * plane);
    std::copy_n(tb.data().data() + static_cast<std::int64_t>(n) * Cb * plane, Cb * plane,
                out.data().data() + (static_cast<std::int64_t>(n) * (Ca + Cb) + Ca) * plane);
  }
  return push(std::move(out), {a, b}, "concat_channels",
              [a, b, Ca, Cb, plane](Tape& t, const Node& self) {
                const int N = self.value.dim(0);
                if (Tensor* g = t.grad_buffer(a)) {
                  for (int n = 0; n < N; ++n) {
                    const float* src =
                        self.grad.data().data() + static_cast<std::int64_t>(n) * (Ca + Cb) * plane;
                    float* dst = g->data().data() + static_cast<std::int64_t>(n) * Ca * plane;
                    for (std::int64_t i = 0; i < Ca * plane; ++i) dst[i] += src[i];
                  }
                }
                if (Tensor* g = t.grad_buffer(b)) {
                  for (int n = 0; n < N; ++n) {
                    const float* src = self.grad.data().data() +
                                       (static_cast<std::int64_t>(n) * (Ca + Cb) + Ca) * plane;
                    float* dst = g->data().data() + static_cast<std::int64_t>(n) * Cb * plane;
                    for (std::int64_t i = 0; i < Cb * plane; ++i) dst[i] += src[i];
                  }
                }
              });
}

ValueId Tape::select_channel(ValueId a, int channel) {
  const Tensor& ta = value(a);
  check_4d(ta, "select_channel");
  const int N = ta.dim(0), C = ta.dim(1), H = ta.dim(2), W = ta.dim(3);
  if (channel < 0 || channel >= C) {
    throw UsageError("select_channel: channel " + std::to_string(channel) + " out of range for " +
                     shape_str(ta.shape()));
  }
  const std::int64_t plane = static_cast<std::int64_t>(H) * W;
  Tensor out({N, 1, H, W});
  for (int n = 0; n < N; ++n) {
    std::copy_n(ta.data().data() + (static_cast<std::int64_t>(n) * C + channel) * plane, plane,
                out.data().data() + static_cast<std::int64_t>(n) * plane);
  }
  return push(std::move(out), {a}, "select_channel",
              [a, channel, C, plane](Tape& t, const Node& self) {
                if (Tensor* g = t.grad_buffer(a)) {
                  const int N = self.value.dim(0);
                  for (int n = 0; n < N; ++n) {
                    const float* src = self.grad.data().data() + static_cast<std::int64_t>(n) * plane;
                    float* dst =
                        g->data().data() + (static_cast<std::int64_t>(n) * C + channel) * plane;
                    for (std::int64_t i = 0; i < plane; ++i) dst[i] += src[i];
                  }
                }
              });
}

void Tape::backward(ValueId loss) {
  if (backward_done_) throw UsageError("backward already run on this tape");
  Node& ln = node(loss);
  if (ln.value.size() != 1) {
    throw UsageError("backward: loss must be scalar, got " + shape_str(ln.value.shape()));
  }
  backward_done_ = true;
  if (ln.requires_grad) {
    ln.grad = Tensor::scalar(1.0f);
    for (std::int64_t i = static_cast<std::int64_t>(nodes_.size()) - 1; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.requires_grad && n.grad.size() != 0 && n.backward_fn) n.backward_fn(*this, n);
    }
  }
  // Leaves the loss does not reach still report zero gradients.
  for (Node& n : nodes_) {
    if (n.requires_grad && n.grad.size() == 0) n.grad = Tensor(n.value.shape());
  }
}

const Tensor& Tape::grad(ValueId id) const {
  if (!backward_done_) throw UsageError("grad() before backward()");
  const Node& n = node(id);
  if (!n.requires_grad) throw UsageError("grad() on a value that does not require grad");
  return n.grad;
}

}  // namespace hseg
