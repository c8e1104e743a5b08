#include "hseg/ensemble.hpp"

#include <cmath>
#include <thread>

#include "hseg/errors.hpp"

namespace hseg {

void EnsembleConfig::validate() const {
  if (k < 1) throw ConfigError("ensemble k must be >= 1, got " + std::to_string(k));
  lnet.validate();
  cnet.validate();
}

SoftSegmentation::SoftSegmentation(Tensor probabilities, bool validate)
    : probs_(std::move(probabilities)) {
  if (probs_.rank() != 3) {
    throw DimensionError("soft segmentation must be [L,H,W], got " + shape_str(probs_.shape()));
  }
  if (validate) {
    const int L = probs_.dim(0);
    const std::int64_t plane = static_cast<std::int64_t>(probs_.dim(1)) * probs_.dim(2);
    for (std::int64_t p = 0; p < plane; ++p) {
      float sum = 0.0f;
      for (int l = 0; l < L; ++l) {
        const float v = probs_[static_cast<std::int64_t>(l) * plane + p];
        if (v < 0.0f || v > 1.0f) {
          throw FormatError("soft segmentation entry " + std::to_string(v) + " outside [0,1]");
        }
        sum += v;
      }
      if (std::fabs(sum - 1.0f) > 1e-5f) {
        throw FormatError("soft segmentation channel sum " + std::to_string(sum) +
                          " deviates from 1 at pixel " + std::to_string(p));
      }
    }
  }
}

std::vector<EnsembleMember> train_ensemble(std::span<const TrainingSample> data,
                                           const EnsembleConfig& config, int jobs) {
  config.validate();
  if (data.empty()) throw UsageError("train_ensemble: empty dataset");
  if (jobs <= 0) jobs = config.k;

  std::vector<EnsembleMember> members(static_cast<std::size_t>(config.k));
  std::vector<std::exception_ptr> failures(static_cast<std::size_t>(config.k));

  auto run_member = [&](int m) {
    try {
      const std::uint64_t seed = config.base_seed + static_cast<std::uint64_t>(m);
      TrainConfig tc = config.train;
      tc.seed = seed;
      members[static_cast<std::size_t>(m)].model = build_hunet(config.lnet, config.cnet, seed);
      members[static_cast<std::size_t>(m)].train_result =
          train_model(data, members[static_cast<std::size_t>(m)].model, tc);
    } catch (...) {
      failures[static_cast<std::size_t>(m)] = std::current_exception();
    }
  };

  for (int start = 0; start < config.k; start += jobs) {
    const int end = std::min(config.k, start + jobs);
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(end - start));
    for (int m = start; m < end; ++m) pool.emplace_back(run_member, m);
    for (std::thread& t : pool) t.join();
  }
  for (int m = 0; m < config.k; ++m) {
    if (failures[static_cast<std::size_t>(m)]) {
      try {
        std::rethrow_exception(failures[static_cast<std::size_t>(m)]);
      } catch (const Error& e) {
        throw TrainingError("ensemble member " + std::to_string(m) + ": " + e.what(), -1);
      }
    }
  }
  return members;
}

EnsemblePrediction ensemble_predict(std::span<const SegModel* const> models, const Tensor& image) {
  if (models.empty()) throw UsageError("ensemble_predict: no models");
  Tensor class_sum;
  Tensor lung_sum;
  for (std::size_t m = 0; m < models.size(); ++m) {
    Inference inf = infer(*models[m], image);
    if (m == 0) {
      class_sum = inf.class_soft;
      lung_sum = inf.lung_soft ? *inf.lung_soft
                               : Tensor({inf.class_soft.dim(1), inf.class_soft.dim(2)});
    } else {
      if (!same_shape(class_sum.shape(), inf.class_soft.shape())) {
        throw EnsembleError("member " + std::to_string(m) + " output " +
                            shape_str(inf.class_soft.shape()) + " differs from " +
                            shape_str(class_sum.shape()));
      }
      for (std::int64_t i = 0; i < class_sum.size(); ++i) class_sum[i] += inf.class_soft[i];
      if (inf.lung_soft) {
        for (std::int64_t i = 0; i < lung_sum.size(); ++i) lung_sum[i] += (*inf.lung_soft)[i];
      }
    }
  }
  const float inv = 1.0f / static_cast<float>(models.size());
  for (std::int64_t i = 0; i < class_sum.size(); ++i) class_sum[i] *= inv;
  for (std::int64_t i = 0; i < lung_sum.size(); ++i) lung_sum[i] *= inv;
  return {SoftSegmentation(std::move(class_sum)), std::move(lung_sum)};
}

LabelMap hard_labels(const SoftSegmentation& soft) {
  const Tensor& p = soft.probs();
  const int L = p.dim(0), H = p.dim(1), W = p.dim(2);
  const std::int64_t plane = static_cast<std::int64_t>(H) * W;
  LabelMap out(H, W);
  for (std::int64_t i = 0; i < plane; ++i) {
    int best = 0;
    float bv = p[i];
    for (int l = 1; l < L; ++l) {
      const float v = p[static_cast<std::int64_t>(l) * plane + i];
      if (v > bv) {
        bv = v;
        best = l;
      }
    }
    out.values()[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(best);
  }
  return out;
}

Tensor uncertainty_map(const SoftSegmentation& soft) {
  const Tensor& p = soft.probs();
  const int L = p.dim(0), H = p.dim(1), W = p.dim(2);
  const std::int64_t plane = static_cast<std::int64_t>(H) * W;
  Tensor out({H, W});
  for (std::int64_t i = 0; i < plane; ++i) {
    double h = 0.0;
    for (int l = 0; l < L; ++l) {
      const double v = p[static_cast<std::int64_t>(l) * plane + i];
      if (v > 0.0) h -= v * std::log(v);
    }
    out[i] = static_cast<float>(h);
  }
  return out;
}

double slice_uncertainty(const SoftSegmentation& soft, const LabelMap& labels) {
  if (labels.height() != soft.height() || labels.width() != soft.width()) {
    throw DimensionError("slice_uncertainty: label map does not match soft map");
  }
  Tensor entropy = uncertainty_map(soft);
  double sum = 0.0;
  std::int64_t count = 0;
  auto vals = labels.values();
  for (std::int64_t i = 0; i < entropy.size(); ++i) {
    const std::uint8_t v = vals[static_cast<std::size_t>(i)];
    if (v == kGgo || v == kCon) {
      sum += entropy[i];
      ++count;
    }
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

}  // namespace hseg
