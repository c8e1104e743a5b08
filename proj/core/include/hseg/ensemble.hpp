#pragma once

#include <vector>

#include "hseg/training.hpp"

namespace hseg {

/// Settings for a K-member ensemble; member m trains with seed base_seed + m.
struct EnsembleConfig {
  int k = 2;
  std::uint64_t base_seed = 1;
  TrainConfig train;
  UNetConfig lnet;
  UNetConfig cnet;

  void validate() const;
};

/// Per-pixel class distribution [L,H,W]; houses the averaged soft prediction.
class SoftSegmentation {
 public:
  SoftSegmentation() = default;
  /// `validate` additionally checks channel sums against 1 (tolerance 1e-5)
  /// and entries in [0,1].
  explicit SoftSegmentation(Tensor probabilities, bool validate = false);

  const Tensor& probs() const { return probs_; }
  int num_labels() const { return probs_.dim(0); }
  int height() const { return probs_.dim(1); }
  int width() const { return probs_.dim(2); }

 private:
  Tensor probs_;
};

struct EnsembleMember {
  HUNetCompound model;
  TrainResult train_result;
};

/// Trains K independent compounds that differ only in seed. `jobs` bounds the
/// number of concurrent member trainings; results are identical for any jobs
/// value because members share no state.
std::vector<EnsembleMember> train_ensemble(std::span<const TrainingSample> data,
                                           const EnsembleConfig& config, int jobs = 0);

struct EnsemblePrediction {
  SoftSegmentation class_soft;  // mean over members
  Tensor lung_soft;             // [H,W], mean over members
};

/// Arithmetic mean of member soft predictions, taken before any argmax.
EnsemblePrediction ensemble_predict(std::span<const SegModel* const> models, const Tensor& image);

/// Per-pixel argmax; ties break to the lowest class index.
LabelMap hard_labels(const SoftSegmentation& soft);

/// Per-pixel Shannon entropy in nats, with 0*ln(0) := 0. Shape [H,W].
Tensor uncertainty_map(const SoftSegmentation& soft);

/// Mean entropy over pixels whose hard label is GGO or consolidation;
/// 0 when no such pixel exists.
double slice_uncertainty(const SoftSegmentation& soft, const LabelMap& labels);

}  // namespace hseg
