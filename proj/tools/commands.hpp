#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include "hseg/errors.hpp"

namespace hseg::cli {

struct CommonOpts {
  std::string config_path;              // optional key=value file
  std::optional<std::uint64_t> seed;    // overrides the config seed
};

struct SynthOpts : CommonOpts {
  std::string out_dir;
};

struct TrainOpts : CommonOpts {
  std::string manifest_path;
  std::string out_dir;
  std::optional<int> ensemble_k;
  int jobs = 0;  // 0 = one worker per member
  bool force = false;
};

struct PredictOpts {
  std::string models_dir;
  std::string image_path;
  std::string out_soft;
  std::string out_labels;
};

struct EvaluateOpts {
  std::string pred_dir;
  std::string gt_dir;
  std::string out_csv;
};

struct UncertaintyOpts {
  std::string models_dir;
  std::string manifest_path;
  std::string split = "test";
  std::string gt2_dir;
  std::string out_csv;
};

struct SeverityOpts {
  std::string models_dir;
  std::string manifest_path;
  std::string split = "all";
  std::string out_csv;
  bool use_gt = false;
};

int cmd_synth(const SynthOpts& opts);
int cmd_train(const TrainOpts& opts);
int cmd_predict(const PredictOpts& opts);
int cmd_evaluate(const EvaluateOpts& opts);
int cmd_uncertainty(const UncertaintyOpts& opts);
int cmd_severity(const SeverityOpts& opts);

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitNumeric = 4;

/// Maps library errors onto the exit-code contract:
/// 0 success, 2 usage/config, 3 I/O, 4 numerical failure.
template <typename F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const DimensionError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const GeometryError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const EnsembleError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  } catch (const TrainingError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumeric;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumeric;
  } catch (const UndefinedValueError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
}

}  // namespace hseg::cli
