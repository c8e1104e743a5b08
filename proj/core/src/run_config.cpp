#include "hseg/run_config.hpp"

#include <charconv>
#include <fstream>

#include "hseg/errors.hpp"

namespace hseg {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  std::size_t e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key " + key + ": expected integer, got \"" + value + "\"");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key " + key + ": expected unsigned integer, got \"" + value + "\"");
  }
}

float parse_float(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const float v = std::stof(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key " + key + ": expected number, got \"" + value + "\"");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  throw ConfigError("key " + key + ": expected boolean, got \"" + value + "\"");
}

std::vector<float> parse_floats(const std::string& key, const std::string& value,
                                std::size_t count) {
  std::vector<float> out;
  std::size_t start = 0;
  while (start <= value.size()) {
    const std::size_t comma = value.find(',', start);
    const std::string field =
        trim(value.substr(start, comma == std::string::npos ? comma : comma - start));
    out.push_back(parse_float(key, field));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (out.size() != count) {
    throw ConfigError("key " + key + ": expected " + std::to_string(count) + " values, got " +
                      std::to_string(out.size()));
  }
  return out;
}

}  // namespace

RunConfig::RunConfig() {
  ensemble.lnet = UNetConfig{.depth = 3, .base_channels = 12, .in_channels = 1, .out_channels = 1,
                             .kernel_size = 3};
  ensemble.cnet = UNetConfig{.depth = 3, .base_channels = 12, .in_channels = 2, .out_channels = 4,
                             .kernel_size = 3};
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto set_range = [&](float& lo, float& hi) {
    const std::vector<float> v = parse_floats(key, value, 2);
    lo = v[0];
    hi = v[1];
  };

  if (key == "depth") {
    ensemble.lnet.depth = ensemble.cnet.depth = parse_int(key, value);
  } else if (key == "base_channels") {
    ensemble.lnet.base_channels = ensemble.cnet.base_channels = parse_int(key, value);
  } else if (key == "kernel_size") {
    ensemble.lnet.kernel_size = ensemble.cnet.kernel_size = parse_int(key, value);
  } else if (key == "epochs") {
    ensemble.train.epochs = parse_int(key, value);
  } else if (key == "batch_size") {
    ensemble.train.batch_size = parse_int(key, value);
  } else if (key == "patch_size") {
    ensemble.train.patch_size = parse_int(key, value);
  } else if (key == "learning_rate") {
    ensemble.train.learning_rate = parse_float(key, value);
  } else if (key == "lnet_loss_weight") {
    ensemble.train.lnet_loss_weight = parse_float(key, value);
  } else if (key == "augment_flip") {
    ensemble.train.augment_flip = parse_bool(key, value);
  } else if (key == "lambda") {
    ensemble.train.loss.lambda = parse_float(key, value);
  } else if (key == "epsilon") {
    ensemble.train.loss.epsilon = parse_float(key, value);
  } else if (key == "log_clip") {
    ensemble.train.loss.log_clip = parse_float(key, value);
  } else if (key == "class_weights") {
    if (value == "auto") {
      auto_class_weights = true;
    } else {
      ensemble.train.loss.class_weights = parse_floats(key, value, kNumClasses);
      auto_class_weights = false;
    }
  } else if (key == "ensemble_k") {
    ensemble.k = parse_int(key, value);
  } else if (key == "base_seed") {
    ensemble.base_seed = parse_u64(key, value);
  } else if (key == "seed") {
    phantom.seed = parse_u64(key, value);
  } else if (key == "n_volumes") {
    phantom.n_volumes = parse_int(key, value);
  } else if (key == "train_volumes") {
    phantom.train_volumes = parse_int(key, value);
  } else if (key == "slices_per_volume") {
    phantom.slices_per_volume = parse_int(key, value);
  } else if (key == "image_size") {
    phantom.image_size = parse_int(key, value);
  } else if (key == "noise_sigma") {
    phantom.noise_sigma = parse_float(key, value);
  } else if (key == "healthy_intensity") {
    set_range(phantom.healthy_intensity_lo, phantom.healthy_intensity_hi);
  } else if (key == "ggo_intensity") {
    set_range(phantom.ggo_intensity_lo, phantom.ggo_intensity_hi);
  } else if (key == "con_intensity") {
    set_range(phantom.con_intensity_lo, phantom.con_intensity_hi);
  } else if (key == "body_intensity") {
    set_range(phantom.body_intensity_lo, phantom.body_intensity_hi);
  } else if (key == "lung_radius_x") {
    set_range(phantom.lung_radius_x_lo, phantom.lung_radius_x_hi);
  } else if (key == "lung_radius_y") {
    set_range(phantom.lung_radius_y_lo, phantom.lung_radius_y_hi);
  } else if (key == "blob_radius") {
    set_range(phantom.blob_radius_lo, phantom.blob_radius_hi);
  } else if (key == "max_ggo_blobs") {
    phantom.max_ggo_blobs = parse_int(key, value);
  } else if (key == "max_con_blobs") {
    phantom.max_con_blobs = parse_int(key, value);
  } else if (key == "rater2_labels") {
    phantom.rater2_labels = parse_bool(key, value);
  } else {
    throw ConfigError("unknown configuration key \"" + key + "\"");
  }
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  RunConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + " is not key=value: \"" + line +
                        "\"");
    }
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

}  // namespace hseg
