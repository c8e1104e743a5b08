#include <doctest.h>

#include <cstring>
#include <fstream>

#include "hseg/checkpoint.hpp"
#include "hseg/losses.hpp"
#include "support/ref_ops.hpp"
#include "support/test_utils.hpp"

using namespace hseg;

namespace {

UNetConfig small_lcfg() {
  return {.depth = 2, .base_channels = 4, .in_channels = 1, .out_channels = 1, .kernel_size = 3};
}
UNetConfig small_ccfg() {
  return {.depth = 2, .base_channels = 4, .in_channels = 2, .out_channels = 4, .kernel_size = 3};
}

bool params_identical(const SegModel& a, const SegModel& b) {
  auto pa = a.named_params();
  auto pb = b.named_params();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].first != pb[i].first) return false;
    if (!same_shape(pa[i].second->shape(), pb[i].second->shape())) return false;
    if (std::memcmp(pa[i].second->data().data(), pb[i].second->data().data(),
                    static_cast<std::size_t>(pa[i].second->size()) * sizeof(float)) != 0) {
      return false;
    }
  }
  return true;
}

// Closed-form parameter count from the layer shapes alone.
std::int64_t expected_unet_params(const UNetConfig& c) {
  auto conv = [&](std::int64_t out, std::int64_t in, std::int64_t k) { return out * in * k * k + out; };
  const std::int64_t k = c.kernel_size;
  std::int64_t total = 0;
  for (int level = 0; level < c.depth; ++level) {
    const std::int64_t w = static_cast<std::int64_t>(c.base_channels) << level;
    const std::int64_t in = level == 0 ? c.base_channels : w / 2;
    total += conv(w, in, k) + conv(w, w, k);
  }
  const std::int64_t bw = static_cast<std::int64_t>(c.base_channels) << c.depth;
  total += conv(bw, bw / 2, k) + conv(bw, bw, k);
  for (int level = 0; level < c.depth; ++level) {
    const std::int64_t skip = static_cast<std::int64_t>(c.base_channels) << level;
    total += conv(skip, 3 * skip, k) + conv(skip, skip, k);
  }
  total += conv(c.out_channels, c.base_channels, 1);
  return total;
}

std::int64_t expected_compound_params(const UNetConfig& l, const UNetConfig& c) {
  auto adapter = [](const UNetConfig& cfg) {
    return static_cast<std::int64_t>(cfg.base_channels) * cfg.in_channels + cfg.base_channels;
  };
  return adapter(l) + expected_unet_params(l) + adapter(c) + expected_unet_params(c);
}

}  // namespace

TEST_SUITE("segmentation-models") {

TEST_CASE("build_hunet is seed-deterministic") {
  HUNetCompound a = build_hunet(small_lcfg(), small_ccfg(), 42);
  HUNetCompound b = build_hunet(small_lcfg(), small_ccfg(), 42);
  CHECK(params_identical(a, b));
  HUNetCompound c = build_hunet(small_lcfg(), small_ccfg(), 43);
  CHECK_FALSE(params_identical(a, c));
}

TEST_CASE("config invariants") {
  UNetConfig bad = small_lcfg();
  bad.depth = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = small_lcfg();
  bad.kernel_size = 4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  // C-Net must accept image + lung mask channels.
  UNetConfig ccfg = small_ccfg();
  ccfg.in_channels = 1;
  CHECK_THROWS_AS(build_hunet(small_lcfg(), ccfg, 1), ConfigError);
  UNetConfig lcfg = small_lcfg();
  lcfg.out_channels = 2;
  CHECK_THROWS_AS(build_hunet(lcfg, small_ccfg(), 1), ConfigError);
}

TEST_CASE("parameter count matches the closed-form layer count") {
  // depth 2, base 8, k 3 (and the default-size compound as a second point).
  UNetConfig l{.depth = 2, .base_channels = 8, .in_channels = 1, .out_channels = 1,
               .kernel_size = 3};
  UNetConfig c{.depth = 2, .base_channels = 8, .in_channels = 2, .out_channels = 4,
               .kernel_size = 3};
  HUNetCompound model = build_hunet(l, c, 1);
  CHECK(model.parameter_count() == expected_compound_params(l, c));

  HUNetCompound small = build_hunet(small_lcfg(), small_ccfg(), 1);
  CHECK(small.parameter_count() == expected_compound_params(small_lcfg(), small_ccfg()));
}

TEST_CASE("forward produces valid heads and preserves shape") {
  Rng rng(5);
  HUNetCompound model = build_hunet(small_lcfg(), small_ccfg(), 7);
  Tensor image = testutil::random_tensor({2, 1, 16, 16}, rng, 0.0f, 1.0f);

  Tape tape;
  TapeBinding binding(tape, false);
  auto out = model.forward(tape, binding, tape.leaf(image));
  REQUIRE(out.lung_soft.has_value());
  const Tensor& lung = tape.value(*out.lung_soft);
  const Tensor& cls = tape.value(out.class_soft);
  REQUIRE(lung.shape() == Shape{2, 1, 16, 16});
  REQUIRE(cls.shape() == Shape{2, 4, 16, 16});
  for (std::int64_t i = 0; i < lung.size(); ++i) {
    CHECK(lung[i] > 0.0f);
    CHECK(lung[i] < 1.0f);
  }
  const std::int64_t plane = 16 * 16;
  for (int n = 0; n < 2; ++n) {
    for (std::int64_t p = 0; p < plane; ++p) {
      float sum = 0.0f;
      for (int l = 0; l < 4; ++l) sum += cls[(n * 4 + l) * plane + p];
      CHECK(std::abs(sum - 1.0f) < 1e-5f);
    }
  }
}

TEST_CASE("forward rejects indivisible spatial dims") {
  HUNetCompound model = build_hunet(small_lcfg(), small_ccfg(), 7);
  Tape tape;
  TapeBinding binding(tape, false);
  ValueId img = tape.leaf(Tensor({1, 1, 10, 16}));
  CHECK_THROWS_AS(model.forward(tape, binding, img), GeometryError);
}

TEST_CASE("C-Net loss reaches L-Net parameters through the cascade") {
  Rng rng(11);
  HUNetCompound model = build_hunet(small_lcfg(), small_ccfg(), 3);
  Tensor image = testutil::random_tensor({1, 1, 8, 8}, rng, 0.0f, 1.0f);
  LabelMap labels(8, 8);
  for (auto& v : labels.values()) v = static_cast<std::uint8_t>(rng.uniform_int(0, 3));
  std::vector<LabelMap> batch{labels};
  Tensor target = one_hot(batch);

  Tape tape;
  TapeBinding binding(tape, true);
  auto out = model.forward(tape, binding, tape.leaf(image));
  LossConfig cfg;
  tape.backward(cnet_total_loss(tape, out.class_soft, tape.leaf(target), cfg));

  // Every L-Net encoder kernel gets a nonzero gradient from the C-Net loss.
  bool lnet_touched = false;
  for (const auto& [tensor, id] : binding.bound()) {
    const Tensor& g = tape.grad(id);
    for (std::int64_t i = 0; i < g.size(); ++i) {
      if (g[i] != 0.0f) {
        lnet_touched = true;
        break;
      }
    }
  }
  CHECK(lnet_touched);

  auto params = model.parameters();
  int nonzero_lnet_params = 0;
  for (const ParamRef& p : params) {
    if (p.name.rfind("lnet.enc", 0) == 0 || p.name.rfind("adapter_l", 0) == 0) {
      const Tensor& g = tape.grad(binding.id_of(p.tensor));
      for (std::int64_t i = 0; i < g.size(); ++i) {
        if (g[i] != 0.0f) {
          ++nonzero_lnet_params;
          break;
        }
      }
    }
  }
  CHECK(nonzero_lnet_params > 0);
}

TEST_CASE("a silent L-Net still yields a valid class distribution") {
  HUNetCompound model = build_hunet(small_lcfg(), small_ccfg(), 7);
  // Freeze the lung head to emit ~0 everywhere.
  model.set_param("lnet.head.weight", Tensor({1, 4, 1, 1}));
  model.set_param("lnet.head.bias", Tensor({1}, {-40.0f}));

  Rng rng(2);
  Inference inf = infer(model, testutil::random_tensor({8, 8}, rng, 0.0f, 1.0f));
  const std::int64_t plane = 64;
  for (std::int64_t p = 0; p < plane; ++p) {
    float sum = 0.0f;
    for (int l = 0; l < 4; ++l) sum += inf.class_soft[l * plane + p];
    CHECK(std::abs(sum - 1.0f) < 1e-5f);
  }
}

TEST_CASE("checkpoint roundtrip is bit-identical") {
  testutil::TempDir dir("ckpt");
  HUNetCompound model = build_hunet(small_lcfg(), small_ccfg(), 99);
  const auto path = dir.path() / "model.hseg";
  save_checkpoint(model, path);

  CHECK(static_cast<std::int64_t>(std::filesystem::file_size(path)) ==
        checkpoint_file_size(model.named_params()));

  HUNetCompound loaded = load_hunet_checkpoint(path);
  CHECK(params_identical(model, loaded));
  CHECK(loaded.lnet_config().depth == small_lcfg().depth);
  CHECK(loaded.cnet_config().base_channels == small_ccfg().base_channels);

  // Same forward outputs after the roundtrip.
  Rng rng(4);
  Tensor image = testutil::random_tensor({8, 8}, rng, 0.0f, 1.0f);
  Inference a = infer(model, image);
  Inference b = infer(loaded, image);
  CHECK(std::memcmp(a.class_soft.data().data(), b.class_soft.data().data(),
                    static_cast<std::size_t>(a.class_soft.size()) * sizeof(float)) == 0);
}

TEST_CASE("flat model checkpoints roundtrip and dispatch") {
  testutil::TempDir dir("flat");
  UNetConfig cfg = small_ccfg();
  cfg.in_channels = 1;
  FlatCNet flat(cfg, 5);
  const auto path = dir.path() / "flat.hseg";
  save_checkpoint(flat, path);
  auto loaded = load_model_checkpoint(path);
  CHECK(params_identical(flat, *loaded));
  CHECK_THROWS_AS(load_hunet_checkpoint(path), FormatError);
}

TEST_CASE("corrupted checkpoints are rejected without partial models") {
  testutil::TempDir dir("corrupt");
  HUNetCompound model = build_hunet(small_lcfg(), small_ccfg(), 1);
  const auto path = dir.path() / "model.hseg";
  save_checkpoint(model, path);

  auto clobber = [&](std::int64_t offset, char value, const char* tag) {
    const auto copy = dir.path() / (std::string("broken_") + tag + ".hseg");
    std::filesystem::copy_file(path, copy);
    std::fstream f(copy, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(offset);
    f.put(value);
    f.close();
    return copy;
  };

  CHECK_THROWS_AS(load_hunet_checkpoint(clobber(0, 'X', "magic")), FormatError);
  CHECK_THROWS_AS(load_hunet_checkpoint(clobber(4, 9, "version")), FormatError);

  // Truncation mid-tensor.
  const auto trunc = dir.path() / "trunc.hseg";
  std::filesystem::copy_file(path, trunc);
  std::filesystem::resize_file(trunc, std::filesystem::file_size(path) / 2);
  try {
    load_hunet_checkpoint(trunc);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.byte_offset() >= 0);  // offset identified
  }
}

TEST_CASE("read_named_tensors preserves order and content") {
  testutil::TempDir dir("tensors");
  Rng rng(8);
  Tensor a = testutil::random_tensor({2, 3}, rng);
  Tensor b = testutil::random_tensor({4}, rng);
  const auto path = dir.path() / "pair.hseg";
  write_named_tensors(path, {{"alpha", &a}, {"beta", &b}});
  auto loaded = read_named_tensors(path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].first == "alpha");
  CHECK(loaded[1].first == "beta");
  CHECK(loaded[0].second.shape() == a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) CHECK(loaded[0].second[i] == a[i]);
}

}  // TEST_SUITE
