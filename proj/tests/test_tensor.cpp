#include <doctest.h>

#include <cstring>

#include "hseg/tape.hpp"
#include "support/ref_ops.hpp"
#include "support/test_utils.hpp"

using namespace hseg;
using refops::DTensor;
using testutil::fd_gradient;
using testutil::max_rel_err;
using testutil::random_tensor;

namespace {

// Weighted-sum functional makes every output entry matter with a distinct
// coefficient, so linear ops get non-trivial gradients too.
Tensor random_weights_like(const Shape& shape, Rng& rng) {
  return random_tensor(shape, rng, 0.1f, 1.0f);
}

}  // namespace

TEST_SUITE("tensor-core") {

TEST_CASE("tensor shape/data invariant") {
  CHECK_THROWS_AS(Tensor({2, 3}, {1.0f, 2.0f}), DimensionError);
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(Tensor::scalar(4.0f).item() == 4.0f);
  CHECK_THROWS_AS(Tensor({2}).item(), UsageError);
}

TEST_CASE("conv2d 1x1 identity") {
  Rng rng(1);
  Tape tape;
  ValueId x = tape.leaf(random_tensor({2, 1, 4, 5}, rng));
  ValueId k = tape.leaf(Tensor({1, 1, 1, 1}, {1.0f}));
  ValueId b = tape.leaf(Tensor({1}));
  ValueId y = tape.conv2d(x, k, b, 1, 0);
  REQUIRE(tape.value(y).shape() == tape.value(x).shape());
  for (std::int64_t i = 0; i < tape.value(x).size(); ++i) {
    CHECK(tape.value(y)[i] == tape.value(x)[i]);
  }
}

TEST_CASE("conv2d 3x3 ones kernel on constant image") {
  // 3x3 constant image of value 2, all-ones kernel, pad 1: the output counts
  // the in-bounds taps times 2.
  Tape tape;
  ValueId x = tape.leaf(Tensor::full({1, 1, 3, 3}, 2.0f));
  ValueId k = tape.leaf(Tensor::full({1, 1, 3, 3}, 1.0f));
  ValueId b = tape.leaf(Tensor({1}));
  ValueId y = tape.conv2d(x, k, b, 1, 1);
  const Tensor& out = tape.value(y);
  CHECK(out[4] == doctest::Approx(18.0f));  // center
  for (std::int64_t corner : {0, 2, 6, 8}) CHECK(out[corner] == doctest::Approx(8.0f));
  for (std::int64_t edge : {1, 3, 5, 7}) CHECK(out[edge] == doctest::Approx(12.0f));

  // Same case against the brute-force reference.
  DTensor ref = refops::conv2d(refops::from_tensor(tape.value(x)),
                               refops::from_tensor(tape.value(k)),
                               refops::from_tensor(tape.value(b)), 1, 1);
  for (std::int64_t i = 0; i < out.size(); ++i) {
    CHECK(out[i] == doctest::Approx(ref.at(i)));
  }
}

TEST_CASE("conv2d matches brute-force reference on random shapes") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    Tape tape;
    ValueId x = tape.leaf(random_tensor({2, 3, 6, 5}, rng));
    ValueId k = tape.leaf(random_tensor({4, 3, 3, 3}, rng));
    ValueId b = tape.leaf(random_tensor({4}, rng));
    ValueId y = tape.conv2d(x, k, b, 1, 1);
    DTensor ref = refops::conv2d(refops::from_tensor(tape.value(x)),
                                 refops::from_tensor(tape.value(k)),
                                 refops::from_tensor(tape.value(b)), 1, 1);
    for (std::int64_t i = 0; i < tape.value(y).size(); ++i) {
      CHECK(tape.value(y)[i] == doctest::Approx(ref.at(i)).epsilon(1e-5));
    }
  }
}

TEST_CASE("conv2d rejects bad geometry") {
  Tape tape;
  ValueId x = tape.leaf(Tensor({1, 2, 4, 4}));
  ValueId k3 = tape.leaf(Tensor({1, 3, 3, 3}));
  ValueId b = tape.leaf(Tensor({1}));
  CHECK_THROWS_AS(tape.conv2d(x, k3, b, 1, 1), DimensionError);  // channel mismatch
  ValueId k_even = tape.leaf(Tensor({1, 2, 2, 2}));
  CHECK_THROWS_AS(tape.conv2d(x, k_even, b, 1, 0), GeometryError);  // even kernel
  ValueId k = tape.leaf(Tensor({1, 2, 3, 3}));
  CHECK_THROWS_AS(tape.conv2d(x, k, b, 2, 1), GeometryError);  // non-exact output size
  ValueId b2 = tape.leaf(Tensor({2}));
  CHECK_THROWS_AS(tape.conv2d(x, k, b2, 1, 1), DimensionError);  // bias mismatch
}

TEST_CASE("conv2d finite-difference gradients") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed * 17 + 1);
    Tensor x = random_tensor({1, 1, 5, 5}, rng);
    Tensor k = random_tensor({1, 1, 3, 3}, rng);
    Tensor b = random_tensor({1}, rng);
    Tensor w = random_weights_like({1, 1, 5, 5}, rng);

    Tape tape;
    ValueId xi = tape.leaf(x, true);
    ValueId ki = tape.leaf(k, true);
    ValueId bi = tape.leaf(b, true);
    ValueId y = tape.conv2d(xi, ki, bi, 1, 1);
    ValueId loss = tape.sum_all(tape.mul(y, tape.leaf(w, false)));
    tape.backward(loss);

    auto eval = [&](const Tensor& xc, const Tensor& kc, const Tensor& bc) {
      return refops::weighted_sum(refops::conv2d(refops::from_tensor(xc), refops::from_tensor(kc),
                                                 refops::from_tensor(bc), 1, 1),
                                  refops::from_tensor(w));
    };
    auto fd_k = fd_gradient(k, 1e-3, [&] { return eval(x, k, b); });
    CHECK(max_rel_err(tape.grad(ki).data(), fd_k) < 1e-3);
    auto fd_x = fd_gradient(x, 1e-3, [&] { return eval(x, k, b); });
    CHECK(max_rel_err(tape.grad(xi).data(), fd_x) < 1e-3);
    auto fd_b = fd_gradient(b, 1e-3, [&] { return eval(x, k, b); });
    CHECK(max_rel_err(tape.grad(bi).data(), fd_b) < 1e-3);
  }
}

TEST_CASE("maxpool2 basics") {
  Tape tape;
  ValueId x = tape.leaf(Tensor({1, 1, 2, 2}, {1.0f, 2.0f, 3.0f, 4.0f}));
  CHECK(tape.value(tape.maxpool2(x)).item() == 4.0f);

  ValueId odd = tape.leaf(Tensor({1, 1, 3, 4}));
  CHECK_THROWS_AS(tape.maxpool2(odd), GeometryError);

  // Constant input: output constant, gradient routed to the first window slot.
  Tape t2;
  ValueId c = t2.leaf(Tensor::full({1, 1, 4, 4}, 5.0f), true);
  ValueId y = t2.maxpool2(c);
  for (std::int64_t i = 0; i < t2.value(y).size(); ++i) CHECK(t2.value(y)[i] == 5.0f);
  t2.backward(t2.sum_all(y));
  const Tensor& g = t2.grad(c);
  for (int r = 0; r < 4; ++r) {
    for (int col = 0; col < 4; ++col) {
      const float expect = (r % 2 == 0 && col % 2 == 0) ? 1.0f : 0.0f;
      CHECK(g[r * 4 + col] == expect);
    }
  }
}

TEST_CASE("maxpool2 finite-difference gradient") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 100);
    Tensor x = testutil::random_pool_safe({1, 1, 4, 4}, rng, 0.02f);
    Tensor w = random_weights_like({1, 1, 2, 2}, rng);
    Tape tape;
    ValueId xi = tape.leaf(x, true);
    ValueId loss = tape.sum_all(tape.mul(tape.maxpool2(xi), tape.leaf(w, false)));
    tape.backward(loss);
    auto fd = fd_gradient(x, 1e-3, [&] {
      return refops::weighted_sum(refops::maxpool2(refops::from_tensor(x)),
                                  refops::from_tensor(w));
    });
    CHECK(max_rel_err(tape.grad(xi).data(), fd) < 1e-3);
  }
}

TEST_CASE("upsample_nearest2") {
  Tape tape;
  ValueId x = tape.leaf(Tensor({1, 1, 1, 1}, {7.0f}), true);
  ValueId y = tape.upsample_nearest2(x);
  REQUIRE(tape.value(y).shape() == Shape{1, 1, 2, 2});
  for (std::int64_t i = 0; i < 4; ++i) CHECK(tape.value(y)[i] == 7.0f);
  tape.backward(tape.sum_all(y));
  CHECK(tape.grad(x).item() == 4.0f);  // each pixel fans out to 4 outputs
}

TEST_CASE("upsample_nearest2 finite-difference gradient") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 3);
    Tensor x = random_tensor({1, 2, 3, 3}, rng);
    Tensor w = random_weights_like({1, 2, 6, 6}, rng);
    Tape tape;
    ValueId xi = tape.leaf(x, true);
    ValueId loss = tape.sum_all(tape.mul(tape.upsample_nearest2(xi), tape.leaf(w, false)));
    tape.backward(loss);
    auto fd = fd_gradient(x, 1e-3, [&] {
      return refops::weighted_sum(refops::upsample_nearest2(refops::from_tensor(x)),
                                  refops::from_tensor(w));
    });
    CHECK(max_rel_err(tape.grad(xi).data(), fd) < 1e-3);
  }
}

TEST_CASE("concat_channels semantics") {
  Tape tape;
  Rng rng(5);
  Tensor xt = random_tensor({2, 3, 4, 4}, rng);
  ValueId x = tape.leaf(xt);
  ValueId empty = tape.leaf(Tensor({2, 0, 4, 4}));
  ValueId same = tape.concat_channels(x, empty);
  REQUIRE(tape.value(same).shape() == xt.shape());
  for (std::int64_t i = 0; i < xt.size(); ++i) CHECK(tape.value(same)[i] == xt[i]);

  ValueId a = tape.leaf(Tensor::full({1, 1, 2, 2}, 3.0f), true);
  ValueId b = tape.leaf(Tensor::full({1, 1, 2, 2}, 5.0f), true);
  ValueId y = tape.concat_channels(a, b);
  const Tensor& out = tape.value(y);
  REQUIRE(out.shape() == Shape{1, 2, 2, 2});
  for (int i = 0; i < 4; ++i) {
    CHECK(out[i] == 3.0f);
    CHECK(out[4 + i] == 5.0f);
  }
  tape.backward(tape.sum_all(y));
  for (std::int64_t i = 0; i < 4; ++i) {
    CHECK(tape.grad(a)[i] == 1.0f);
    CHECK(tape.grad(b)[i] == 1.0f);
  }

  Tape t2;
  ValueId p = t2.leaf(Tensor({1, 1, 2, 2}));
  ValueId q = t2.leaf(Tensor({1, 1, 3, 2}));
  CHECK_THROWS_AS(t2.concat_channels(p, q), DimensionError);
}

TEST_CASE("activations: trivial values") {
  Tape tape;
  ValueId x = tape.leaf(Tensor({1, 1, 1, 3}, {-1.0f, 0.0f, 2.0f}));
  const Tensor& r = tape.value(tape.relu(x));
  CHECK(r[0] == 0.0f);
  CHECK(r[1] == 0.0f);
  CHECK(r[2] == 2.0f);

  ValueId z = tape.leaf(Tensor({1, 1, 1, 1}, {0.0f}));
  CHECK(tape.value(tape.sigmoid(z)).item() == doctest::Approx(0.5f));

  ValueId logits = tape.leaf(Tensor({1, 4, 1, 1}, {0.3f, 0.3f, 0.3f, 0.3f}));
  const Tensor& s = tape.value(tape.softmax_channels(logits));
  for (int l = 0; l < 4; ++l) CHECK(s[l] == doctest::Approx(0.25f));
}

TEST_CASE("softmax is a shift-invariant distribution") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 11);
    Tensor logits = random_tensor({2, 4, 3, 3}, rng, -3.0f, 3.0f);
    Tape tape;
    ValueId s = tape.softmax_channels(tape.leaf(logits));
    const Tensor& y = tape.value(s);
    const std::int64_t plane = 9;
    for (int n = 0; n < 2; ++n) {
      for (std::int64_t p = 0; p < plane; ++p) {
        float sum = 0.0f;
        for (int l = 0; l < 4; ++l) {
          const float v = y[(n * 4 + l) * plane + p];
          CHECK(v >= 0.0f);
          sum += v;
        }
        CHECK(std::abs(sum - 1.0f) < 1e-5f);
      }
    }
    // softmax(z + c) == softmax(z)
    const float shift = rng.uniform(-5.0f, 5.0f);
    Tensor shifted = logits;
    for (std::int64_t i = 0; i < shifted.size(); ++i) shifted[i] += shift;
    ValueId s2 = tape.softmax_channels(tape.leaf(shifted));
    for (std::int64_t i = 0; i < y.size(); ++i) {
      CHECK(std::abs(tape.value(s2)[i] - y[i]) < 1e-6f);
    }
  }
}

TEST_CASE("activation finite-difference gradients") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 41);
    Tensor w = random_weights_like({1, 4, 2, 2}, rng);
    const Tensor wref = w;

    {
      Tensor x = testutil::random_tensor_off_zero({1, 4, 2, 2}, rng, 5e-3f);
      Tape tape;
      ValueId xi = tape.leaf(x, true);
      tape.backward(tape.sum_all(tape.mul(tape.relu(xi), tape.leaf(wref, false))));
      auto fd = fd_gradient(x, 1e-3, [&] {
        return refops::weighted_sum(refops::relu(refops::from_tensor(x)),
                                    refops::from_tensor(wref));
      });
      CHECK(max_rel_err(tape.grad(xi).data(), fd) < 1e-3);
    }
    {
      Tensor x = random_tensor({1, 4, 2, 2}, rng, -2.0f, 2.0f);
      Tape tape;
      ValueId xi = tape.leaf(x, true);
      tape.backward(tape.sum_all(tape.mul(tape.sigmoid(xi), tape.leaf(wref, false))));
      auto fd = fd_gradient(x, 1e-3, [&] {
        return refops::weighted_sum(refops::sigmoid(refops::from_tensor(x)),
                                    refops::from_tensor(wref));
      });
      CHECK(max_rel_err(tape.grad(xi).data(), fd) < 1e-3);
    }
    {
      Tensor x = random_tensor({1, 4, 2, 2}, rng, -2.0f, 2.0f);
      Tape tape;
      ValueId xi = tape.leaf(x, true);
      tape.backward(tape.sum_all(tape.mul(tape.softmax_channels(xi), tape.leaf(wref, false))));
      auto fd = fd_gradient(x, 1e-3, [&] {
        return refops::weighted_sum(refops::softmax_channels(refops::from_tensor(x)),
                                    refops::from_tensor(wref));
      });
      CHECK(max_rel_err(tape.grad(xi).data(), fd) < 1e-3);
    }
  }
}

TEST_CASE("elementwise and reduction gradients") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 71);
    const Shape shape{2, 3};
    Tensor a = testutil::random_tensor_off_zero(shape, rng, 0.05f);
    Tensor b = testutil::random_tensor_off_zero(shape, rng, 0.05f);
    Tensor w = random_weights_like(shape, rng);
    const DTensor wref = refops::from_tensor(w);

    auto check_binary = [&](auto tape_op, auto ref_op) {
      Tape tape;
      ValueId ai = tape.leaf(a, true);
      ValueId bi = tape.leaf(b, true);
      ValueId y = tape_op(tape, ai, bi);
      tape.backward(tape.sum_all(tape.mul(y, tape.leaf(w, false))));
      auto fd_a = fd_gradient(a, 1e-4, [&] {
        return refops::weighted_sum(ref_op(refops::from_tensor(a), refops::from_tensor(b)), wref);
      });
      CHECK(max_rel_err(tape.grad(ai).data(), fd_a) < 1e-3);
      auto fd_b = fd_gradient(b, 1e-4, [&] {
        return refops::weighted_sum(ref_op(refops::from_tensor(a), refops::from_tensor(b)), wref);
      });
      CHECK(max_rel_err(tape.grad(bi).data(), fd_b) < 1e-3);
    };
    check_binary([](Tape& t, ValueId x, ValueId y) { return t.add(x, y); },
                 [](const DTensor& x, const DTensor& y) { return refops::add(x, y); });
    check_binary([](Tape& t, ValueId x, ValueId y) { return t.sub(x, y); },
                 [](const DTensor& x, const DTensor& y) { return refops::sub(x, y); });
    check_binary([](Tape& t, ValueId x, ValueId y) { return t.mul(x, y); },
                 [](const DTensor& x, const DTensor& y) { return refops::mul(x, y); });
    check_binary([](Tape& t, ValueId x, ValueId y) { return t.div(x, y); },
                 [](const DTensor& x, const DTensor& y) { return refops::divide(x, y); });

    // add_scalar / mul_scalar / clamp / log / select_channel / sum_all
    {
      Tensor x = random_tensor({1, 4, 2, 2}, rng, 0.2f, 0.8f);
      Tape tape;
      ValueId xi = tape.leaf(x, true);
      ValueId y = tape.log(tape.clamp(tape.mul_scalar(tape.add_scalar(xi, 0.05f), 1.3f), 0.05f,
                                      2.0f));
      ValueId picked = tape.select_channel(y, 2);
      tape.backward(tape.sum_all(picked));
      auto fd = fd_gradient(x, 1e-4, [&] {
        DTensor d = refops::from_tensor(x);
        for (double& v : d.data) v = (v + 0.05) * 1.3;
        d = refops::clamp(d, 0.05, 2.0);
        d = refops::log(d);
        return refops::sum(refops::select_channel(d, 2));
      });
      CHECK(max_rel_err(tape.grad(xi).data(), fd) < 1e-3);
    }
  }
}

TEST_CASE("backward basics") {
  Rng rng(9);
  Tensor x = random_tensor({3, 2}, rng);

  // loss = sum(x) -> gradient of ones
  {
    Tape tape;
    ValueId xi = tape.leaf(x, true);
    tape.backward(tape.sum_all(xi));
    for (std::int64_t i = 0; i < x.size(); ++i) CHECK(tape.grad(xi)[i] == 1.0f);
  }
  // loss = sum(x*x) -> gradient 2x
  {
    Tape tape;
    ValueId xi = tape.leaf(x, true);
    tape.backward(tape.sum_all(tape.mul(xi, xi)));
    for (std::int64_t i = 0; i < x.size(); ++i) {
      CHECK(tape.grad(xi)[i] == doctest::Approx(2.0f * x[i]));
    }
  }
  // non-scalar loss rejected
  {
    Tape tape;
    ValueId xi = tape.leaf(x, true);
    CHECK_THROWS_AS(tape.backward(xi), UsageError);
  }
}

TEST_CASE("gradient accumulation across uses") {
  Rng rng(10);
  Tensor x = random_tensor({4}, rng);

  Tape joint;
  ValueId xj = joint.leaf(x, true);
  joint.backward(joint.add(joint.sum_all(xj), joint.sum_all(joint.mul(xj, xj))));

  Tape first;
  ValueId x1 = first.leaf(x, true);
  first.backward(first.sum_all(x1));
  Tape second;
  ValueId x2 = second.leaf(x, true);
  second.backward(second.sum_all(second.mul(x2, x2)));

  for (std::int64_t i = 0; i < x.size(); ++i) {
    CHECK(std::abs(joint.grad(xj)[i] - (first.grad(x1)[i] + second.grad(x2)[i])) <= 1e-6f);
  }
}

TEST_CASE("leaves untouched by the loss get zero gradients") {
  Tape tape;
  ValueId used = tape.leaf(Tensor({2}, {1.0f, 2.0f}), true);
  ValueId unused = tape.leaf(Tensor({3}), true);
  tape.backward(tape.sum_all(used));
  REQUIRE(tape.grad(unused).shape() == Shape{3});
  for (std::int64_t i = 0; i < 3; ++i) CHECK(tape.grad(unused)[i] == 0.0f);
}

TEST_CASE("tape misuse errors") {
  Tape tape;
  ValueId x = tape.leaf(Tensor({1}, {2.0f}), true);
  CHECK_THROWS_AS(tape.grad(x), UsageError);
  ValueId loss = tape.sum_all(x);
  tape.backward(loss);
  CHECK_THROWS_AS(tape.backward(loss), UsageError);
}

TEST_CASE("forward determinism and finiteness") {
  Rng rng(31);
  Tensor x = random_tensor({1, 2, 8, 8}, rng);
  Tensor k = random_tensor({3, 2, 3, 3}, rng);
  Tensor b = random_tensor({3}, rng);
  auto run = [&] {
    Tape tape;
    ValueId y = tape.conv2d(tape.leaf(x), tape.leaf(k), tape.leaf(b), 1, 1);
    y = tape.maxpool2(tape.relu(y));
    y = tape.upsample_nearest2(y);
    return tape.value(y);
  };
  Tensor a = run();
  Tensor c = run();
  REQUIRE(a.size() == c.size());
  CHECK(std::memcmp(a.data().data(), c.data().data(),
                    static_cast<std::size_t>(a.size()) * sizeof(float)) == 0);
  CHECK(a.all_finite());
}

}  // TEST_SUITE
