#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fids/ops.hpp"
#include "fids/tensor.hpp"
#include "grad_check.hpp"

using namespace fids;
using fids::test::grad_check;
using fids::test::random_tensor;

TEST_CASE("matmul identity and hand cases") {
  auto eye = Tensor<float>::from_values({2, 2}, {1, 0, 0, 1});
  auto m = Tensor<float>::from_values({2, 2}, {1, 2, 3, 4});
  auto r = matmul(eye, m);
  CHECK(r.values() == std::vector<float>{1, 2, 3, 4});

  auto a = Tensor<float>::from_values({1, 2}, {1, 2});
  auto b = Tensor<float>::from_values({2, 1}, {3, 4});
  CHECK(matmul(a, b).values() == std::vector<float>{11});
}

TEST_CASE("matmul rejects mismatched shapes") {
  auto a = Tensor<float>::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
  auto b = Tensor<float>::from_values({2, 2}, {1, 2, 3, 4});
  CHECK_THROWS_WITH(matmul(a, b), Catch::Matchers::ContainsSubstring("[2x3]") &&
                                      Catch::Matchers::ContainsSubstring("[2x2]"));
}

TEST_CASE("matmul gradients match finite differences") {
  Rng rng(42);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({4, 2}, rng);
  // scalar head: sum of weighted entries so every element gets gradient
  auto w = random_tensor({2, 1}, rng);
  auto ones = Tensor<double>::from_values({1, 3}, std::vector<double>(3, 1.0));
  auto res = grad_check({a, b}, [&] { return matmul(ones, matmul(matmul(a, b), w)); });
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("softmax rows") {
  auto x = Tensor<float>::from_values({2}, {0, 0});
  auto y = softmax(x, 0);
  CHECK(y.values()[0] == Catch::Approx(0.5));

  auto big = Tensor<float>::from_values({2}, {1000, 1000});
  auto yb = softmax(big, 0);
  CHECK(std::isfinite(yb.values()[0]));
  CHECK(yb.values()[0] == Catch::Approx(0.5));

  auto z = Tensor<float>::from_values({3}, {1, 2, 3});
  auto yz = softmax(z, 0);
  CHECK(yz.values()[0] == Catch::Approx(0.09003).margin(1e-5));
  CHECK(yz.values()[1] == Catch::Approx(0.24473).margin(1e-5));
  CHECK(yz.values()[2] == Catch::Approx(0.66524).margin(1e-5));
}

TEST_CASE("softmax properties: rows sum to 1, shift invariant") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<float> v(8);
    for (auto& x : v) x = static_cast<float>(rng.normal() * 3);
    auto t = Tensor<float>::from_values({2, 4}, v);
    auto y = softmax(t, 1);
    for (std::size_t r = 0; r < 2; ++r) {
      float sum = 0;
      for (std::size_t j = 0; j < 4; ++j) sum += y.values()[r * 4 + j];
      CHECK(sum == Catch::Approx(1.0).margin(1e-6));
    }
    auto shifted = v;
    for (std::size_t j = 0; j < 4; ++j) shifted[j] += 10.0f;  // constant on row 0
    auto ys = softmax(Tensor<float>::from_values({2, 4}, shifted), 1);
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(ys.values()[j] == Catch::Approx(y.values()[j]).margin(1e-6));
  }
}

TEST_CASE("softmax works along a non-trailing axis") {
  auto t = Tensor<float>::from_values({2, 2}, {0, 1, 0, 3});
  auto y = softmax(t, 0);  // columns
  CHECK(y.values()[0] == Catch::Approx(0.5));
  CHECK(y.values()[1] + y.values()[3] == Catch::Approx(1.0).margin(1e-6));
  CHECK_THROWS_AS(softmax(t, 2), ShapeError);
}

TEST_CASE("softmax gradient") {
  Rng rng(3);
  auto x = random_tensor({3, 5}, rng);
  auto w = random_tensor({5, 1}, rng);
  auto ones = Tensor<double>::from_values({1, 3}, std::vector<double>(3, 1.0));
  auto res = grad_check({x}, [&] { return matmul(ones, matmul(softmax(x, 1), w)); });
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("layer_norm hand cases") {
  auto gain = Tensor<float>::from_values({3}, {1, 1, 1});
  auto bias = Tensor<float>::from_values({3}, {0, 0, 0});

  auto flat = layer_norm(Tensor<float>::from_values({1, 3}, {5, 5, 5}), gain, bias);
  for (auto v : flat.values()) CHECK(v == Catch::Approx(0.0).margin(1e-5));

  auto g2 = Tensor<float>::from_values({2}, {1, 1});
  auto b2 = Tensor<float>::from_values({2}, {0, 0});
  auto self = layer_norm(Tensor<float>::from_values({1, 2}, {1, -1}), g2, b2);
  CHECK(self.values()[0] == Catch::Approx(1.0).margin(1e-5));
  CHECK(self.values()[1] == Catch::Approx(-1.0).margin(1e-5));

  auto y = layer_norm(Tensor<float>::from_values({1, 3}, {0, 1, 2}), gain, bias);
  CHECK(y.values()[0] == Catch::Approx(-1.22474).margin(1e-4));
  CHECK(y.values()[1] == Catch::Approx(0.0).margin(1e-5));
  CHECK(y.values()[2] == Catch::Approx(1.22474).margin(1e-4));
}

TEST_CASE("layer_norm normalizes each row") {
  Rng rng(11);
  std::vector<float> v(6 * 16);
  for (auto& x : v) x = static_cast<float>(rng.normal() * 4 + 1);
  auto gain = Tensor<float>(Shape{16});
  for (auto& g : gain.values()) g = 1;
  auto bias = Tensor<float>(Shape{16});
  auto y = layer_norm(Tensor<float>::from_values({6, 16}, v), gain, bias);
  for (std::size_t r = 0; r < 6; ++r) {
    double mean = 0, var = 0;
    for (std::size_t j = 0; j < 16; ++j) mean += y.values()[r * 16 + j];
    mean /= 16;
    for (std::size_t j = 0; j < 16; ++j) {
      const double c = y.values()[r * 16 + j] - mean;
      var += c * c;
    }
    var /= 16;
    CHECK(std::abs(mean) < 1e-5);
    CHECK(std::abs(var - 1.0) < 1e-4);
  }
}

TEST_CASE("layer_norm gradient (x, gain and bias)") {
  Rng rng(5);
  auto x = random_tensor({3, 6}, rng);
  auto gain = random_tensor({6}, rng);
  auto bias = random_tensor({6}, rng);
  auto w = random_tensor({6, 1}, rng);
  auto ones = Tensor<double>::from_values({1, 3}, std::vector<double>(3, 1.0));
  auto res = grad_check({x, gain, bias},
                        [&] { return matmul(ones, matmul(layer_norm(x, gain, bias), w)); });
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("gelu values and asymptotes") {
  auto y = gelu(Tensor<float>::from_values({4}, {0.0f, 1.0f, 8.0f, -8.0f}));
  CHECK(y.values()[0] == 0.0f);
  CHECK(y.values()[1] == Catch::Approx(0.841345).margin(1e-5));
  CHECK(y.values()[2] == Catch::Approx(8.0).margin(1e-5));
  CHECK(y.values()[3] == Catch::Approx(0.0).margin(1e-5));
}

TEST_CASE("gelu gradient") {
  Rng rng(9);
  auto x = random_tensor({4, 3}, rng);
  auto w = random_tensor({3, 1}, rng);
  auto ones = Tensor<double>::from_values({1, 4}, std::vector<double>(4, 1.0));
  auto res = grad_check({x}, [&] { return matmul(ones, matmul(gelu(x), w)); });
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("cross_entropy hand cases") {
  auto uniform = Tensor<float>(Shape{1, 8});
  CHECK(cross_entropy(uniform, {3}).item() == Catch::Approx(std::log(8.0)).margin(1e-5));

  auto hot = Tensor<float>::from_values({1, 3}, {0, 1e6f, 0});
  CHECK(cross_entropy(hot, {1}).item() == Catch::Approx(0.0).margin(1e-6));

  auto l = Tensor<float>::from_values({1, 3}, {1, 2, 3});
  CHECK(cross_entropy(l, {2}).item() == Catch::Approx(0.40761).margin(1e-5));

  CHECK_THROWS_AS(cross_entropy(l, {3}), std::out_of_range);
}

TEST_CASE("cross_entropy gradient") {
  Rng rng(13);
  auto logits = random_tensor({4, 5}, rng);
  auto res = grad_check({logits}, [&] { return cross_entropy(logits, {0, 2, 4, 1}); });
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("dropout identity paths") {
  Rng rng(1);
  auto x = Tensor<float>::from_values({2, 2}, {1, 2, 3, 4});
  CHECK(dropout(x, 0.5, /*training=*/false, rng).values() == x.values());
  CHECK(dropout(x, 0.0, /*training=*/true, rng).values() == x.values());
  CHECK_THROWS_AS(dropout(x, 1.0, true, rng), std::invalid_argument);
}

TEST_CASE("dropout preserves expectation") {
  Rng rng(123);
  const std::size_t n = 100000;
  auto x = Tensor<float>::from_values({n}, std::vector<float>(n, 1.0f));
  auto y = dropout(x, 0.1, true, rng);
  double mean = 0;
  for (auto v : y.values()) mean += v;
  mean /= static_cast<double>(n);
  CHECK(mean > 0.98);
  CHECK(mean < 1.02);
}

TEST_CASE("dropout is deterministic per seed") {
  auto run = [] {
    Rng rng(777);
    auto x = Tensor<float>::from_values({100}, std::vector<float>(100, 2.0f));
    return dropout(x, 0.3, true, rng).values();
  };
  CHECK(run() == run());
}

TEST_CASE("attention rows over unmasked keys sum to 1 and ignore PAD") {
  Rng rng(21);
  const std::size_t b = 1, s = 4, h = 6, heads = 2;
  std::vector<float> qv(s * h), kv(s * h), vv(s * h);
  Rng vr(50);
  for (auto* vec : {&qv, &kv, &vv})
    for (auto& x : *vec) x = static_cast<float>(vr.normal());
  auto q = Tensor<float>::from_values({s, h}, qv);
  auto k = Tensor<float>::from_values({s, h}, kv);
  auto v = Tensor<float>::from_values({s, h}, vv);
  std::vector<std::uint8_t> mask = {1, 1, 0, 0};  // two real tokens, two PAD
  auto out = multi_head_attention(q, k, v, mask, b, s, heads);

  // Changing a PAD key/value stream must not change real-token outputs.
  auto kv2 = kv;
  auto vv2 = vv;
  for (std::size_t j = 0; j < h; ++j) {
    kv2[2 * h + j] += 5.0f;
    vv2[3 * h + j] -= 2.0f;
  }
  auto out2 = multi_head_attention(Tensor<float>::from_values({s, h}, qv),
                                   Tensor<float>::from_values({s, h}, kv2),
                                   Tensor<float>::from_values({s, h}, vv2), mask, b, s, heads);
  for (std::size_t i = 0; i < 2 * h; ++i)  // rows 0..1 are real tokens
    CHECK(out2.values()[i] == out.values()[i]);
  (void)rng;
}

TEST_CASE("attention gradient") {
  Rng rng(31);
  const std::size_t s = 3, h = 4;
  auto q = random_tensor({s, h}, rng);
  auto k = random_tensor({s, h}, rng);
  auto v = random_tensor({s, h}, rng);
  auto w = random_tensor({h, 1}, rng);
  std::vector<std::uint8_t> mask = {1, 1, 0};
  auto ones = Tensor<double>::from_values({1, s}, std::vector<double>(s, 1.0));
  auto res = grad_check({q, k, v}, [&] {
    return matmul(ones, matmul(multi_head_attention(q, k, v, mask, 1, s, 2), w));
  });
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("embed and select_rows gradients") {
  Rng rng(37);
  auto tok = random_tensor({6, 4}, rng);
  auto pos = random_tensor({3, 4}, rng);
  std::vector<std::uint32_t> ids = {1, 5, 0, 2, 2, 4};  // batch 2, seq 3
  auto w = random_tensor({4, 1}, rng);
  auto ones = Tensor<double>::from_values({1, 2}, std::vector<double>(2, 1.0));
  auto res = grad_check({tok, pos}, [&] {
    auto x = embed_sequence(tok, pos, ids, 2, 3);
    return matmul(ones, matmul(select_rows(x, {0, 3}), w));
  });
  CHECK(res.max_rel_err < 1e-4);

  std::vector<std::uint32_t> bad = {9, 0, 0, 0, 0, 0};
  CHECK_THROWS_AS(embed_sequence(tok, pos, bad, 2, 3), std::out_of_range);
}

TEST_CASE("forward and backward stay finite") {
  Rng rng(41);
  auto x = random_tensor({4, 8}, rng);
  auto g = random_tensor({8}, rng);
  auto b = random_tensor({8}, rng);
  auto loss = cross_entropy(matmul(layer_norm(gelu(x), g, b), random_tensor({8, 3}, rng)),
                            {0, 1, 2, 1});
  loss.backward();
  CHECK(std::isfinite(loss.item()));
  for (auto v : x.grad()) CHECK(std::isfinite(v));
}
