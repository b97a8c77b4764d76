#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "tresdiff/nn/ops.hpp"

using namespace tresdiff;
using namespace tresdiff::nn;

namespace {

Tensor<double> random_tensor(Shape s, RngState& rng, double scale = 1.0) {
  std::vector<double> v(shape_size(s));
  for (double& x : v) x = scale * rng.normal();
  return Tensor<double>::from(std::move(s), std::move(v));
}

}  // namespace

TEST(NnOps, ConvGroupNormActivationsGradients) {
  RngState rng(7);
  ParameterStore<double> p;
  auto x = p.create("x", {4, 5, 6}, random_tensor({4, 5, 6}, rng).value());
  Conv2d<double> conv(p, "conv", 4, 4, 3, rng);
  Conv2d<double> down(p, "down", 4, 6, 3, rng, true, 2);
  Conv2d<double> proj(p, "proj", 6, 2, 1, rng, false);
  GroupNorm<double> gn(p, "gn", 4, 2);
  auto target = random_tensor({2, 3, 3}, rng);
  auto loss = [&] {
    auto h = silu(gn(conv(x)));
    h = tanh(down(h));
    h = sigmoid(proj(h));
    return l1_loss(h, target, 1e-8);
  };
  auto r = oracle::check_gradients(p, loss);
  EXPECT_LT(r.max_rel_error, 1e-5) << "abs " << r.max_abs_error;
}

TEST(NnOps, AttentionAndShapeOpsGradients) {
  RngState rng(11);
  ParameterStore<double> p;
  auto a = p.create("a", {3, 2, 2}, random_tensor({3, 2, 2}, rng).value());
  auto b = p.create("b", {3, 2, 2}, random_tensor({3, 2, 2}, rng).value());
  auto v = p.create("v", {3}, random_tensor({3}, rng).value());
  auto w = p.create("w", {4, 5}, random_tensor({4, 5}, rng).value());
  auto loss = [&] {
    auto qa = reshape(a, {3, 4});
    auto kb = reshape(b, {3, 4});
    auto s = softmax_rows(scale(matmul(qa, kb, true, false), 0.5));
    auto att = matmul(kb, s, false, true);
    auto y = add_channel(add(reshape(att, {3, 2, 2}), mul_channel(mul(a, b), v)), v);
    auto u = upsample2(concat<double>({slice(y, 0, 2), sub(a, b)}));
    auto m = matmul(w, reshape(u, {5, 16}));
    return mean(mul(m, m));
  };
  auto r = oracle::check_gradients(p, loss);
  EXPECT_LT(r.max_rel_error, 1e-5) << "abs " << r.max_abs_error;
}

TEST(NnOps, SoftmaxRowsSumToOne) {
  RngState rng(3);
  auto s = softmax_rows(random_tensor({5, 9}, rng, 10.0));
  for (int r = 0; r < 5; ++r) {
    double total = 0;
    for (int j = 0; j < 9; ++j) total += s.value()[r * 9 + j];
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(NnOps, ConvMatchesDirectSum) {
  RngState rng(5);
  auto x = random_tensor({2, 4, 5}, rng);
  auto w = random_tensor({3, 2, 3, 3}, rng);
  auto b = random_tensor({3}, rng);
  auto y = conv2d(x, w, b, 1);
  for (int co = 0; co < 3; ++co)
    for (int oy = 0; oy < 4; ++oy)
      for (int ox = 0; ox < 5; ++ox) {
        double s = b.value()[co];
        for (int ci = 0; ci < 2; ++ci)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const int iy = oy + ky - 1, ix = ox + kx - 1;
              if (iy < 0 || iy >= 4 || ix < 0 || ix >= 5) continue;
              s += w.value()[((co * 2 + ci) * 3 + ky) * 3 + kx] * x.value()[(ci * 4 + iy) * 5 + ix];
            }
        EXPECT_NEAR(y.value()[(co * 4 + oy) * 5 + ox], s, 1e-12);
      }
}

TEST(NnOps, NoGradGuardSkipsGraph) {
  ParameterStore<double> p;
  auto a = p.create("a", {2}, {1.0, 2.0});
  NoGradGuard guard;
  auto y = mul(a, a);
  EXPECT_FALSE(y.requires_grad());
}
