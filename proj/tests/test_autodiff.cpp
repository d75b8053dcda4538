// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "grad_suite.hpp"
#include "support.hpp"

using namespace vqt;
using namespace vqt::testing;

TEST_CASE("every op matches central differences", "[autodiff]") {
  auto cases = run_grad_suite(1234, 2);
  REQUIRE(cases.size() > 50);
  for (const auto& c : cases) {
    INFO(c.op << " " << c.shape << " rel " << c.check.max_rel);
    CHECK(c.check.max_rel < 1e-4);
  }
}

TEST_CASE("gradients accumulate over shared subexpressions", "[autodiff]") {
  auto x = Tensor::from({3}, {1.0, -2.0, 0.5}, true);
  auto y = mul(x, x);            // x used twice
  auto z = sum(add(y, x));       // and once more
  backward(z);
  for (std::size_t i = 0; i < 3; ++i) CHECK(x.grad()[i] == Catch::Approx(2 * x[i] + 1));
}

TEST_CASE("diamond graph visits each node once", "[autodiff]") {
  auto a = Tensor::from({2}, {1.0, 2.0}, true);
  auto b = sigmoid(a);
  auto c = add(mul(b, b), b);
  backward(sum(c));
  // a, b, mul, add, sum
  CHECK(last_backward_visit_count() == 5);
}

TEST_CASE("constants carry no graph", "[autodiff]") {
  auto a = Tensor::from({2}, {1.0, 2.0});
  auto b = add(a, a);
  CHECK_FALSE(b.requires_grad());
  CHECK(b.node()->inputs.empty());
}

TEST_CASE("stop_gradient blocks the backward pass", "[autodiff]") {
  auto a = Tensor::from({2}, {1.0, 2.0}, true);
  auto b = Tensor::from({2}, {3.0, 4.0}, true);
  auto loss = sum(mul(stop_gradient(a), b));
  backward(loss);
  CHECK_FALSE(a.has_grad());
  CHECK(b.grad()[0] == 1.0);
  CHECK(b.grad()[1] == 2.0);
}

TEST_CASE("shape mismatches name both shapes", "[autodiff]") {
  auto a = Tensor::zeros({2, 3});
  auto b = Tensor::zeros({3, 2});
  try {
    add(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2 x 3]") != std::string::npos);
    CHECK(msg.find("[3 x 2]") != std::string::npos);
  }
  CHECK_THROWS_AS(backward(a), DimensionError);
}

TEST_CASE("conv1d agrees with a direct loop", "[autodiff][conv]") {
  std::mt19937_64 rng(5);
  auto x = random_tensor({2, 11}, rng, -1, 1, false);
  auto w = random_tensor({3, 2, 4}, rng, -1, 1, false);
  auto b = random_tensor({3}, rng, -1, 1, false);
  const std::size_t stride = 2, pad = 1;
  auto y = conv1d(x, w, b, stride, pad);
  const std::size_t t_out = (11 + 2 * pad - 4) / stride + 1;
  REQUIRE(y.shape() == Shape{3, t_out});
  for (std::size_t o = 0; o < 3; ++o) {
    for (std::size_t t = 0; t < t_out; ++t) {
      double acc = b[o];
      for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t k = 0; k < 4; ++k) {
          const long idx = static_cast<long>(t * stride + k) - static_cast<long>(pad);
          if (idx >= 0 && idx < 11) acc += w[(o * 2 + c) * 4 + k] * x[c * 11 + static_cast<std::size_t>(idx)];
        }
      CHECK(y[o * t_out + t] == Catch::Approx(acc).margin(1e-12));
    }
  }
}

TEST_CASE("transposed_conv1d is the adjoint of conv1d", "[autodiff][conv]") {
  std::mt19937_64 rng(6);
  auto x = random_tensor({2, 13}, rng, -1, 1, false);
  auto w = random_tensor({3, 2, 5}, rng, -1, 1, false);
  auto y = conv1d(x, w, 2);
  auto u = random_tensor(y.shape(), rng, -1, 1, false);
  auto xt = transposed_conv1d(u, w, 2);
  // <conv(x), u> == <x, conv^T(u)> on the overlapping support
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < y.numel(); ++i) lhs += y[i] * u[i];
  const std::size_t len = xt.dim(1);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t t = 0; t < len; ++t) rhs += x[c * 13 + t] * xt[c * len + t];
  CHECK(lhs == Catch::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("gru gate order follows reset, update, candidate", "[autodiff][gru]") {
  // H = D = 1 with hand-picked weights: r = s(0.5 x), u = s(h), n = tanh(x + r * 2h)
  auto p = GruParams{Tensor::from({3, 1}, {0.5, 0.0, 1.0}), Tensor::from({3, 1}, {0.0, 1.0, 2.0}),
                     Tensor::zeros({3}), Tensor::zeros({3})};
  const double x = 0.7, h = -0.4;
  auto out = gru_cell(Tensor::from({1}, {x}), Tensor::from({1}, {h}), p);
  const double r = 1 / (1 + std::exp(-0.5 * x)), u = 1 / (1 + std::exp(-h));
  const double n = std::tanh(x + r * 2 * h);
  CHECK(out[0] == Catch::Approx((1 - u) * n + u * h).margin(1e-14));
}

TEST_CASE("softmax rows sum to one", "[autodiff]") {
  std::mt19937_64 rng(8);
  auto logits = random_tensor({5, 4}, rng, -30, 30, false);
  auto p = softmax_rows(logits);
  for (std::size_t r = 0; r < 5; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 4; ++c) s += p[r * 4 + c];
    CHECK(s == Catch::Approx(1.0).margin(1e-12));
  }
}
