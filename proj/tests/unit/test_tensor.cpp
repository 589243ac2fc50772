// Copyright 2026 The WDDA Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <limits>
#include <vector>

#include <doctest.h>

#include "oracles.hpp"
#include "wdda/ops.hpp"
#include "wdda/tensor.hpp"

namespace wdda {
namespace {

using testing::max_abs_diff;
using testing::random_tensor;

std::vector<double> values(const Tensor& t) {
  return {t.data().begin(), t.data().end()};
}

std::vector<double> values_of_grad(const Tensor& t) {
  return {t.grad().begin(), t.grad().end()};
}

TEST_SUITE("tensor_autodiff") {

TEST_CASE("shape and data length must agree") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  CHECK_THROWS_AS(Tensor({-1}, {}), ShapeError);
  Tensor t({2, 3}, std::vector<double>(6, 1.0));
  CHECK(t.numel() == 6);
  CHECK(t.rank() == 2);
}

TEST_CASE("non-finite values are rejected") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(Tensor({1}, {nan}), NumericError);

  // A poisoned leaf surfaces at the first operation that reads it.
  Tensor x = Tensor::zeros({1, 1, 2, 2});
  x.mutable_data()[3] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(leaky_relu(x), NumericError);
  CHECK_THROWS_AS(max_pool2d(x, 2, 2, 0), NumericError);
  Tensor w = Tensor::full({1, 1, 1, 1}, 1.0);
  CHECK_THROWS_AS(conv2d(x, w, Tensor(), 1, 0), NumericError);
}

TEST_CASE("conv2d on ones sums the window") {
  Tensor x = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor k = Tensor::full({1, 1, 2, 2}, 1.0);
  Tensor y = conv2d(x, k, Tensor::zeros({1}), 1, 0);
  CHECK(y.shape() == Shape{1, 1, 2, 2});
  for (double v : y.data()) CHECK(v == 4.0);
}

TEST_CASE("conv2d with an identity 1x1 kernel is the identity") {
  Rng rng(1);
  Tensor x = random_tensor({2, 3, 4, 5}, rng);
  std::vector<double> eye(9, 0.0);
  for (int i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0;
  Tensor k({3, 3, 1, 1}, eye);
  Tensor y = conv2d(x, k, Tensor(), 1, 0);
  CHECK(values(y) == values(x));
}

TEST_CASE("conv2d matches the nested-loop oracle") {
  Rng rng(2);
  Tensor x = random_tensor({1, 2, 5, 5}, rng);
  Tensor k = random_tensor({3, 2, 3, 3}, rng);
  Tensor b = random_tensor({3}, rng);
  Tensor y = conv2d(x, k, b, 2, 1);
  CHECK(y.shape() == Shape{1, 3, 3, 3});
  CHECK(max_abs_diff(y.data(), testing::naive_conv2d(x, k, b, 2, 1)) < 1e-6);

  for (int trial = 0; trial < 100; ++trial) {
    const int n = rng.uniform_int(1, 2), ci = rng.uniform_int(1, 4),
              co = rng.uniform_int(1, 4), kk = rng.uniform_int(1, 3),
              stride = rng.uniform_int(1, 2), pad = rng.uniform_int(0, 1);
    const int h = rng.uniform_int(kk, 7), w = rng.uniform_int(kk, 7);
    Tensor xi = random_tensor({n, ci, h, w}, rng);
    Tensor ki = random_tensor({co, ci, kk, kk}, rng);
    Tensor bi = random_tensor({co}, rng);
    Tensor yi = conv2d(xi, ki, bi, stride, pad);
    REQUIRE(max_abs_diff(yi.data(),
                         testing::naive_conv2d(xi, ki, bi, stride, pad)) <
            1e-6);
  }
}

TEST_CASE("conv2d names the mismatched dimension") {
  Tensor x = Tensor::zeros({1, 2, 4, 4});
  Tensor k = Tensor::zeros({1, 3, 3, 3});
  try {
    conv2d(x, k, Tensor(), 1, 0);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("channel") != std::string::npos);
  }
  CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 1, 2, 2}),
                         Tensor::zeros({1, 1, 3, 3}), Tensor(), 1, 0),
                  ShapeError);
}

TEST_CASE("max_pool2d picks the window maximum") {
  Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor y = max_pool2d(x, 2, 2, 0);
  CHECK(values(y) == std::vector<double>{4});

  Rng rng(3);
  Tensor r = random_tensor({1, 1, 6, 6}, rng);
  CHECK(values(max_pool2d(r, 2, 2, 0)) == testing::naive_max_pool(r, 2, 2));
}

TEST_CASE("max_pool2d ties route gradient to the first element") {
  Tensor x = Tensor::full({1, 1, 4, 4}, 0.5, true);
  sum(max_pool2d(x, 2, 2, 0)).backward();
  const auto g = x.grad();
  for (int i = 0; i < 16; ++i) {
    const int r = i / 4, c = i % 4;
    CHECK(g[i] == ((r % 2 == 0 && c % 2 == 0) ? 1.0 : 0.0));
  }
}

TEST_CASE("leaky_relu values and derivative") {
  Tensor x({3}, {-1, 0, 2}, true);
  Tensor y = leaky_relu(x, 0.2);
  CHECK(y.data()[0] == doctest::Approx(-0.2));
  CHECK(y.data()[1] == 0.0);
  CHECK(y.data()[2] == 2.0);
  sum(y).backward();
  CHECK(x.grad()[0] == doctest::Approx(0.2));
  CHECK(x.grad()[1] == 1.0);
  CHECK(x.grad()[2] == 1.0);

  Rng rng(4);
  Tensor r = random_tensor({10}, rng);
  CHECK(values(leaky_relu(r, 1.0)) == values(r));
}

TEST_CASE("linear against examples and the loop oracle") {
  Tensor x({1, 2}, {1, 2});
  Tensor w({2, 2}, {1, 0, 0, 1});
  CHECK(values(linear(x, w, Tensor({2}, {10, 10}))) ==
        std::vector<double>{11, 12});
  CHECK(values(linear(x, w, Tensor::zeros({2}))) == values(x));
  CHECK_THROWS_AS(linear(x, Tensor::zeros({3, 2}), Tensor()), ShapeError);

  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = rng.uniform_int(1, 5), d = rng.uniform_int(1, 9),
              k = rng.uniform_int(1, 6);
    Tensor xi = random_tensor({n, d}, rng);
    Tensor wi = random_tensor({d, k}, rng);
    Tensor bi = random_tensor({k}, rng);
    REQUIRE(max_abs_diff(linear(xi, wi, bi).data(),
                         testing::naive_linear(xi, wi, bi)) < 1e-6);
  }
}

TEST_CASE("reductions and their broadcast gradients") {
  Tensor x({3}, {1, 2, 3});
  CHECK(mean(x).item() == 2.0);
  const std::vector<int> none;
  CHECK(values(reduce_mean(x, none)) == values(x));

  Tensor v({4}, {1, -1, 3, 7}, true);
  mean(v).backward();
  for (double g : v.grad()) CHECK(g == 0.25);

  Tensor m({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  const std::vector<int> axis1{1};
  Tensor s = reduce_sum(m, axis1);
  CHECK(values(s) == std::vector<double>{6, 15});
  sum(reduce_mean(m, axis1)).backward();
  for (double g : m.grad()) CHECK(g == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("gather picks flat elements and scatters gradients back") {
  Tensor x({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  const std::vector<std::size_t> idx{5, 0, 5};
  const Tensor g = gather(x, idx);
  CHECK(g.shape() == Shape{3});
  CHECK(values(g) == std::vector<double>{6, 1, 6});
  sum(g).backward();
  CHECK(values_of_grad(x) == std::vector<double>{1, 0, 0, 0, 0, 2});
  const std::vector<std::size_t> bad{6};
  CHECK_THROWS_AS(gather(x, bad), ShapeError);
}

TEST_CASE("losses are numerically stable") {
  const std::vector<int> label0{0};
  Tensor logits({1, 2}, {1000, -1000});
  CHECK(softmax_cross_entropy(logits, label0).item() ==
        doctest::Approx(0.0).epsilon(1e-6));
  const std::vector<double> half{0.5};
  CHECK(sigmoid_bce(Tensor({1}, {0.0}), half).item() ==
        doctest::Approx(std::log(2.0)));
  const std::vector<double> one{1.0};
  CHECK(std::isfinite(sigmoid_bce(Tensor({1}, {-800.0}), one).item()));
}

TEST_CASE("smooth_l1 is continuous across the beta boundary") {
  const double beta = 1.0 / 9.0;
  const std::vector<double> zero{0.0};
  auto f = [&](double x) {
    return smooth_l1(Tensor({1}, {x}), zero, beta).item();
  };
  auto df = [&](double x) {
    Tensor t({1}, {x}, true);
    smooth_l1(t, zero, beta).backward();
    return t.grad()[0];
  };
  CHECK(f(beta - 1e-9) == doctest::Approx(f(beta + 1e-9)).epsilon(1e-7));
  CHECK(df(beta - 1e-9) == doctest::Approx(df(beta + 1e-9)).epsilon(1e-6));
  CHECK(f(beta) == doctest::Approx(0.5 * beta));
  CHECK(f(2.0) == doctest::Approx(2.0 - 0.5 * beta));
  // Finite differences straddling the boundary agree with the derivative.
  const double h = 1e-6;
  CHECK((f(beta + h) - f(beta - h)) / (2 * h) ==
        doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("grad_check on a quadratic") {
  Tensor x({3}, {1, 2, 3});
  const double err =
      grad_check([](const Tensor& t) { return sum(mul(t, t)); }, x, 1e-3);
  CHECK(err < 1e-5);
}

TEST_CASE("grad_check on a conv kernel") {
  Rng rng(6);
  Tensor x = random_tensor({1, 2, 5, 5}, rng);
  Tensor k = random_tensor({2, 2, 3, 3}, rng);
  const double err = grad_check(
      [&](const Tensor& kk) {
        return sum(mul(conv2d(x, kk, Tensor(), 1, 1),
                       conv2d(x, kk, Tensor(), 1, 1)));
      },
      k, 1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("backward requires a scalar loss") {
  Tensor x({2}, {1, 2}, true);
  CHECK_THROWS_AS(scale(x, 2.0).backward(), ShapeError);
}

TEST_CASE("gradients accumulate across backward calls") {
  Rng rng(7);
  Tensor w = random_tensor({3, 2}, rng, -1, 1, true);
  Tensor x = random_tensor({4, 3}, rng);
  auto loss_a = [&] { return sum(linear(x, w, Tensor())); };
  auto loss_b = [&] {
    Tensor y = linear(x, w, Tensor());
    return mean(mul(y, y));
  };

  loss_a().backward();
  const auto ga = values_of_grad(w);
  w.zero_grad();
  loss_b().backward();
  const auto gb = values_of_grad(w);
  w.zero_grad();
  add(loss_a(), loss_b()).backward();
  const auto gsum = values_of_grad(w);
  for (std::size_t i = 0; i < gsum.size(); ++i) {
    CHECK(gsum[i] == doctest::Approx(ga[i] + gb[i]).epsilon(1e-12));
  }

  // Two passes without reset double the gradient.
  w.zero_grad();
  loss_a().backward();
  loss_a().backward();
  for (std::size_t i = 0; i < ga.size(); ++i) CHECK(w.grad()[i] == 2 * ga[i]);
}

TEST_CASE("tape is topologically ordered") {
  Tensor a({2}, {1, 2}, true);
  Tensor b({2}, {3, 4}, true);
  Tensor c = mul(add(a, b), a);
  Tensor loss = sum(c);
  Tape tape = Tape::record(loss);
  const auto nodes = tape.nodes();
  REQUIRE(!nodes.empty());
  CHECK(nodes.back().impl() == loss.impl());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (const Tensor& in : nodes[i].inputs()) {
      bool earlier = false;
      for (std::size_t j = 0; j < i; ++j) {
        earlier = earlier || nodes[j].impl() == in.impl();
      }
      CHECK(earlier);
    }
  }
}

TEST_CASE("no-grad mode records nothing") {
  Tensor a({2}, {1, 2}, true);
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    Tensor b = scale(a, 3.0);
    CHECK_FALSE(b.requires_grad());
  }
  CHECK(grad_enabled());
}

TEST_CASE("gradient reversal op negates exactly") {
  Tensor x({2}, {1.5, -2}, true);
  Tensor y = gradient_reversal(x);
  CHECK(values(y) == values(x));
  sum(mul(y, Tensor({2}, {0.5, -1}))).backward();
  CHECK(values_of_grad(x) == std::vector<double>{-0.5, 1});
}

}  // TEST_SUITE

}  // namespace
}  // namespace wdda
