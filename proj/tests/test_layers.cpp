/*
Copyright 2026 The Declip Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
#include <catch2/catch_amalgamated.hpp>
#include <functional>

#include "declip/nn/layers.hpp"
#include "declip/rng.hpp"

using namespace declip;
using namespace declip::nn;

namespace {

Tensor<double> random_tensor(Rng& rng, int n, int c, int h, int w, double scale = 1.0) {
  Tensor<double> t(n, c, h, w);
  for (auto& v : t.v) v = rng.normal() * scale;
  return t;
}

double dot_cost(const Tensor<double>& y, const Tensor<double>& c) {
  double s = 0;
  for (size_t i = 0; i < y.v.size(); ++i) s += y.v[i] * c.v[i];
  return s;
}

/// Central finite difference of a scalar function against an analytic
/// gradient, elementwise, with a mixed relative/absolute tolerance.
void check_grad(std::vector<double>& values, const std::vector<double>& analytic,
                const std::function<double()>& loss, double h = 1e-6, double tol = 1e-5) {
  REQUIRE(values.size() == analytic.size());
  for (size_t i = 0; i < values.size(); ++i) {
    const double keep = values[i];
    values[i] = keep + h;
    const double up = loss();
    values[i] = keep - h;
    const double down = loss();
    values[i] = keep;
    const double fd = (up - down) / (2 * h);
    const double denom = std::max({1e-6, std::fabs(fd), std::fabs(analytic[i])});
    INFO("index " << i << " fd=" << fd << " analytic=" << analytic[i]);
    REQUIRE(std::fabs(fd - analytic[i]) / denom < tol);
  }
}

void conv_case(bool transposed, int stride) {
  Rng rng(17 + stride + (transposed ? 10 : 0));
  Conv2d<double> conv(2, 3, 3, stride, transposed);
  conv.init_he(rng);
  for (auto& b : conv.b) b = rng.normal() * 0.1;

  Tensor<double> x = random_tensor(rng, 2, 2, 5, 6);
  const auto [ho, wo] = conv.out_dims(5, 6);
  Tensor<double> cost = random_tensor(rng, 2, 3, ho, wo);

  const auto loss = [&] { return dot_cost(conv.eval(x), cost); };

  conv.zero_grad();
  conv.forward(x, true);
  Tensor<double> dx = conv.backward(cost);

  check_grad(x.v, dx.v, loss);
  check_grad(conv.w, conv.dw, loss);
  check_grad(conv.b, conv.db, loss);
}

}  // namespace

TEST_CASE("convolution gradients match finite differences", "[layers]") {
  conv_case(false, 1);
  conv_case(false, 2);
}

TEST_CASE("transposed convolution gradients match finite differences", "[layers]") {
  conv_case(true, 1);
  conv_case(true, 2);
}

TEST_CASE("transposed convolution doubles spatial extent at stride 2", "[layers]") {
  Conv2d<double> conv(4, 2, 3, 2, true);
  Tensor<double> x(1, 4, 5, 7);
  const Tensor<double> y = conv.eval(x);
  REQUIRE(y.h == 10);
  REQUIRE(y.w == 14);
}

TEST_CASE("batch norm training gradients match finite differences", "[layers]") {
  Rng rng(23);
  BatchNorm2d<double> bn(3);
  for (auto& g : bn.gamma) g = 0.5 + rng.uniform_real();
  for (auto& b : bn.beta) b = rng.normal() * 0.2;

  Tensor<double> x = random_tensor(rng, 2, 3, 4, 4);
  Tensor<double> cost = random_tensor(rng, 2, 3, 4, 4);

  const auto loss = [&] { return dot_cost(bn.eval_batchstats(x), cost); };

  bn.zero_grad();
  bn.forward_train(x, /*update_running=*/false);
  Tensor<double> dx = bn.backward(cost);

  check_grad(x.v, dx.v, loss, 1e-6, 1e-4);
  check_grad(bn.gamma, bn.dgamma, loss);
  check_grad(bn.beta, bn.dbeta, loss);
}

TEST_CASE("batch norm eval uses running statistics", "[layers]") {
  BatchNorm2d<double> bn(1);
  bn.running_mean[0] = 0.5;
  bn.running_var[0] = 4.0;
  bn.gamma[0] = 2.0;
  bn.beta[0] = 1.0;
  Tensor<double> x(1, 1, 1, 2);
  x.v = {0.5, 2.5};
  const Tensor<double> y = bn.eval(x);
  CHECK(y.v[0] == Catch::Approx(1.0).margin(1e-5));          // centered value -> beta
  CHECK(y.v[1] == Catch::Approx(1.0 + 2.0 * (2.0 / std::sqrt(4.0 + 1e-5))).margin(1e-4));
}

TEST_CASE("batch norm training forward matches its stateless twin bit-exactly", "[layers]") {
  Rng rng(29);
  BatchNorm2d<double> bn(4);
  for (auto& g : bn.gamma) g = 0.5 + rng.uniform_real();
  Tensor<double> x = random_tensor(rng, 3, 4, 5, 5);
  const Tensor<double> a = bn.forward_train(x, false);
  const Tensor<double> b = bn.eval_batchstats(x);
  REQUIRE(a.v == b.v);
}

TEST_CASE("elu and relu gradients match finite differences", "[layers]") {
  Rng rng(31);
  Tensor<double> x = random_tensor(rng, 1, 2, 3, 3);
  Tensor<double> cost = random_tensor(rng, 1, 2, 3, 3);

  SECTION("elu") {
    Elu<double> act;
    const auto loss = [&] { return dot_cost(Elu<double>::eval_static(x), cost); };
    act.forward(x, true);
    Tensor<double> dx = act.backward(cost);
    check_grad(x.v, dx.v, loss);
  }

  SECTION("relu") {
    Relu<double> act;
    const auto loss = [&] {
      Relu<double> fresh;
      return dot_cost(fresh.forward(x, false), cost);
    };
    act.forward(x, true);
    Tensor<double> dx = act.backward(cost);
    check_grad(x.v, dx.v, loss);
  }
}

TEST_CASE("max pool gradients match finite differences", "[layers]") {
  Rng rng(37);
  // Distinct values keep the argmax stable under the probe step.
  Tensor<double> x(1, 2, 4, 4);
  std::vector<size_t> order(x.v.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  for (size_t i = 0; i < x.v.size(); ++i) x.v[i] = static_cast<double>(order[i]) * 0.1;

  Tensor<double> cost = random_tensor(rng, 1, 2, 2, 2);
  MaxPool2x2<double> pool;
  const auto loss = [&] {
    MaxPool2x2<double> fresh;
    return dot_cost(fresh.forward(x, false), cost);
  };
  pool.forward(x, true);
  Tensor<double> dx = pool.backward(cost);
  check_grad(x.v, dx.v, loss);
}

TEST_CASE("linear and global average pool gradients match finite differences", "[layers]") {
  Rng rng(41);

  SECTION("linear") {
    Linear<double> lin(5, 3);
    lin.init_he(rng);
    for (auto& b : lin.b) b = rng.normal() * 0.1;
    Tensor<double> x = random_tensor(rng, 4, 5, 1, 1);
    Tensor<double> cost = random_tensor(rng, 4, 3, 1, 1);
    const auto loss = [&] { return dot_cost(lin.eval(x), cost); };
    lin.zero_grad();
    lin.forward(x, true);
    Tensor<double> dx = lin.backward(cost);
    check_grad(x.v, dx.v, loss);
    check_grad(lin.w, lin.dw, loss);
    check_grad(lin.b, lin.db, loss);
  }

  SECTION("global average pool") {
    Tensor<double> x = random_tensor(rng, 2, 3, 4, 4);
    Tensor<double> cost = random_tensor(rng, 2, 3, 1, 1);
    GlobalAvgPool<double> gap;
    const auto loss = [&] { return dot_cost(GlobalAvgPool<double>::eval_static(x), cost); };
    gap.forward(x, true);
    Tensor<double> dx = gap.backward(cost);
    check_grad(x.v, dx.v, loss);
  }
}

TEST_CASE("im2col and col2im are adjoint", "[layers]") {
  Rng rng(43);
  const int c = 2, h = 5, w = 4, k = 3, stride = 2, pad = 1;
  const int ho = conv_out_extent(h, k, stride, pad), wo = conv_out_extent(w, k, stride, pad);
  const size_t cols_size = static_cast<size_t>(c) * k * k * ho * wo;

  std::vector<double> a(static_cast<size_t>(c) * h * w), b(cols_size);
  for (auto& v : a) v = rng.normal();
  for (auto& v : b) v = rng.normal();

  // <im2col(a), b> == <a, col2im(b)>
  std::vector<double> a_cols(cols_size);
  im2col(a.data(), c, h, w, k, stride, pad, a_cols.data());
  double lhs = 0;
  for (size_t i = 0; i < cols_size; ++i) lhs += a_cols[i] * b[i];

  std::vector<double> b_img(a.size(), 0.0);
  col2im(b.data(), c, h, w, k, stride, pad, b_img.data());
  double rhs = 0;
  for (size_t i = 0; i < a.size(); ++i) rhs += a[i] * b_img[i];

  REQUIRE(lhs == Catch::Approx(rhs).epsilon(1e-12));
}
