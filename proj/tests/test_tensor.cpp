// Copyright 2026 The bifas Authors
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

#include <catch2/catch_amalgamated.hpp>

#include "bifas/gradcheck.hpp"
#include "bifas/rng.hpp"
#include "bifas/tensor.hpp"
#include "oracles.hpp"

using namespace bifas;

namespace {

template <typename T>
TensorT<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<T> data(shape_numel(shape));
  for (auto& v : data) v = static_cast<T>(rng.uniform(lo, hi));
  return TensorT<T>::from_data(std::move(shape), std::move(data));
}

std::vector<double> to_doubles(std::span<const float> v) {
  return std::vector<double>(v.begin(), v.end());
}

}  // namespace

TEST_CASE("tensor invariants") {
  auto t = Tensor::zeros({2, 3, 4});
  REQUIRE(t.numel() == 24);
  REQUIRE(t.shape() == Shape{2, 3, 4});
  REQUIRE_THROWS_AS(Tensor::from_data({2, 2}, {1.f, 2.f, 3.f}), TensorError);

  auto s = Tensor::scalar(5.f);
  REQUIRE(s.numel() == 1);
  REQUIRE(s.item() == 5.f);
}

TEST_CASE("conv2d identity kernel") {
  // center-1 kernel must pass the input through unchanged
  Rng rng(1);
  auto x = random_tensor<float>({1, 1, 3, 3}, rng);
  std::vector<float> w(9, 0.f);
  w[4] = 1.f;
  auto weight = Tensor::from_data({1, 1, 3, 3}, w);
  auto bias = Tensor::zeros({1});
  auto y = conv2d(x, ConvSpec::same(1, 1), weight, bias);
  for (std::size_t i = 0; i < 9; ++i)
    REQUIRE(y.values()[i] == Catch::Approx(x.values()[i]).margin(1e-7));
}

TEST_CASE("conv2d all-ones counts neighborhood") {
  auto x = Tensor::full({1, 1, 3, 3}, 1.f);
  auto weight = Tensor::full({1, 1, 3, 3}, 1.f);
  auto bias = Tensor::zeros({1});
  auto y = conv2d(x, ConvSpec::same(1, 1), weight, bias);
  REQUIRE(y.at(0, 0, 1, 1) == Catch::Approx(9.f));
  REQUIRE(y.at(0, 0, 0, 0) == Catch::Approx(4.f));
  REQUIRE(y.at(0, 0, 0, 2) == Catch::Approx(4.f));
  REQUIRE(y.at(0, 0, 2, 0) == Catch::Approx(4.f));
  REQUIRE(y.at(0, 0, 0, 1) == Catch::Approx(6.f));
}

TEST_CASE("conv2d matches nested-loop reference on random instances") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    auto x = random_tensor<float>({2, 3, 5, 5}, rng);
    auto w = random_tensor<float>({4, 3, 3, 3}, rng);
    auto b = random_tensor<float>({4}, rng);
    auto y = conv2d(x, ConvSpec::same(3, 4), w, b);
    auto ref = oracle::conv2d(to_doubles(x.values()), 2, 3, 5, 5, to_doubles(w.values()),
                              4, 3, to_doubles(b.values()));
    for (std::size_t i = 0; i < ref.size(); ++i)
      REQUIRE(y.values()[i] == Catch::Approx(ref[i]).margin(1e-5));
  }
}

TEST_CASE("conv2d rejects mismatched shapes") {
  auto x = Tensor::zeros({1, 2, 4, 4});
  auto w = Tensor::zeros({3, 2, 3, 3});
  auto b = Tensor::zeros({3});
  REQUIRE_THROWS_AS(conv2d(x, ConvSpec::same(3, 3), w, b), TensorError);
  auto wbad = Tensor::zeros({3, 2, 3, 5});
  REQUIRE_THROWS_AS(conv2d(x, ConvSpec::same(2, 3), wbad, b), TensorError);
  auto bbad = Tensor::zeros({4});
  REQUIRE_THROWS_AS(conv2d(x, ConvSpec::same(2, 3), w, bbad), TensorError);
}

TEST_CASE("maxpool2 basics") {
  auto x = Tensor::from_data({1, 1, 2, 2}, {1.f, 2.f, 3.f, 4.f});
  auto y = maxpool2(x);
  REQUIRE(y.numel() == 1);
  REQUIRE(y.values()[0] == 4.f);

  auto c = Tensor::full({1, 2, 4, 4}, 0.75f);
  auto yc = maxpool2(c);
  REQUIRE(yc.shape() == Shape{1, 2, 2, 2});
  for (float v : yc.values()) REQUIRE(v == 0.75f);

  REQUIRE_THROWS_AS(maxpool2(Tensor::zeros({1, 1, 3, 4})), TensorError);
}

TEST_CASE("maxpool2 matches nested-loop reference") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed + 11);
    auto x = random_tensor<float>({1, 1, 8, 8}, rng);
    auto y = maxpool2(x);
    auto ref = oracle::maxpool2(to_doubles(x.values()), 1, 1, 8, 8);
    for (std::size_t i = 0; i < ref.size(); ++i)
      REQUIRE(y.values()[i] == static_cast<float>(ref[i]));
  }
}

TEST_CASE("maxpool2 ties route gradient to first occurrence") {
  auto x = TensorT<double>::from_data({1, 1, 2, 2}, {2.0, 2.0, 2.0, 2.0});
  auto y = maxpool2(x);
  auto loss = sum(y);
  loss.backward();
  REQUIRE(x.grad()[0] == 1.0);
  REQUIRE(x.grad()[1] == 0.0);
  REQUIRE(x.grad()[2] == 0.0);
  REQUIRE(x.grad()[3] == 0.0);
}

TEST_CASE("elementwise activations") {
  auto x = Tensor::from_data({3}, {-1.f, 0.f, 2.f});
  auto y = relu(x);
  REQUIRE(y.values()[0] == 0.f);
  REQUIRE(y.values()[1] == 0.f);
  REQUIRE(y.values()[2] == 2.f);

  auto s = sigmoid(Tensor::scalar(0.f));
  REQUIRE(s.item() == Catch::Approx(0.5f));
}

TEST_CASE("softmax_channel equal logits and normalization") {
  const std::size_t K2 = 25;
  auto x = Tensor::full({1, K2, 2, 2}, 3.25f);
  auto y = softmax_channel(x);
  for (float v : y.values()) REQUIRE(v == Catch::Approx(1.f / 25.f).margin(1e-6));

  Rng rng(3);
  auto z = random_tensor<float>({2, 7, 3, 3}, rng, -4.0, 4.0);
  auto sz = softmax_channel(z);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t s = 0; s < 9; ++s) {
      float total = 0.f;
      for (std::size_t c = 0; c < 7; ++c) total += sz.values()[(n * 7 + c) * 9 + s];
      REQUIRE(total == Catch::Approx(1.f).margin(1e-6));
    }
  for (float v : sz.values()) REQUIRE(v > 0.f);
}

TEST_CASE("backward on sum gives ones") {
  auto x = TensorT<double>::from_data({4}, {1.0, -2.0, 3.0, 0.5});
  auto loss = sum(x);
  loss.backward();
  for (double g : x.grad()) REQUIRE(g == 1.0);
}

TEST_CASE("backward through x*x") {
  auto x = TensorT<double>::from_data({1}, {3.0});
  auto loss = sum(mul(x, x));
  loss.backward();
  REQUIRE(x.grad()[0] == Catch::Approx(6.0));
}

TEST_CASE("backward rejects non-scalar loss") {
  auto x = Tensor::zeros({2, 2});
  REQUIRE_THROWS_AS(x.backward(), TensorError);
}

TEST_CASE("gradient accumulation across uses is exact") {
  Rng rng(17);
  auto x = random_tensor<double>({6}, rng);

  // y = sum(x) + sum(x*x); the two paths must add exactly
  auto both = add(sum(x), sum(mul(x, x)));
  both.backward();
  std::vector<double> combined(x.grad().begin(), x.grad().end());

  x.zero_grad();
  sum(x).backward();
  std::vector<double> g1(x.grad().begin(), x.grad().end());
  x.zero_grad();
  sum(mul(x, x)).backward();
  std::vector<double> g2(x.grad().begin(), x.grad().end());

  for (std::size_t i = 0; i < 6; ++i) REQUIRE(combined[i] == g1[i] + g2[i]);
}

TEST_CASE("gradcheck: linear function is exact") {
  Rng rng(5);
  auto x = random_tensor<double>({8}, rng);
  const double err = gradcheck(
      [](const std::vector<TensorT<double>>& in) { return sum(scale(in[0], 3.0)); }, {x});
  REQUIRE(err < 1e-9);
}

TEST_CASE("gradcheck: conv2d parameters") {
  Rng rng(6);
  auto x = random_tensor<double>({1, 2, 5, 5}, rng);
  auto w = random_tensor<double>({3, 2, 3, 3}, rng);
  auto b = random_tensor<double>({3}, rng);
  const auto fn = [](const std::vector<TensorT<double>>& in) {
    return mean(conv2d(in[0], ConvSpec::same(2, 3), in[1], in[2]));
  };
  REQUIRE(gradcheck(fn, {x, w, b}, 1e-4) < 1e-4);
}

TEST_CASE("gradcheck: relu away from the kink") {
  std::vector<double> data;
  Rng rng(7);
  for (int i = 0; i < 16; ++i) {
    double v = rng.uniform(0.2, 1.0);
    if (rng.uniform() < 0.5) v = -v;
    data.push_back(v);
  }
  auto x = TensorT<double>::from_data({16}, data);
  const double err = gradcheck(
      [](const std::vector<TensorT<double>>& in) { return sum(relu(in[0])); }, {x}, 1e-4);
  REQUIRE(err < 1e-6);
}

TEST_CASE("gradcheck: composite conv-relu-mean graph") {
  Rng rng(8);
  auto x = random_tensor<double>({1, 2, 6, 6}, rng, 0.1, 1.0);
  auto w = random_tensor<double>({2, 2, 3, 3}, rng, 0.1, 0.9);
  auto b = random_tensor<double>({2}, rng, 0.05, 0.4);
  const auto fn = [](const std::vector<TensorT<double>>& in) {
    return mean(relu(conv2d(in[0], ConvSpec::same(2, 2), in[1], in[2])));
  };
  REQUIRE(gradcheck(fn, {x, w, b}, 1e-4) < 1e-3);
}

TEST_CASE("gradcheck: remaining differentiable ops") {
  Rng rng(9);
  auto x = random_tensor<double>({1, 3, 4, 4}, rng);
  auto y = random_tensor<double>({1, 3, 4, 4}, rng);

  REQUIRE(gradcheck([](const std::vector<TensorT<double>>& in) {
            return mean(sigmoid(in[0]));
          }, {x}) < 1e-3);
  REQUIRE(gradcheck([](const std::vector<TensorT<double>>& in) {
            return mean(softmax_channel(in[0]));
          }, {x}) < 1e-3);
  REQUIRE(gradcheck([](const std::vector<TensorT<double>>& in) {
            return mean(mul(in[0], in[1]));
          }, {x, y}) < 1e-3);
  REQUIRE(gradcheck([](const std::vector<TensorT<double>>& in) {
            return mean(sub(in[0], in[1]));
          }, {x, y}) < 1e-3);
  REQUIRE(gradcheck([](const std::vector<TensorT<double>>& in) {
            return mean(avgpool(in[0], 2));
          }, {x}) < 1e-3);
  REQUIRE(gradcheck([](const std::vector<TensorT<double>>& in) {
            return mean(concat_channels<double>({in[0], in[1]}));
          }, {x, y}) < 1e-3);
  // maxpool checked on well-separated values so the argmax is stable
  auto xs = random_tensor<double>({1, 1, 4, 4}, rng, 0.0, 1.0);
  for (std::size_t i = 0; i < xs.numel(); ++i) xs.values()[i] += 2.0 * static_cast<double>(i);
  REQUIRE(gradcheck([](const std::vector<TensorT<double>>& in) {
            return mean(maxpool2(in[0]));
          }, {xs}) < 1e-3);
}

TEST_CASE("forward determinism") {
  Rng rng(10);
  auto x = random_tensor<float>({1, 2, 6, 6}, rng);
  auto w = random_tensor<float>({2, 2, 3, 3}, rng);
  auto b = random_tensor<float>({2}, rng);
  auto y1 = conv2d(x, ConvSpec::same(2, 2), w, b);
  auto y2 = conv2d(x, ConvSpec::same(2, 2), w, b);
  for (std::size_t i = 0; i < y1.numel(); ++i) REQUIRE(y1.values()[i] == y2.values()[i]);
}
