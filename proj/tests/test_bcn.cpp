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

#include "bifas/bcn.hpp"
#include "bifas/gradcheck.hpp"
#include "bifas/model.hpp"
#include "oracles.hpp"

using namespace bifas;

namespace {

template <typename T>
TensorT<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<T> data(shape_numel(shape));
  for (auto& v : data) v = static_cast<T>(rng.uniform(lo, hi));
  return TensorT<T>::from_data(std::move(shape), std::move(data));
}

template <typename T>
void zero_params(ParamRegistry<T>& reg, const std::string& prefix) {
  for (auto& [name, t] : reg.items)
    if (name.rfind(prefix, 0) == 0)
      for (auto& v : t.values()) v = T(0);
}

BcnConfig tiny_bcn(std::size_t input = 32, std::size_t ch = 8) {
  BcnConfig cfg;
  cfg.input_size = input;
  cfg.stem_channels = ch;
  cfg.level_channels = {{{ch, ch, ch}, {ch, ch, ch}, {ch, ch, ch}}};
  return cfg;
}

// Expected parameter count computed by walking the configured shapes,
// independent of the registry.
std::size_t expected_param_count(const ModelConfig& cfg) {
  auto conv = [](std::size_t in, std::size_t out, std::size_t k) {
    return out * in * k * k + out;
  };
  std::size_t total = conv(3, cfg.bcn.stem_channels, 3);
  for (std::size_t l = 0; l < 3; ++l) {
    const auto& t = cfg.bcn.level_channels[l];
    const std::size_t in = cfg.bcn.level_in_channels(l);
    const std::size_t block = conv(in, t[0], 3) + conv(t[0], t[1], 3) + conv(t[1], t[2], 3);
    total += 2 * block;
  }
  for (std::size_t l = 0; l < 3; ++l) {
    const std::size_t c = cfg.bcn.level_channels[l][2];
    total += conv(c, cfg.mfrm.compressed_channels, 1);
    total += conv(cfg.mfrm.compressed_channels,
                  cfg.mfrm.kernel_size * cfg.mfrm.kernel_size, cfg.mfrm.encoder_kernel);
  }
  const std::size_t fused = cfg.bcn.fused_channels();
  auto head = [&](std::size_t out_ch) {
    std::size_t n = 0, c = fused;
    for (std::size_t hc : cfg.heads.channels) {
      n += conv(c, hc, 3);
      c = hc;
    }
    return n + conv(c, out_ch, 3);
  };
  total += head(1) + head(3) + head(cfg.heads.patch_classes);
  return total;
}

}  // namespace

TEST_CASE("conv_block zero params give zero output") {
  Rng rng(1);
  auto block = ConvBlock<float>::make(2, {3, 4, 3}, rng);
  for (auto& layer : block.convs) {
    for (auto& v : layer.weight.values()) v = 0.f;
    for (auto& v : layer.bias.values()) v = 0.f;
  }
  auto x = random_tensor<float>({1, 2, 6, 6}, rng);
  auto y = block(x);
  REQUIRE(y.shape() == Shape{1, 3, 6, 6});
  for (float v : y.values()) REQUIRE(v == 0.f);
}

TEST_CASE("conv_block identity init passes non-negative input through") {
  Rng rng(2);
  auto block = ConvBlock<float>::make(1, {1, 1, 1}, rng);
  for (auto& layer : block.convs) {
    for (auto& v : layer.weight.values()) v = 0.f;
    layer.weight.values()[4] = 1.f;  // center tap
    for (auto& v : layer.bias.values()) v = 0.f;
  }
  auto x = random_tensor<float>({1, 1, 5, 5}, rng, 0.0, 1.0);
  auto y = block(x);
  for (std::size_t i = 0; i < x.numel(); ++i)
    REQUIRE(y.values()[i] == Catch::Approx(x.values()[i]).margin(1e-7));
}

TEST_CASE("conv_block equals the composition of its convolutions") {
  Rng rng(3);
  auto block = ConvBlock<float>::make(2, {3, 5, 4}, rng);
  auto x = random_tensor<float>({1, 2, 7, 7}, rng);
  auto y = block(x);
  auto ref = relu(block.convs[2](relu(block.convs[1](relu(block.convs[0](x))))));
  for (std::size_t i = 0; i < y.numel(); ++i)
    REQUIRE(y.values()[i] == ref.values()[i]);
}

TEST_CASE("bilateral_conv_block constant input matches plain block") {
  Rng rng(4);
  BilateralConvBlock<float> bb;
  bb.block = ConvBlock<float>::make(2, {3, 3, 3}, rng);
  bb.dbo_params = DboParams{};
  auto x = TensorT<float>::full({1, 2, 6, 6}, 0.4f);
  auto with_dbo = bb(x);
  auto without = bb.block(x);
  for (std::size_t i = 0; i < with_dbo.numel(); ++i)
    REQUIRE(with_dbo.values()[i] == Catch::Approx(without.values()[i]).margin(1e-5));
}

TEST_CASE("bilateral_conv_block huge sigma_r equals block on box-filtered input") {
  Rng rng(5);
  BilateralConvBlock<float> bb;
  bb.block = ConvBlock<float>::make(1, {2, 2, 2}, rng);
  bb.dbo_params.sigma_r = 1e6;
  auto x = random_tensor<float>({1, 1, 6, 6}, rng, 0.0, 1.0);
  auto got = bb(x);

  auto boxed = oracle::boxfilter_clipped(
      std::vector<double>(x.values().begin(), x.values().end()), 1, 1, 6, 6, 3);
  std::vector<float> boxed_f(boxed.begin(), boxed.end());
  auto want = bb.block(TensorT<float>::from_data({1, 1, 6, 6}, boxed_f));
  for (std::size_t i = 0; i < got.numel(); ++i)
    REQUIRE(got.values()[i] == Catch::Approx(want.values()[i]).margin(1e-4));
}

TEST_CASE("bilateral_conv_block equals dbo-then-block composition") {
  Rng rng(6);
  BilateralConvBlock<float> bb;
  bb.block = ConvBlock<float>::make(2, {2, 3, 2}, rng);
  bb.dbo_params = DboParams{};
  auto x = random_tensor<float>({1, 2, 5, 5}, rng);
  auto got = bb(x);
  auto want = bb.block(dbo(x, bb.dbo_params));
  for (std::size_t i = 0; i < got.numel(); ++i)
    REQUIRE(got.values()[i] == want.values()[i]);
}

TEST_CASE("bcn_level reduces to single branch when the other is zeroed") {
  Rng rng(7);
  const std::array<std::size_t, 3> tri{3, 3, 3};
  BcnLevel<float> level;
  level.conv_branch = ConvBlock<float>::make(2, tri, rng);
  level.bilateral_branch.block = ConvBlock<float>::make(2, tri, rng);
  level.bilateral_branch.dbo_params = DboParams{};
  auto x = random_tensor<float>({1, 2, 6, 6}, rng);

  SECTION("zeroed bilateral branch") {
    for (auto& layer : level.bilateral_branch.block.convs) {
      for (auto& v : layer.weight.values()) v = 0.f;
      for (auto& v : layer.bias.values()) v = 0.f;
    }
    auto got = level(x);
    auto want = maxpool2(level.conv_branch(x));
    for (std::size_t i = 0; i < got.numel(); ++i)
      REQUIRE(got.values()[i] == want.values()[i]);
  }
  SECTION("zeroed conv branch") {
    for (auto& layer : level.conv_branch.convs) {
      for (auto& v : layer.weight.values()) v = 0.f;
      for (auto& v : layer.bias.values()) v = 0.f;
    }
    auto got = level(x);
    auto want = maxpool2(level.bilateral_branch(x));
    for (std::size_t i = 0; i < got.numel(); ++i)
      REQUIRE(got.values()[i] == want.values()[i]);
  }
  SECTION("both branches sum") {
    auto got = level(x);
    auto want = maxpool2(add(level.conv_branch(x), level.bilateral_branch(x)));
    for (std::size_t i = 0; i < got.numel(); ++i)
      REQUIRE(got.values()[i] == want.values()[i]);
  }
}

TEST_CASE("bcn_forward emits halving resolutions") {
  auto cfg = tiny_bcn(64, 4);
  Rng rng(8);
  auto net = Bcn<float>::make(cfg, rng);
  auto x = random_tensor<float>({1, 3, 64, 64}, rng, 0.0, 1.0);
  auto f = net(x);
  REQUIRE(f.low.shape() == Shape{1, 4, 32, 32});
  REQUIRE(f.mid.shape() == Shape{1, 4, 16, 16});
  REQUIRE(f.high.shape() == Shape{1, 4, 8, 8});

  REQUIRE_THROWS_AS(net(random_tensor<float>({1, 3, 32, 32}, rng)), TensorError);
}

TEST_CASE("bcn_forward zero weights give zero features") {
  auto cfg = tiny_bcn(32, 4);
  Rng rng(9);
  auto net = Bcn<float>::make(cfg, rng);
  ParamRegistry<float> reg;
  net.register_into(reg, "bcn");
  zero_params(reg, "bcn");
  auto x = random_tensor<float>({1, 3, 32, 32}, rng, 0.0, 1.0);
  auto f = net(x);
  for (float v : f.low.values()) REQUIRE(v == 0.f);
  for (float v : f.mid.values()) REQUIRE(v == 0.f);
  for (float v : f.high.values()) REQUIRE(v == 0.f);
}

TEST_CASE("default model parameter count is frozen") {
  ModelConfig cfg;  // paper defaults: 64 stem, [128,196,128] triples, C'=20, K=5
  auto model = Model<float>::build(cfg, 0);
  auto reg = model.params();
  const std::size_t expected = expected_param_count(cfg);
  REQUIRE(reg.total_params() == expected);
  REQUIRE(reg.total_params() == 5048352u);  // regression constant
}

TEST_CASE("removing the dbo changes features for non-constant input") {
  auto cfg = tiny_bcn(32, 4);
  Rng rng(10);
  auto with_dbo = Bcn<float>::make(cfg, rng);
  auto cfg_off = cfg;
  cfg_off.disable_dbo = true;
  Rng rng2(10);
  auto without = Bcn<float>::make(cfg_off, rng2);

  auto x = random_tensor<float>({1, 3, 32, 32}, rng, 0.0, 1.0);
  auto fa = with_dbo(x);
  auto fb = without(x);
  float max_diff = 0.f;
  for (std::size_t i = 0; i < fa.low.numel(); ++i)
    max_diff = std::max(max_diff, std::abs(fa.low.values()[i] - fb.low.values()[i]));
  for (std::size_t i = 0; i < fa.mid.numel(); ++i)
    max_diff = std::max(max_diff, std::abs(fa.mid.values()[i] - fb.mid.values()[i]));
  for (std::size_t i = 0; i < fa.high.numel(); ++i)
    max_diff = std::max(max_diff, std::abs(fa.high.values()[i] - fb.high.values()[i]));
  REQUIRE(max_diff > 1e-3f);
}

TEST_CASE("bcn forward is deterministic") {
  auto cfg = tiny_bcn(32, 4);
  Rng rng(11);
  auto net = Bcn<float>::make(cfg, rng);
  auto x = random_tensor<float>({2, 3, 32, 32}, rng, 0.0, 1.0);
  auto a = net(x);
  auto b = net(x);
  for (std::size_t i = 0; i < a.high.numel(); ++i)
    REQUIRE(a.high.values()[i] == b.high.values()[i]);
  for (std::size_t i = 0; i < a.low.numel(); ++i)
    REQUIRE(a.low.values()[i] == b.low.values()[i]);
}

TEST_CASE("bcn end-to-end gradcheck on a tiny config") {
  BcnConfig cfg = tiny_bcn(32, 8);
  // seed picked so no relu kink or pool tie sits within eps of a crossing
  Rng rng(15);
  auto net = Bcn<double>::make(cfg, rng);
  auto x = random_tensor<double>({1, 3, 32, 32}, rng, 0.05, 0.95);

  const auto fn = [&net](const std::vector<TensorT<double>>& in) {
    auto f = net(in[0]);
    return add(add(mean(f.low), mean(f.mid)), mean(f.high));
  };
  // input plus a sampled subset of each branch's parameters
  REQUIRE(gradcheck(fn, {x}, 1e-5, 40) < 1e-3);

  ParamRegistry<double> reg;
  net.register_into(reg, "bcn");
  std::vector<TensorT<double>> some_params;
  for (auto& [name, t] : reg.items)
    if (name.find("weight") != std::string::npos) some_params.push_back(t);
  const auto fn_params = [&net, &x](const std::vector<TensorT<double>>&) {
    auto f = net(x);
    return add(add(mean(f.low), mean(f.mid)), mean(f.high));
  };
  REQUIRE(gradcheck(fn_params, some_params, 1e-5, 5) < 1e-3);
}
