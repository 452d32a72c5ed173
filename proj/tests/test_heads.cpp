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
#include <cstdio>
#include <filesystem>

#include "bifas/gradcheck.hpp"
#include "bifas/heads.hpp"
#include "bifas/targets.hpp"
#include "oracles.hpp"

using namespace bifas;

namespace {

template <typename T>
TensorT<T> random_tensor(Shape shape, Rng& rng, double lo = 0.0, double hi = 1.0) {
  std::vector<T> data(shape_numel(shape));
  for (auto& v : data) v = static_cast<T>(rng.uniform(lo, hi));
  return TensorT<T>::from_data(std::move(shape), std::move(data));
}

HeadConfig tiny_heads() {
  HeadConfig cfg;
  cfg.channels = {6, 4};
  return cfg;
}

struct TmpDir {
  std::filesystem::path path;
  explicit TmpDir(const std::string& name) : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::create_directories(path);
  }
  ~TmpDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& f) const { return (path / f).string(); }
};

}  // namespace

TEST_CASE("heads_forward output shapes") {
  Rng rng(1);
  auto heads = Heads<float>::make(10, tiny_heads(), rng);
  auto fused = random_tensor<float>({1, 10, 8, 8}, rng, -1.0, 1.0);
  auto out = heads(fused);
  REQUIRE(out.depth.shape() == Shape{1, 1, 8, 8});
  REQUIRE(out.reflection.shape() == Shape{1, 3, 8, 8});
  REQUIRE(out.patch.shape() == Shape{1, 1, 8, 8});
  REQUIRE_FALSE(out.material);
  for (float v : out.depth.values()) {
    REQUIRE(v >= 0.f);
    REQUIRE(v <= 1.f);
  }
}

TEST_CASE("heads_forward zero final layers output one half") {
  Rng rng(2);
  auto heads = Heads<float>::make(6, tiny_heads(), rng);
  for (auto* stack : {&heads.depth, &heads.reflection, &heads.patch}) {
    for (auto& v : stack->out.weight.values()) v = 0.f;
    for (auto& v : stack->out.bias.values()) v = 0.f;
  }
  auto fused = random_tensor<float>({1, 6, 4, 4}, rng, -1.0, 1.0);
  auto out = heads(fused);
  for (float v : out.depth.values()) REQUIRE(v == 0.5f);
  for (float v : out.reflection.values()) REQUIRE(v == 0.5f);
  for (float v : out.patch.values()) REQUIRE(v == 0.5f);
}

TEST_CASE("heads_forward material mode emits class probabilities") {
  Rng rng(3);
  auto cfg = tiny_heads();
  cfg.patch_classes = 5;
  auto heads = Heads<float>::make(6, cfg, rng);
  auto fused = random_tensor<float>({1, 6, 4, 4}, rng, -1.0, 1.0);
  auto out = heads(fused);
  REQUIRE(out.material);
  REQUIRE(out.patch.shape() == Shape{1, 5, 4, 4});
  for (std::size_t s = 0; s < 16; ++s) {
    float total = 0.f;
    for (std::size_t k = 0; k < 5; ++k) total += out.patch.values()[k * 16 + s];
    REQUIRE(total == Catch::Approx(1.f).margin(1e-6));
  }
}

TEST_CASE("loss_depth basics and reference match") {
  auto a = Tensor::full({1, 1, 4, 4}, 0.3f);
  REQUIRE(loss_depth(a, a).item() == 0.f);

  auto ones = Tensor::full({1, 1, 4, 4}, 1.f);
  auto zeros = Tensor::zeros({1, 1, 4, 4});
  REQUIRE(loss_depth(ones, zeros).item() == Catch::Approx(1.f));

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    auto p = random_tensor<float>({1, 1, 5, 5}, rng);
    auto g = random_tensor<float>({1, 1, 5, 5}, rng);
    const double want =
        oracle::loss_mse(std::vector<double>(p.values().begin(), p.values().end()),
                         std::vector<double>(g.values().begin(), g.values().end()));
    REQUIRE(loss_depth(p, g).item() == Catch::Approx(want).margin(1e-7));
  }
}

TEST_CASE("loss_reflection over three channels") {
  auto ones = Tensor::full({1, 3, 4, 4}, 1.f);
  auto zeros = Tensor::zeros({1, 3, 4, 4});
  REQUIRE(loss_reflection(ones, ones).item() == 0.f);
  REQUIRE(loss_reflection(ones, zeros).item() == Catch::Approx(1.f));

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed + 10);
    auto p = random_tensor<float>({1, 3, 4, 4}, rng);
    auto g = random_tensor<float>({1, 3, 4, 4}, rng);
    const double want =
        oracle::loss_mse(std::vector<double>(p.values().begin(), p.values().end()),
                         std::vector<double>(g.values().begin(), g.values().end()));
    REQUIRE(loss_reflection(p, g).item() == Catch::Approx(want).margin(1e-7));
  }
}

TEST_CASE("loss_patch: half everywhere is ln 2") {
  auto p = Tensor::full({1, 1, 8, 8}, 0.5f);
  auto live = Tensor::full({1, 1, 8, 8}, 1.f);
  auto spoof = Tensor::zeros({1, 1, 8, 8});
  REQUIRE(loss_patch(p, live).item() == Catch::Approx(0.6931472).margin(1e-6));
  REQUIRE(loss_patch(p, spoof).item() == Catch::Approx(0.6931472).margin(1e-6));
}

TEST_CASE("loss_patch approaches the epsilon floor and matches the reference") {
  auto gt = Tensor::full({1, 1, 4, 4}, 1.f);
  auto nearly = Tensor::full({1, 1, 4, 4}, 1.f - 1e-6f);
  REQUIRE(loss_patch(nearly, gt).item() < 1e-5f);
  REQUIRE(loss_patch(nearly, gt).item() >= 0.f);

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed + 20);
    auto p = random_tensor<float>({1, 1, 5, 5}, rng, 0.01, 0.99);
    auto g = random_tensor<float>({1, 1, 5, 5}, rng);
    for (auto& v : g.values()) v = v > 0.5f ? 1.f : 0.f;
    const double want =
        oracle::loss_bce(std::vector<double>(p.values().begin(), p.values().end()),
                         std::vector<double>(g.values().begin(), g.values().end()));
    REQUIRE(loss_patch(p, g).item() == Catch::Approx(want).margin(1e-6));
  }
}

TEST_CASE("ce_loss for material mode") {
  // uniform probabilities give ln K
  auto probs = Tensor::full({1, 5, 2, 2}, 0.2f);
  std::vector<int> classes(4, 3);
  REQUIRE(ce_loss(probs, classes).item() == Catch::Approx(std::log(5.0)).margin(1e-6));

  std::vector<int> bad(4, 9);
  REQUIRE_THROWS_AS(ce_loss(probs, bad), TensorError);
}

TEST_CASE("loss gradients pass gradcheck") {
  Rng rng(30);
  auto pred = random_tensor<double>({1, 1, 4, 4}, rng, 0.05, 0.95);
  auto gt = random_tensor<double>({1, 1, 4, 4}, rng);
  REQUIRE(gradcheck([&gt](const std::vector<TensorT<double>>& in) {
            return mse_loss(in[0], gt);
          }, {pred}, 1e-5) < 1e-3);

  auto bgt = random_tensor<double>({1, 1, 4, 4}, rng);
  for (auto& v : bgt.values()) v = v > 0.5 ? 1.0 : 0.0;
  REQUIRE(gradcheck([&bgt](const std::vector<TensorT<double>>& in) {
            return bce_loss(in[0], bgt);
          }, {pred}, 1e-5) < 1e-3);

  auto probs = random_tensor<double>({1, 5, 2, 2}, rng, 0.1, 0.9);
  std::vector<int> classes = {0, 2, 4, 1};
  REQUIRE(gradcheck([&classes](const std::vector<TensorT<double>>& in) {
            return ce_loss(in[0], classes);
          }, {probs}, 1e-6) < 1e-3);

  // through a sigmoid head, the realistic path
  auto logits = random_tensor<double>({1, 1, 4, 4}, rng, -2.0, 2.0);
  REQUIRE(gradcheck([&bgt](const std::vector<TensorT<double>>& in) {
            return bce_loss(sigmoid(in[0]), bgt);
          }, {logits}, 1e-5) < 1e-3);
}

TEST_CASE("loss_overall is the plain sum") {
  auto z = Tensor::scalar(0.f);
  REQUIRE(loss_overall(z, z, z).item() == 0.f);
  auto a = Tensor::scalar(0.1f), b = Tensor::scalar(0.2f), c = Tensor::scalar(0.3f);
  REQUIRE(loss_overall(a, b, c).item() == Catch::Approx(0.6f));
  REQUIRE(loss_overall(a, b, c).item() == a.item() + b.item() + c.item());
}

TEST_CASE("score extremes and bounds") {
  HeadOutputs<float> o;
  o.depth = Tensor::full({1, 1, 4, 4}, 1.f);
  o.reflection = Tensor::zeros({1, 3, 4, 4});
  o.patch = Tensor::full({1, 1, 4, 4}, 1.f);
  REQUIRE(score(o) == Catch::Approx(3.0));

  o.depth = Tensor::zeros({1, 1, 4, 4});
  o.reflection = Tensor::full({1, 3, 4, 4}, 1.f);
  o.patch = Tensor::zeros({1, 1, 4, 4});
  REQUIRE(score(o) == Catch::Approx(0.0));

  o.depth = Tensor::full({1, 1, 4, 4}, 0.5f);
  o.reflection = Tensor::full({1, 3, 4, 4}, 0.5f);
  o.patch = Tensor::full({1, 1, 4, 4}, 0.5f);
  REQUIRE(score(o) == Catch::Approx(1.5));

  Rng rng(40);
  for (int i = 0; i < 20; ++i) {
    o.depth = random_tensor<float>({1, 1, 4, 4}, rng);
    o.reflection = random_tensor<float>({1, 3, 4, 4}, rng);
    o.patch = random_tensor<float>({1, 1, 4, 4}, rng);
    const double s = score(o);
    REQUIRE(s >= 0.0);
    REQUIRE(s <= 3.0);
  }

  HeadOutputs<float> m;
  m.material = true;
  m.depth = o.depth;
  m.reflection = o.reflection;
  m.patch = Tensor::full({1, 5, 4, 4}, 0.2f);
  REQUIRE_THROWS_AS(score(m), TensorError);
}

TEST_CASE("score monotonicity in each head") {
  Rng rng(41);
  HeadOutputs<float> o;
  o.depth = random_tensor<float>({1, 1, 4, 4}, rng, 0.1, 0.8);
  o.reflection = random_tensor<float>({1, 3, 4, 4}, rng, 0.1, 0.8);
  o.patch = random_tensor<float>({1, 1, 4, 4}, rng, 0.1, 0.8);
  const double base = score(o);

  o.depth.values()[5] += 0.1f;
  REQUIRE(score(o) > base);
  o.depth.values()[5] -= 0.1f;

  o.reflection.values()[7] += 0.1f;
  REQUIRE(score(o) < base);
  o.reflection.values()[7] -= 0.1f;

  o.patch.values()[3] += 0.1f;
  REQUIRE(score(o) > base);
}

TEST_CASE("make_targets applies the live/spoof zeroing rules") {
  TmpDir tmp("bifas_targets_test");
  // a depth map file that must be ignored for spoof samples
  write_png(tmp.file("depth.png"), TensorT<float>::full({32, 32, 1}, 200.f / 255.f));
  write_png(tmp.file("refl.png"), TensorT<float>::full({32, 32, 3}, 0.5f));

  ManifestEntry spoof{"img.png", "spoof", "print", tmp.file("depth.png"),
                      tmp.file("refl.png")};
  auto ts = make_targets(spoof, 32);
  double depth_sum = 0.0;
  for (float v : ts.depth.values()) depth_sum += v;
  REQUIRE(depth_sum == 0.0);
  for (float v : ts.patch.values()) REQUIRE(v == 0.f);
  // 0.5 quantizes to 128/255 through the 8-bit file
  for (float v : ts.reflection.values())
    REQUIRE(v == Catch::Approx(128.0 / 255.0).margin(1e-6));

  ManifestEntry live{"img2.png", "live", std::nullopt, tmp.file("depth.png"),
                     tmp.file("refl.png")};
  auto tl = make_targets(live, 32);
  double refl_sum = 0.0;
  for (float v : tl.reflection.values()) refl_sum += v;
  REQUIRE(refl_sum == 0.0);
  for (float v : tl.patch.values()) REQUIRE(v == 1.f);
  // 8-bit 200/255 round-trips through the PNG
  for (float v : tl.depth.values()) REQUIRE(v == Catch::Approx(200.0 / 255.0).margin(1e-6));
}

TEST_CASE("make_targets falls back to synthetic defaults") {
  ManifestEntry live{"missing_live.png", "live", std::nullopt, std::nullopt, std::nullopt};
  auto t = make_targets(live, 16);
  float mx = 0.f;
  for (float v : t.depth.values()) mx = std::max(mx, v);
  REQUIRE(mx > 0.9f);  // radial bump peaks near the center
  REQUIRE(t.depth.values()[0] < 0.5f);

  ManifestEntry spoof{"missing_spoof.png", "spoof", "replay", std::nullopt, std::nullopt};
  auto t2 = make_targets(spoof, 16);
  for (float v : t2.reflection.values()) {
    REQUIRE(v > 0.5f);
    REQUIRE(v < 0.7f);
  }
  // deterministic per image path
  auto t3 = make_targets(spoof, 16);
  for (std::size_t i = 0; i < t2.reflection.numel(); ++i)
    REQUIRE(t2.reflection.values()[i] == t3.reflection.values()[i]);
}

TEST_CASE("make_targets material mode fills class indices") {
  ManifestEntry e{"img.png", "print", "print", std::nullopt, std::nullopt};
  auto t = make_targets(e, 8, true);
  REQUIRE(t.material);
  REQUIRE(t.patch_classes.size() == 64);
  for (int c : t.patch_classes) REQUIRE(c == 2);

  ManifestEntry spoof_tagged{"img.png", "spoof", "replay", std::nullopt, std::nullopt};
  auto t2 = make_targets(spoof_tagged, 8, true);
  for (int c : t2.patch_classes) REQUIRE(c == 1);
}

TEST_CASE("targets downscale 32x32 maps to reduced model resolutions") {
  TmpDir tmp("bifas_targets_scale");
  write_png(tmp.file("d.png"), TensorT<float>::full({32, 32, 1}, 128.f / 255.f));
  ManifestEntry live{"x.png", "live", std::nullopt, tmp.file("d.png"), std::nullopt};
  auto t = make_targets(live, 8);
  REQUIRE(t.depth.shape() == Shape{1, 1, 8, 8});
  for (float v : t.depth.values()) REQUIRE(v == Catch::Approx(128.0 / 255.0).margin(1e-6));
}
