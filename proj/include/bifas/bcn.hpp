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

#pragma once

#include <array>
#include <string>

#include "bifas/dbo.hpp"
#include "bifas/layers.hpp"
#include "bifas/tensor.hpp"

namespace bifas {

// Dual-branch bilateral convolutional network. Per level a plain ConvBlock
// learns the residual-path features while a BilateralConvBlock (same conv
// structure, unshared parameters, with the deep bilateral operator applied
// to its input) learns the base-path features; the two branch outputs are
// added elementwise and pooled. Three levels expose low/mid/high maps at
// 1/2, 1/4 and 1/8 of the input resolution.
struct BcnConfig {
  std::size_t input_size = 256;  // square RGB input
  std::size_t stem_channels = 64;
  std::array<std::array<std::size_t, 3>, 3> level_channels = {
      {{128, 196, 128}, {128, 196, 128}, {128, 196, 128}}};
  DboParams dbo{};              // sigma_r^2 = 1.0, window 3
  bool dbo_on_output = false;   // apply the DBO to the block output instead
  bool disable_dbo = false;     // identity substitution, ablation only

  void validate() const {
    if (input_size == 0 || input_size % 8 != 0)
      throw TensorError("BcnConfig: input_size must be a positive multiple of 8");
    if (stem_channels == 0) throw TensorError("BcnConfig: stem_channels must be positive");
    for (const auto& triple : level_channels)
      for (std::size_t c : triple)
        if (c == 0) throw TensorError("BcnConfig: channel counts must be positive");
    dbo.validate();
  }

  std::size_t level_in_channels(std::size_t level) const {
    return level == 0 ? stem_channels : level_channels[level - 1][2];
  }
  std::size_t fused_channels() const {
    return level_channels[0][2] + level_channels[1][2] + level_channels[2][2];
  }
};

template <typename T>
struct LevelFeatures {
  TensorT<T> low;   // input/2
  TensorT<T> mid;   // input/4
  TensorT<T> high;  // input/8
};

// Three 3x3 same convolutions, each followed by relu; no pooling inside.
template <typename T>
struct ConvBlock {
  std::array<Conv2dLayer<T>, 3> convs;

  static ConvBlock make(std::size_t in, const std::array<std::size_t, 3>& channels,
                        Rng& rng) {
    ConvBlock b;
    b.convs[0] = Conv2dLayer<T>::make(in, channels[0], 3, rng);
    b.convs[1] = Conv2dLayer<T>::make(channels[0], channels[1], 3, rng);
    b.convs[2] = Conv2dLayer<T>::make(channels[1], channels[2], 3, rng);
    return b;
  }

  TensorT<T> operator()(const TensorT<T>& x) const {
    return relu(convs[2](relu(convs[1](relu(convs[0](x))))));
  }

  void register_into(ParamRegistry<T>& reg, const std::string& prefix) {
    convs[0].register_into(reg, prefix + ".c1");
    convs[1].register_into(reg, prefix + ".c2");
    convs[2].register_into(reg, prefix + ".c3");
  }
};

// ConvBlock with the deep bilateral operator on its input (or output, per
// config); parameters are its own, never shared with the plain branch.
template <typename T>
struct BilateralConvBlock {
  ConvBlock<T> block;
  DboParams dbo_params;
  bool on_output = false;
  bool disabled = false;

  TensorT<T> operator()(const TensorT<T>& x) const {
    if (disabled) return block(x);
    if (on_output) return dbo(block(x), dbo_params);
    return block(dbo(x, dbo_params));
  }
};

template <typename T>
struct BcnLevel {
  ConvBlock<T> conv_branch;
  BilateralConvBlock<T> bilateral_branch;

  // F_Bi = ConvBlock(x) + BilateralConvBlock(x), then 2x2 max pool.
  TensorT<T> operator()(const TensorT<T>& x) const {
    return maxpool2(add(conv_branch(x), bilateral_branch(x)));
  }
};

template <typename T>
struct Bcn {
  BcnConfig config;
  Conv2dLayer<T> stem;
  std::array<BcnLevel<T>, 3> levels;

  static Bcn make(const BcnConfig& cfg, Rng& rng) {
    cfg.validate();
    Bcn net;
    net.config = cfg;
    net.stem = Conv2dLayer<T>::make(3, cfg.stem_channels, 3, rng);
    for (std::size_t l = 0; l < 3; ++l) {
      const std::size_t in = cfg.level_in_channels(l);
      net.levels[l].conv_branch = ConvBlock<T>::make(in, cfg.level_channels[l], rng);
      net.levels[l].bilateral_branch.block =
          ConvBlock<T>::make(in, cfg.level_channels[l], rng);
      net.levels[l].bilateral_branch.dbo_params = cfg.dbo;
      net.levels[l].bilateral_branch.on_output = cfg.dbo_on_output;
      net.levels[l].bilateral_branch.disabled = cfg.disable_dbo;
    }
    return net;
  }

  LevelFeatures<T> operator()(const TensorT<T>& image) const {
    if (image.ndim() != 4 || image.dim(1) != 3)
      throw TensorError("bcn: input must be Nx3xHxW, got " + shape_str(image.shape()));
    if (image.dim(2) != config.input_size || image.dim(3) != config.input_size)
      throw TensorError("bcn: input resolution " + shape_str(image.shape()) +
                        " does not match configured " + std::to_string(config.input_size));
    LevelFeatures<T> f;
    auto x = relu(stem(image));
    f.low = levels[0](x);
    f.mid = levels[1](f.low);
    f.high = levels[2](f.mid);
    return f;
  }

  void register_into(ParamRegistry<T>& reg, const std::string& prefix) {
    stem.register_into(reg, prefix + ".stem");
    const char* names[3] = {".level1", ".level2", ".level3"};
    for (std::size_t l = 0; l < 3; ++l) {
      levels[l].conv_branch.register_into(reg, prefix + names[l] + ".conv");
      levels[l].bilateral_branch.block.register_into(reg, prefix + names[l] + ".bilateral");
    }
  }
};

}  // namespace bifas
