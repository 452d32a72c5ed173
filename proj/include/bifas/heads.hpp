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

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "bifas/layers.hpp"
#include "bifas/tensor.hpp"

namespace bifas {

// Three parallel prediction heads over the fused features: depth (1ch),
// reflection (3ch) and patch (1ch binary, or 5ch class probabilities in
// material mode). Each head is a stack of 3x3 same convolutions with relu
// between and sigmoid (or channel softmax) on the final layer.
struct HeadConfig {
  std::vector<std::size_t> channels = {128, 64};
  std::size_t patch_classes = 1;  // 1 = binary sigmoid, >1 = material softmax

  void validate() const {
    if (channels.empty()) throw TensorError("HeadConfig: need at least one hidden layer");
    for (std::size_t c : channels)
      if (c == 0) throw TensorError("HeadConfig: channel counts must be positive");
    if (patch_classes == 0) throw TensorError("HeadConfig: patch_classes must be positive");
  }

  bool material_mode() const { return patch_classes > 1; }
};

template <typename T>
struct HeadOutputs {
  TensorT<T> depth;       // [N,1,h,w] in [0,1]
  TensorT<T> reflection;  // [N,3,h,w] in [0,1]
  TensorT<T> patch;       // [N,1,h,w] probabilities, or [N,classes,h,w]
  bool material = false;
};

template <typename T>
struct HeadStack {
  std::vector<Conv2dLayer<T>> hidden;
  Conv2dLayer<T> out;

  static HeadStack make(std::size_t in, const HeadConfig& cfg, std::size_t out_channels,
                        Rng& rng) {
    HeadStack h;
    std::size_t c = in;
    for (std::size_t hc : cfg.channels) {
      h.hidden.push_back(Conv2dLayer<T>::make(c, hc, 3, rng));
      c = hc;
    }
    h.out = Conv2dLayer<T>::make(c, out_channels, 3, rng);
    return h;
  }

  TensorT<T> operator()(const TensorT<T>& x) const {
    TensorT<T> h = x;
    for (const auto& layer : hidden) h = relu(layer(h));
    return out(h);
  }

  void register_into(ParamRegistry<T>& reg, const std::string& prefix) {
    for (std::size_t i = 0; i < hidden.size(); ++i)
      hidden[i].register_into(reg, prefix + ".c" + std::to_string(i + 1));
    out.register_into(reg, prefix + ".out");
  }
};

template <typename T>
struct Heads {
  HeadConfig config;
  HeadStack<T> depth, reflection, patch;

  static Heads make(std::size_t fused_channels, const HeadConfig& cfg, Rng& rng) {
    cfg.validate();
    Heads h;
    h.config = cfg;
    h.depth = HeadStack<T>::make(fused_channels, cfg, 1, rng);
    h.reflection = HeadStack<T>::make(fused_channels, cfg, 3, rng);
    h.patch = HeadStack<T>::make(fused_channels, cfg, cfg.patch_classes, rng);
    return h;
  }

  HeadOutputs<T> operator()(const TensorT<T>& fused) const {
    HeadOutputs<T> o;
    o.depth = sigmoid(depth(fused));
    o.reflection = sigmoid(reflection(fused));
    o.material = config.material_mode();
    if (o.material)
      o.patch = softmax_channel(patch(fused));
    else
      o.patch = sigmoid(patch(fused));
    return o;
  }

  void register_into(ParamRegistry<T>& reg, const std::string& prefix) {
    depth.register_into(reg, prefix + ".depth");
    reflection.register_into(reg, prefix + ".reflection");
    patch.register_into(reg, prefix + ".patch");
  }
};

// ---------------------------------------------------------------------------
// Losses: mean squared error per map element, binary cross-entropy with an
// epsilon clamp, categorical cross-entropy over class probabilities. All
// differentiable w.r.t. the predictions; targets are read-only.
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> mse_loss(const TensorT<T>& pred, const TensorT<T>& target) {
  detail::check_same_shape(pred, target, "mse_loss");
  const std::size_t n = pred.numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pred.values()[i]) - target.values()[i];
    acc += d * d;
  }
  const T inv_n = T(1) / static_cast<T>(n);
  return TensorT<T>::make_op(
      {}, {static_cast<T>(acc / static_cast<double>(n))}, {pred},
      [target, inv_n](typename TensorT<T>::Node& self) {
        auto& pp = *self.parents[0];
        pp.ensure_grad();
        const T g = self.grad[0] * inv_n;
        for (std::size_t i = 0; i < pp.grad.size(); ++i)
          pp.grad[i] += g * T(2) * (pp.value[i] - target.values()[i]);
      });
}

template <typename T>
TensorT<T> bce_loss(const TensorT<T>& pred, const TensorT<T>& target, T eps = T(1e-7)) {
  detail::check_same_shape(pred, target, "bce_loss");
  const std::size_t n = pred.numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(static_cast<double>(pred.values()[i]),
                                static_cast<double>(eps), 1.0 - static_cast<double>(eps));
    const double t = target.values()[i];
    acc += -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
  }
  const T inv_n = T(1) / static_cast<T>(n);
  return TensorT<T>::make_op(
      {}, {static_cast<T>(acc / static_cast<double>(n))}, {pred},
      [target, eps, inv_n](typename TensorT<T>::Node& self) {
        auto& pp = *self.parents[0];
        pp.ensure_grad();
        const T g = self.grad[0] * inv_n;
        for (std::size_t i = 0; i < pp.grad.size(); ++i) {
          const T p = pp.value[i];
          if (p <= eps || p >= T(1) - eps) continue;  // clamp saturates
          const T t = target.values()[i];
          pp.grad[i] += g * (-t / p + (T(1) - t) / (T(1) - p));
        }
      });
}

// Mean negative log-likelihood of per-location class probabilities
// [N,K,h,w] against integer class maps (row-major N*h*w).
template <typename T>
TensorT<T> ce_loss(const TensorT<T>& probs, const std::vector<int>& classes,
                   T eps = T(1e-7)) {
  if (probs.ndim() != 4) throw TensorError("ce_loss: probs must be NCHW");
  const std::size_t N = probs.dim(0), K = probs.dim(1);
  const std::size_t HW = probs.dim(2) * probs.dim(3);
  if (classes.size() != N * HW)
    throw TensorError("ce_loss: class map size mismatch");
  double acc = 0.0;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t s = 0; s < HW; ++s) {
      const int cls = classes[n * HW + s];
      if (cls < 0 || static_cast<std::size_t>(cls) >= K)
        throw TensorError("ce_loss: class index " + std::to_string(cls) + " out of range");
      const double p =
          std::clamp(static_cast<double>(
                         probs.values()[(n * K + static_cast<std::size_t>(cls)) * HW + s]),
                     static_cast<double>(eps), 1.0);
      acc += -std::log(p);
    }
  const std::size_t total = N * HW;
  const T inv_n = T(1) / static_cast<T>(total);
  auto cls_copy = std::make_shared<std::vector<int>>(classes);
  return TensorT<T>::make_op(
      {}, {static_cast<T>(acc / static_cast<double>(total))}, {probs},
      [cls_copy, eps, inv_n, N, K, HW](typename TensorT<T>::Node& self) {
        auto& pp = *self.parents[0];
        pp.ensure_grad();
        const T g = self.grad[0] * inv_n;
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t s = 0; s < HW; ++s) {
            const auto cls = static_cast<std::size_t>((*cls_copy)[n * HW + s]);
            const std::size_t idx = (n * K + cls) * HW + s;
            const T p = pp.value[idx];
            if (p <= eps) continue;
            pp.grad[idx] += -g / p;
          }
      });
}

template <typename T>
TensorT<T> loss_depth(const TensorT<T>& pred, const TensorT<T>& gt) {
  return mse_loss(pred, gt);
}

template <typename T>
TensorT<T> loss_reflection(const TensorT<T>& pred, const TensorT<T>& gt) {
  return mse_loss(pred, gt);
}

template <typename T>
TensorT<T> loss_patch(const TensorT<T>& pred, const TensorT<T>& gt) {
  return bce_loss(pred, gt);
}

// L_overall = L_depth + L_reflection + L_patch, unweighted.
template <typename T>
TensorT<T> loss_overall(const TensorT<T>& depth, const TensorT<T>& reflection,
                        const TensorT<T>& patch) {
  return add(add(depth, reflection), patch);
}

// Fused test score: mean(D) + mean(1 - R) + mean(P), in [0, 3]. Higher
// means live. Binary mode only.
template <typename T>
double score(const HeadOutputs<T>& outputs) {
  if (outputs.material)
    throw TensorError("score: undefined for material-mode outputs");
  auto mean_of = [](const TensorT<T>& t) {
    double acc = 0.0;
    for (T v : t.values()) acc += static_cast<double>(v);
    return acc / static_cast<double>(t.numel());
  };
  return mean_of(outputs.depth) + (1.0 - mean_of(outputs.reflection)) +
         mean_of(outputs.patch);
}

// Material-mode helper: predicted class = argmax of spatially averaged
// class probabilities.
template <typename T>
int predicted_material_class(const HeadOutputs<T>& outputs) {
  if (!outputs.material)
    throw TensorError("predicted_material_class: needs material-mode outputs");
  const std::size_t K = outputs.patch.dim(1);
  const std::size_t HW = outputs.patch.dim(2) * outputs.patch.dim(3);
  int best = 0;
  double best_mean = -1.0;
  for (std::size_t k = 0; k < K; ++k) {
    double acc = 0.0;
    for (std::size_t s = 0; s < HW; ++s)
      acc += static_cast<double>(outputs.patch.values()[k * HW + s]);
    if (acc > best_mean) {
      best_mean = acc;
      best = static_cast<int>(k);
    }
  }
  return best;
}

}  // namespace bifas
