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

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "bifas/layers.hpp"
#include "bifas/tensor.hpp"

namespace bifas {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  struct Slot {
    std::vector<T> m, v;
  };
  std::vector<Slot> slots;
  std::int64_t t = 0;

  static AdamState init(const ParamRegistry<T>& reg) {
    AdamState s;
    s.slots.resize(reg.items.size());
    for (std::size_t i = 0; i < reg.items.size(); ++i) {
      s.slots[i].m.assign(reg.items[i].second.numel(), T(0));
      s.slots[i].v.assign(reg.items[i].second.numel(), T(0));
    }
    return s;
  }
};

// One Adam update with bias correction and decoupled weight decay applied
// multiplicatively to the parameters. Aborts on a non-finite gradient,
// naming the parameter.
template <typename T>
void adam_step(ParamRegistry<T>& reg, AdamState<T>& state, double lr, double wd,
               const AdamConfig& cfg = {}) {
  if (state.slots.size() != reg.items.size())
    throw TensorError("adam_step: state does not match the registry");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < reg.items.size(); ++i) {
    auto& [name, param] = reg.items[i];
    auto& slot = state.slots[i];
    auto values = param.values();
    auto grads = param.grad();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = static_cast<double>(grads[j]);
      if (!std::isfinite(g))
        throw TensorError("adam_step: non-finite gradient in parameter '" + name +
                          "' at index " + std::to_string(j));
      const double m = cfg.beta1 * static_cast<double>(slot.m[j]) + (1.0 - cfg.beta1) * g;
      const double v =
          cfg.beta2 * static_cast<double>(slot.v[j]) + (1.0 - cfg.beta2) * g * g;
      slot.m[j] = static_cast<T>(m);
      slot.v[j] = static_cast<T>(v);
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      double p = static_cast<double>(values[j]);
      p *= (1.0 - lr * wd);
      p -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
      values[j] = static_cast<T>(p);
    }
  }
}

// base_lr * 0.5^floor(epoch / period); halving period 500 epochs.
inline double lr_schedule(std::size_t epoch, double base_lr, std::size_t period = 500) {
  if (period == 0) return base_lr;
  return base_lr * std::pow(0.5, static_cast<double>(epoch / period));
}

}  // namespace bifas
