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
#include <string>
#include <utility>
#include <vector>

#include "bifas/rng.hpp"
#include "bifas/tensor.hpp"

namespace bifas {

// Ordered collection of named parameter tensors. The handles share storage
// with the owning modules, so optimizer updates are visible everywhere.
template <typename T>
struct ParamRegistry {
  std::vector<std::pair<std::string, TensorT<T>>> items;

  void add(std::string name, TensorT<T> t) {
    t.set_param(true);
    items.emplace_back(std::move(name), std::move(t));
  }

  std::size_t total_params() const {
    std::size_t n = 0;
    for (const auto& [name, t] : items) n += t.numel();
    return n;
  }

  void zero_grad() {
    for (auto& [name, t] : items) t.zero_grad();
  }
};

// A convolution layer with its parameters. Weights init uniform in
// +/- sqrt(6/fan_in) (relu-gain scaling, keeps activation variance flat
// through the stack), biases zero; seeded through the given stream.
template <typename T>
struct Conv2dLayer {
  ConvSpec spec;
  TensorT<T> weight;
  TensorT<T> bias;

  static Conv2dLayer make(std::size_t in, std::size_t out, std::size_t k, Rng& rng) {
    Conv2dLayer l;
    l.spec = ConvSpec::same(in, out, k);
    const double bound = std::sqrt(6.0 / static_cast<double>(in * k * k));
    std::vector<T> w(out * in * k * k);
    for (auto& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
    l.weight = TensorT<T>::from_data({out, in, k, k}, std::move(w));
    l.bias = TensorT<T>::zeros({out});
    return l;
  }

  TensorT<T> operator()(const TensorT<T>& x) const { return conv2d(x, spec, weight, bias); }

  void register_into(ParamRegistry<T>& reg, const std::string& prefix) {
    reg.add(prefix + ".weight", weight);
    reg.add(prefix + ".bias", bias);
  }

  std::size_t param_count() const { return weight.numel() + bias.numel(); }
};

}  // namespace bifas
