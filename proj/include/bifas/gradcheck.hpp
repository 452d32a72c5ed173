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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "bifas/rng.hpp"
#include "bifas/tensor.hpp"

namespace bifas {

// Central-difference verification of reverse-mode gradients. The callable
// must rebuild the graph from the given input handles on every call, be
// scalar-valued and deterministic (a stochastic fn gives undefined results).
// Checks run in double precision; f32 finite differences are too noisy for
// the tolerances used here.
//
// Returns the max over checked coordinates of
//   |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
//
// max_coords < numel samples a deterministic random subset per input, which
// keeps full-model checks tractable.
using GradcheckFn = std::function<TensorT<double>(const std::vector<TensorT<double>>&)>;

inline double gradcheck(const GradcheckFn& fn, std::vector<TensorT<double>> inputs,
                        double eps = 1e-4,
                        std::size_t max_coords = std::numeric_limits<std::size_t>::max(),
                        std::uint64_t sample_seed = 7) {
  for (auto& in : inputs) in.zero_grad();
  TensorT<double> loss = fn(inputs);
  if (loss.numel() != 1) throw TensorError("gradcheck: fn must be scalar-valued");
  loss.backward();

  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (auto& in : inputs)
    analytic.emplace_back(in.grad().begin(), in.grad().end());

  Rng rng(sample_seed);
  double max_rel = 0.0;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto& in = inputs[t];
    const std::size_t n = in.numel();
    std::vector<std::size_t> coords;
    if (n <= max_coords) {
      coords.resize(n);
      for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      for (std::size_t i = 0; i < max_coords; ++i) coords.push_back(rng.uniform_index(n));
    }
    for (std::size_t i : coords) {
      const double saved = in.values()[i];
      in.values()[i] = saved + eps;
      const double fp = fn(inputs).item();
      in.values()[i] = saved - eps;
      const double fm = fn(inputs).item();
      in.values()[i] = saved;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[t][i];
      const double denom = std::max(1e-8, std::abs(a) + std::abs(numeric));
      const double rel = std::abs(a - numeric) / denom;
      if (rel > max_rel) max_rel = rel;
    }
  }
  return max_rel;
}

}  // namespace bifas
