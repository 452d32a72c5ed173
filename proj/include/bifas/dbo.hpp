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
#include <cstddef>
#include <memory>
#include <vector>

#include "bifas/tensor.hpp"

namespace bifas {

// Deep bilateral operator: channel-wise bilateral weighting of hidden
// feature maps. Each output value is the range-gaussian weighted mean of its
// window,
//   DBO(F)_p = (1/k) sum_q g_r(|F_p - F_q|) F_q,   k = sum_q g_r(|F_p - F_q|)
// with g(x) = exp(-x^2/sigma^2). The full variant restores the spatial decay
// g_s(|p-q|) on every neighbor weight. Windows clip at borders and k
// renormalizes over the valid neighbors only. Gradients flow through the
// weights, not just the values.
struct DboParams {
  double sigma_r = 1.0;       // range std-dev in feature units
  std::size_t window = 3;     // odd
  bool use_spatial = false;   // full variant
  double sigma_s = 1.0;       // spatial std-dev, only read when use_spatial

  void validate() const {
    if (sigma_r <= 0) throw TensorError("DboParams: sigma_r must be positive");
    if (window % 2 == 0 || window == 0)
      throw TensorError("DboParams: window must be odd and >= 1");
    if (use_spatial && sigma_s <= 0)
      throw TensorError("DboParams: sigma_s must be positive when use_spatial");
  }
};

namespace detail {

// Weight of a neighbor at offset index k with value v against center value:
// spatial[k] * exp(-(center-v)^2 / sigma_r^2). The center's own weight is
// spatial-only, so its derivative w.r.t. the center value is zero and the
// chain below skips it.
template <typename T>
void dbo_backward(typename TensorT<T>::Node& self,
                  const std::vector<double>& spatial, std::ptrdiff_t radius,
                  double inv_r2, const std::vector<double>& denom) {
  auto& px = *self.parents[0];
  px.ensure_grad();
  const Shape& s = px.shape;
  const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(s[2]);
  const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(s[3]);
  const std::size_t planes = s[0] * s[1];
  const std::size_t side = 2 * static_cast<std::size_t>(radius) + 1;

  for (std::size_t pl = 0; pl < planes; ++pl) {
    const T* x = px.value.data() + pl * H * W;
    T* gx = px.grad.data() + pl * H * W;
    const T* out = self.value.data() + pl * H * W;
    const T* g = self.grad.data() + pl * H * W;
    const double* den = denom.data() + pl * H * W;
    for (std::ptrdiff_t i = 0; i < H; ++i) {
      for (std::ptrdiff_t j = 0; j < W; ++j) {
        const std::size_t o = static_cast<std::size_t>(i * W + j);
        const double gp = static_cast<double>(g[o]);
        if (gp == 0.0) continue;
        const double center = x[o];
        const double opv = out[o];
        const double g_over_k = gp / den[o];
        double center_acc = 0.0;
        for (std::ptrdiff_t dy = -radius; dy <= radius; ++dy) {
          const std::ptrdiff_t ii = i + dy;
          if (ii < 0 || ii >= H) continue;
          for (std::ptrdiff_t dx = -radius; dx <= radius; ++dx) {
            const std::ptrdiff_t jj = j + dx;
            if (jj < 0 || jj >= W) continue;
            const std::size_t q = static_cast<std::size_t>(ii * W + jj);
            const double sp =
                spatial[static_cast<std::size_t>(dy + radius) * side +
                        static_cast<std::size_t>(dx + radius)];
            const double v = x[q];
            const double u = center - v;
            const double w = sp * std::exp(-(u * u) * inv_r2);
            gx[q] += static_cast<T>(g_over_k * w);
            if (q != o) {
              const double through_w = g_over_k * (v - opv) * w * 2.0 * u * inv_r2;
              gx[q] += static_cast<T>(through_w);
              center_acc -= through_w;
            }
          }
        }
        gx[o] += static_cast<T>(center_acc);
      }
    }
  }
}

}  // namespace detail

template <typename T>
TensorT<T> dbo(const TensorT<T>& features, const DboParams& p) {
  p.validate();
  if (features.ndim() != 4)
    throw TensorError("dbo: features must be NCHW, got " + shape_str(features.shape()));

  const std::ptrdiff_t radius = static_cast<std::ptrdiff_t>(p.window / 2);
  const std::size_t side = 2 * static_cast<std::size_t>(radius) + 1;
  const double inv_r2 = 1.0 / (p.sigma_r * p.sigma_r);
  std::vector<double> spatial(side * side, 1.0);
  if (p.use_spatial) {
    const double inv_s2 = 1.0 / (p.sigma_s * p.sigma_s);
    for (std::ptrdiff_t dy = -radius; dy <= radius; ++dy)
      for (std::ptrdiff_t dx = -radius; dx <= radius; ++dx)
        spatial[static_cast<std::size_t>(dy + radius) * side +
                static_cast<std::size_t>(dx + radius)] =
            std::exp(-static_cast<double>(dy * dy + dx * dx) * inv_s2);
  }

  const Shape& s = features.shape();
  const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(s[2]);
  const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(s[3]);
  const std::size_t planes = s[0] * s[1];
  const T* xv = features.values().data();

  std::vector<T> out(features.numel());
  auto denom = std::make_shared<std::vector<double>>(features.numel());
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const T* x = xv + pl * H * W;
    T* y = out.data() + pl * H * W;
    double* den = denom->data() + pl * H * W;
    for (std::ptrdiff_t i = 0; i < H; ++i) {
      for (std::ptrdiff_t j = 0; j < W; ++j) {
        const double center = x[i * W + j];
        double num = 0.0, k = 0.0;
        for (std::ptrdiff_t dy = -radius; dy <= radius; ++dy) {
          const std::ptrdiff_t ii = i + dy;
          if (ii < 0 || ii >= H) continue;
          for (std::ptrdiff_t dx = -radius; dx <= radius; ++dx) {
            const std::ptrdiff_t jj = j + dx;
            if (jj < 0 || jj >= W) continue;
            const double sp =
                spatial[static_cast<std::size_t>(dy + radius) * side +
                        static_cast<std::size_t>(dx + radius)];
            const double v = x[ii * W + jj];
            const double u = center - v;
            const double w = sp * std::exp(-(u * u) * inv_r2);
            num += w * v;
            k += w;
          }
        }
        y[i * W + j] = static_cast<T>(num / k);
        den[i * W + j] = k;
      }
    }
  }

  return TensorT<T>::make_op(
      features.shape(), std::move(out), {features},
      [spatial, radius, inv_r2, denom](typename TensorT<T>::Node& self) {
        detail::dbo_backward<T>(self, spatial, radius, inv_r2, *denom);
      });
}

// Full variant, Eq.-level alias: requires the spatial term enabled.
template <typename T>
TensorT<T> dbo_full(const TensorT<T>& features, const DboParams& p) {
  if (!p.use_spatial)
    throw TensorError("dbo_full: params must have use_spatial enabled");
  return dbo(features, p);
}

}  // namespace bifas
