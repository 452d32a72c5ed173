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

#include <string>
#include <vector>

#include "bifas/bcn.hpp"
#include "bifas/layers.hpp"
#include "bifas/tensor.hpp"

namespace bifas {

// Multi-level feature refinement: per level, compress channels with a 1x1
// conv, encode KxK refinement kernels from the compressed content with a 5x5
// conv, softmax-normalize each kernel spatially, and reassemble every
// feature as the kernel-weighted sum of its KxK neighborhood. The kernel is
// shared across channels at each location. Refined low/mid levels are
// average-pooled down to the high-level resolution and all three are
// concatenated along channels.
struct MfrmConfig {
  std::size_t compressed_channels = 20;  // C'
  std::size_t kernel_size = 5;           // K, odd
  std::size_t encoder_kernel = 5;

  void validate() const {
    if (kernel_size % 2 == 0 || kernel_size == 0)
      throw TensorError("MfrmConfig: kernel_size must be odd");
    if (encoder_kernel % 2 == 0 || encoder_kernel == 0)
      throw TensorError("MfrmConfig: encoder_kernel must be odd");
    if (compressed_channels == 0)
      throw TensorError("MfrmConfig: compressed_channels must be positive");
  }
};

// Reassembles F by its local neighborhood under per-location kernels:
//   out[n,c,i,j] = sum_{dn,dm in [-r,r]} kernels[n,k(dn,dm),i,j] * F[n,c,i+dn,j+dm]
// Out-of-bounds neighbors contribute zero; the kernels are applied verbatim,
// without border renormalization. Differentiable w.r.t. both inputs.
template <typename T>
TensorT<T> refine(const TensorT<T>& features, const TensorT<T>& kernels) {
  if (features.ndim() != 4 || kernels.ndim() != 4)
    throw TensorError("refine: inputs must be NCHW");
  const std::size_t N = features.dim(0), C = features.dim(1);
  const std::size_t H = features.dim(2), W = features.dim(3);
  const std::size_t K2 = kernels.dim(1);
  const std::size_t K = static_cast<std::size_t>(std::lround(std::sqrt(double(K2))));
  if (K * K != K2 || K % 2 == 0)
    throw TensorError("refine: kernel channel count " + std::to_string(K2) +
                      " is not an odd square");
  if (kernels.dim(0) != N || kernels.dim(2) != H || kernels.dim(3) != W)
    throw TensorError("refine: kernels " + shape_str(kernels.shape()) +
                      " misaligned with features " + shape_str(features.shape()));

  const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(K / 2);
  const std::ptrdiff_t Hs = static_cast<std::ptrdiff_t>(H);
  const std::ptrdiff_t Ws = static_cast<std::ptrdiff_t>(W);
  const std::size_t HW = H * W;
  const T* fv = features.values().data();
  const T* kv = kernels.values().data();
  std::vector<T> out(features.numel(), T(0));

  for (std::size_t n = 0; n < N; ++n) {
    const T* kbase = kv + n * K2 * HW;
    for (std::size_t c = 0; c < C; ++c) {
      const T* fplane = fv + (n * C + c) * HW;
      T* oplane = out.data() + (n * C + c) * HW;
      for (std::ptrdiff_t i = 0; i < Hs; ++i) {
        for (std::ptrdiff_t j = 0; j < Ws; ++j) {
          T acc = 0;
          for (std::ptrdiff_t dn = -r; dn <= r; ++dn) {
            const std::ptrdiff_t ii = i + dn;
            if (ii < 0 || ii >= Hs) continue;
            for (std::ptrdiff_t dm = -r; dm <= r; ++dm) {
              const std::ptrdiff_t jj = j + dm;
              if (jj < 0 || jj >= Ws) continue;
              const std::size_t kk = static_cast<std::size_t>(dn + r) * K +
                                     static_cast<std::size_t>(dm + r);
              acc += kbase[kk * HW + static_cast<std::size_t>(i * Ws + j)] *
                     fplane[ii * Ws + jj];
            }
          }
          oplane[i * Ws + j] = acc;
        }
      }
    }
  }

  auto backward = [N, C, H, W, K, r](typename TensorT<T>::Node& self) {
    auto& pf = *self.parents[0];
    auto& pk = *self.parents[1];
    pf.ensure_grad();
    pk.ensure_grad();
    const std::size_t HW = H * W;
    const std::size_t K2 = K * K;
    const std::ptrdiff_t Hs = static_cast<std::ptrdiff_t>(H);
    const std::ptrdiff_t Ws = static_cast<std::ptrdiff_t>(W);
    for (std::size_t n = 0; n < N; ++n) {
      const T* kbase = pk.value.data() + n * K2 * HW;
      T* gk = pk.grad.data() + n * K2 * HW;
      for (std::size_t c = 0; c < C; ++c) {
        const T* fplane = pf.value.data() + (n * C + c) * HW;
        T* gf = pf.grad.data() + (n * C + c) * HW;
        const T* gout = self.grad.data() + (n * C + c) * HW;
        for (std::ptrdiff_t i = 0; i < Hs; ++i) {
          for (std::ptrdiff_t j = 0; j < Ws; ++j) {
            const T g = gout[i * Ws + j];
            if (g == T(0)) continue;
            for (std::ptrdiff_t dn = -r; dn <= r; ++dn) {
              const std::ptrdiff_t ii = i + dn;
              if (ii < 0 || ii >= Hs) continue;
              for (std::ptrdiff_t dm = -r; dm <= r; ++dm) {
                const std::ptrdiff_t jj = j + dm;
                if (jj < 0 || jj >= Ws) continue;
                const std::size_t kk = static_cast<std::size_t>(dn + r) * K +
                                       static_cast<std::size_t>(dm + r);
                const std::size_t loc = static_cast<std::size_t>(i * Ws + j);
                gf[ii * Ws + jj] += g * kbase[kk * HW + loc];
                gk[kk * HW + loc] += g * fplane[ii * Ws + jj];
              }
            }
          }
        }
      }
    }
  };
  return TensorT<T>::make_op({N, C, H, W}, std::move(out), {features, kernels},
                             std::move(backward));
}

template <typename T>
struct MfrmLevel {
  Conv2dLayer<T> compress;  // 1x1, C -> C'
  Conv2dLayer<T> encode;    // 5x5, C' -> K^2

  static MfrmLevel make(std::size_t in_channels, const MfrmConfig& cfg, Rng& rng) {
    if (in_channels < cfg.compressed_channels)
      throw TensorError("mfrm: level has " + std::to_string(in_channels) +
                        " channels, cannot compress to " +
                        std::to_string(cfg.compressed_channels));
    MfrmLevel l;
    l.compress = Conv2dLayer<T>::make(in_channels, cfg.compressed_channels, 1, rng);
    l.encode = Conv2dLayer<T>::make(cfg.compressed_channels,
                                    cfg.kernel_size * cfg.kernel_size,
                                    cfg.encoder_kernel, rng);
    return l;
  }

  TensorT<T> operator()(const TensorT<T>& f) const {
    auto kernels = softmax_channel(encode(compress(f)));
    return refine(f, kernels);
  }

  void register_into(ParamRegistry<T>& reg, const std::string& prefix) {
    compress.register_into(reg, prefix + ".compress");
    encode.register_into(reg, prefix + ".encode");
  }
};

template <typename T>
struct Mfrm {
  MfrmConfig config;
  MfrmLevel<T> low, mid, high;

  static Mfrm make(const BcnConfig& bcn_cfg, const MfrmConfig& cfg, Rng& rng) {
    cfg.validate();
    Mfrm m;
    m.config = cfg;
    m.low = MfrmLevel<T>::make(bcn_cfg.level_channels[0][2], cfg, rng);
    m.mid = MfrmLevel<T>::make(bcn_cfg.level_channels[1][2], cfg, rng);
    m.high = MfrmLevel<T>::make(bcn_cfg.level_channels[2][2], cfg, rng);
    return m;
  }

  // Refine each level, pool low/mid down to the high resolution, concat.
  TensorT<T> operator()(const LevelFeatures<T>& f) const {
    auto rl = avgpool(low(f.low), 4);
    auto rm = avgpool(mid(f.mid), 2);
    auto rh = high(f.high);
    return concat_channels<T>({rl, rm, rh});
  }

  void register_into(ParamRegistry<T>& reg, const std::string& prefix) {
    low.register_into(reg, prefix + ".low");
    mid.register_into(reg, prefix + ".mid");
    high.register_into(reg, prefix + ".high");
  }
};

}  // namespace bifas
