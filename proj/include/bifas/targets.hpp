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
#include <vector>

#include "bifas/image_io.hpp"
#include "bifas/log.hpp"
#include "bifas/manifest.hpp"
#include "bifas/rng.hpp"
#include "bifas/tensor.hpp"

namespace bifas {

// Per-sample ground truth for the three heads. The label-dependent
// normalization lives here: spoof depth maps and live reflection maps are
// zero, binary patch maps are constant with the sample's label. Material
// mode fills class indices instead of the binary map.
struct SupervisionTargets {
  TensorT<float> depth;       // [1,1,s,s] in [0,1]
  TensorT<float> reflection;  // [1,3,s,s] in [0,1]
  TensorT<float> patch;       // [1,1,s,s], constant 0/1 (binary mode)
  std::vector<int> patch_classes;  // s*s class indices (material mode)
  bool material = false;
};

namespace detail {

// Map files are 32x32 on disk; models at reduced input resolution consume
// them box-downscaled.
inline TensorT<float> load_map(const std::string& path, std::size_t map_size,
                               std::size_t channels) {
  auto img = read_image(path);
  if (img.dim(2) != channels)
    throw ImageIoError(path + ": expected " + std::to_string(channels) +
                       " channels, got " + std::to_string(img.dim(2)));
  if (img.dim(0) < map_size || img.dim(0) % map_size != 0 || img.dim(0) != img.dim(1))
    throw ImageIoError(path + ": map size " + shape_str(img.shape()) +
                       " incompatible with model map size " + std::to_string(map_size));
  return downscale_box(img, img.dim(0) / map_size);
}

inline TensorT<float> synthetic_live_depth(std::size_t s) {
  std::vector<float> d(s * s);
  const double c = (static_cast<double>(s) - 1.0) / 2.0;
  for (std::size_t y = 0; y < s; ++y)
    for (std::size_t x = 0; x < s; ++x) {
      const double dy = (static_cast<double>(y) - c) / static_cast<double>(s);
      const double dx = (static_cast<double>(x) - c) / static_cast<double>(s);
      d[y * s + x] = static_cast<float>(std::exp(-(dy * dy + dx * dx) / (2.0 * 0.12)));
    }
  return TensorT<float>::from_data({1, 1, s, s}, std::move(d));
}

inline TensorT<float> synthetic_spoof_reflection(std::size_t s, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> r(3 * s * s);
  for (auto& v : r) v = static_cast<float>(0.6 + rng.uniform(-0.05, 0.05));
  return TensorT<float>::from_data({1, 3, s, s}, std::move(r));
}

}  // namespace detail

// Builds the supervision targets for one manifest entry. Maps are loaded
// from the entry's files when present; a missing file on the non-zeroed
// side falls back to the synthetic defaults with a warning.
inline SupervisionTargets make_targets(const ManifestEntry& entry, std::size_t map_size,
                                       bool material_mode = false) {
  SupervisionTargets t;
  t.material = material_mode;
  const bool live = entry.is_live();
  const std::size_t s = map_size;

  if (!live) {
    t.depth = TensorT<float>::zeros({1, 1, s, s});
  } else if (entry.depth_map_path) {
    auto m = detail::load_map(*entry.depth_map_path, s, 1);
    t.depth = TensorT<float>::from_data(
        {1, 1, s, s}, std::vector<float>(m.values().begin(), m.values().end()));
  } else {
    log_warn("no depth map for live sample ", entry.image_path,
             ", using the synthetic default");
    t.depth = detail::synthetic_live_depth(s);
  }

  if (live) {
    t.reflection = TensorT<float>::zeros({1, 3, s, s});
  } else if (entry.reflection_map_path) {
    auto m = detail::load_map(*entry.reflection_map_path, s, 3);
    // HWC map to NCHW target
    std::vector<float> r(3 * s * s);
    for (std::size_t y = 0; y < s; ++y)
      for (std::size_t x = 0; x < s; ++x)
        for (std::size_t c = 0; c < 3; ++c)
          r[(c * s + y) * s + x] = m.values()[(y * s + x) * 3 + c];
    t.reflection = TensorT<float>::from_data({1, 3, s, s}, std::move(r));
  } else {
    log_warn("no reflection map for spoof sample ", entry.image_path,
             ", using the synthetic default");
    t.reflection = detail::synthetic_spoof_reflection(s, hash_str(entry.image_path));
  }

  if (material_mode) {
    t.patch_classes.assign(s * s, material_class_of(entry));
  } else {
    t.patch = TensorT<float>::full({1, 1, s, s}, live ? 1.f : 0.f);
  }
  return t;
}

}  // namespace bifas
