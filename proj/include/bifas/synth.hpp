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
#include <filesystem>
#include <string>
#include <vector>

#include "bifas/image_io.hpp"
#include "bifas/manifest.hpp"
#include "bifas/rng.hpp"
#include "bifas/tensor.hpp"

namespace bifas {

// Desk-scale data generator. "Live" samples are smooth shaded ellipsoid face
// proxies with fine skin noise; "spoof" samples rerender the same geometry
// through a simulated carrier: print (paper grain, detail blur, reduced
// contrast) or replay (moire-like periodic pattern plus a specular band and
// a cold color cast). Matching 32x32 depth/reflection maps follow the
// supervision normalization rules: spoof depth and live reflection are
// all-black files.
namespace synth {

constexpr std::size_t kImageSize = 256;
constexpr std::size_t kMapSize = 32;

namespace detail {

inline double lattice(std::uint64_t seed, std::int64_t ix, std::int64_t iy) {
  const std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(ix) *
                                                       0x632be59bd9b4e019ull ^
                                                       static_cast<std::uint64_t>(iy)));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double value_noise(double x, double y, std::uint64_t seed) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx);
  const auto iy = static_cast<std::int64_t>(fy);
  double tx = x - fx, ty = y - fy;
  tx = tx * tx * (3.0 - 2.0 * tx);
  ty = ty * ty * (3.0 - 2.0 * ty);
  const double a = lattice(seed, ix, iy), b = lattice(seed, ix + 1, iy);
  const double c = lattice(seed, ix, iy + 1), d = lattice(seed, ix + 1, iy + 1);
  return (a + (b - a) * tx) * (1.0 - ty) + (c + (d - c) * tx) * ty;
}

// Fractal value noise in [-1, 1].
inline double fnoise(double x, double y, std::uint64_t seed, int octaves) {
  double acc = 0.0, amp = 1.0, norm = 0.0;
  for (int o = 0; o < octaves; ++o) {
    acc += amp * (2.0 * value_noise(x, y, seed + static_cast<std::uint64_t>(o)) - 1.0);
    norm += amp;
    x *= 2.0;
    y *= 2.0;
    amp *= 0.5;
  }
  return acc / norm;
}

struct FaceGeometry {
  double cx, cy;      // head center, pixels
  double ax, ay;      // semi-axes
  double light_x;     // lateral light direction
  double skin[3];     // base albedo
  std::uint64_t noise_seed;
};

inline FaceGeometry sample_geometry(Rng& rng) {
  FaceGeometry g;
  const double s = static_cast<double>(kImageSize);
  g.cx = s * rng.uniform(0.46, 0.54);
  g.cy = s * rng.uniform(0.48, 0.56);
  g.ax = s * rng.uniform(0.26, 0.33);
  g.ay = s * rng.uniform(0.35, 0.42);
  g.light_x = rng.uniform(-0.35, 0.35);
  g.skin[0] = rng.uniform(0.72, 0.85);
  g.skin[1] = rng.uniform(0.55, 0.68);
  g.skin[2] = rng.uniform(0.43, 0.56);
  g.noise_seed = rng.next_u64();
  return g;
}

// Ellipsoid height in [0,1] at pixel coordinates, 0 outside the head.
inline double face_height(const FaceGeometry& g, double x, double y) {
  const double dx = (x - g.cx) / g.ax;
  const double dy = (y - g.cy) / g.ay;
  const double q = 1.0 - dx * dx - dy * dy;
  return q > 0.0 ? std::sqrt(q) : 0.0;
}

inline void render_face(const FaceGeometry& g, std::vector<float>& rgb) {
  const std::size_t S = kImageSize;
  rgb.assign(S * S * 3, 0.f);
  for (std::size_t y = 0; y < S; ++y) {
    for (std::size_t x = 0; x < S; ++x) {
      const double xf = static_cast<double>(x), yf = static_cast<double>(y);
      // backdrop: soft vertical gradient with large-scale cloudiness
      double r, gc, b;
      const double bg = 0.32 + 0.18 * yf / static_cast<double>(S) +
                        0.04 * fnoise(xf / 90.0, yf / 90.0, g.noise_seed ^ 0xbeef, 2);
      r = bg * 0.9;
      gc = bg;
      b = bg * 1.08;

      const double z = face_height(g, xf, yf);
      if (z > 0.0) {
        const double dx = (xf - g.cx) / g.ax;
        const double shade =
            std::clamp(0.35 + 0.62 * z + g.light_x * dx * 0.5, 0.05, 1.0);
        const double skin_tex =
            1.0 + 0.05 * fnoise(xf / 3.0, yf / 3.0, g.noise_seed, 3);
        r = g.skin[0] * shade * skin_tex;
        gc = g.skin[1] * shade * skin_tex;
        b = g.skin[2] * shade * skin_tex;

        // eyes and mouth as darkened ellipses
        auto darken = [&](double ex, double ey, double rx, double ry, double f) {
          const double ddx = (xf - ex) / rx, ddy = (yf - ey) / ry;
          if (ddx * ddx + ddy * ddy < 1.0) {
            r *= f;
            gc *= f;
            b *= f;
          }
        };
        darken(g.cx - 0.38 * g.ax, g.cy - 0.22 * g.ay, 0.14 * g.ax, 0.07 * g.ay, 0.35);
        darken(g.cx + 0.38 * g.ax, g.cy - 0.22 * g.ay, 0.14 * g.ax, 0.07 * g.ay, 0.35);
        darken(g.cx, g.cy + 0.45 * g.ay, 0.30 * g.ax, 0.06 * g.ay, 0.55);
      }
      const std::size_t i = (y * S + x) * 3;
      rgb[i] = static_cast<float>(std::clamp(r, 0.0, 1.0));
      rgb[i + 1] = static_cast<float>(std::clamp(gc, 0.0, 1.0));
      rgb[i + 2] = static_cast<float>(std::clamp(b, 0.0, 1.0));
    }
  }
}

// Fine per-pixel sensor noise on top of everything.
inline void add_sensor_noise(std::vector<float>& rgb, Rng& rng, double amp) {
  for (auto& v : rgb)
    v = static_cast<float>(std::clamp(static_cast<double>(v) + rng.uniform(-amp, amp),
                                      0.0, 1.0));
}

inline void apply_print_carrier(std::vector<float>& rgb, Rng& rng) {
  const std::size_t S = kImageSize;
  // detail loss: 3x3 box blur
  std::vector<float> blurred(rgb.size());
  for (std::size_t y = 0; y < S; ++y)
    for (std::size_t x = 0; x < S; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        int cnt = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const std::ptrdiff_t yy = static_cast<std::ptrdiff_t>(y) + dy;
            const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(x) + dx;
            if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(S) ||
                xx >= static_cast<std::ptrdiff_t>(S))
              continue;
            acc += rgb[(static_cast<std::size_t>(yy) * S + static_cast<std::size_t>(xx)) *
                           3 +
                       c];
            ++cnt;
          }
        blurred[(y * S + x) * 3 + c] = static_cast<float>(acc / cnt);
      }
  rgb.swap(blurred);

  const double contrast = rng.uniform(0.55, 0.68);
  const double brightness = rng.uniform(0.02, 0.07);
  const std::uint64_t grain_seed = rng.next_u64();
  for (std::size_t y = 0; y < S; ++y)
    for (std::size_t x = 0; x < S; ++x) {
      const double grain =
          0.06 * fnoise(static_cast<double>(x) / 7.0, static_cast<double>(y) / 7.0,
                        grain_seed, 2);
      for (std::size_t c = 0; c < 3; ++c) {
        double v = rgb[(y * S + x) * 3 + c];
        v = 0.5 + (v - 0.5) * contrast + brightness + grain;
        rgb[(y * S + x) * 3 + c] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
}

inline void apply_replay_carrier(std::vector<float>& rgb, Rng& rng) {
  const std::size_t S = kImageSize;
  const double f1 = rng.uniform(0.18, 0.34);
  const double f2 = rng.uniform(0.05, 0.11);  // low component survives downscaling
  const double ang = rng.uniform(0.0, 3.14159);
  const double phase = rng.uniform(0.0, 6.28318);
  const double band_c = rng.uniform(0.3, 0.7) * static_cast<double>(S);
  const double band_w = rng.uniform(10.0, 18.0);
  const double ca = std::cos(ang), sa = std::sin(ang);
  for (std::size_t y = 0; y < S; ++y)
    for (std::size_t x = 0; x < S; ++x) {
      const double xf = static_cast<double>(x), yf = static_cast<double>(y);
      const double u = ca * xf + sa * yf;
      const double v = -sa * xf + ca * yf;
      const double moire = 0.045 * std::sin(6.28318 * f1 * u + phase) *
                               std::sin(6.28318 * f1 * 0.83 * v) +
                           0.05 * std::sin(6.28318 * f2 * (u + 0.4 * v));
      const double d = (u - band_c) / band_w;
      const double specular = 0.13 * std::exp(-0.5 * d * d);
      const std::size_t i = (y * S + x) * 3;
      const double lift = moire + specular;
      rgb[i] = static_cast<float>(std::clamp(rgb[i] + lift - 0.02, 0.0, 1.0));
      rgb[i + 1] = static_cast<float>(std::clamp(rgb[i + 1] + lift, 0.0, 1.0));
      rgb[i + 2] = static_cast<float>(std::clamp(rgb[i + 2] + lift + 0.04, 0.0, 1.0));
    }
}

inline TensorT<float> depth_map_for(const FaceGeometry& g) {
  const std::size_t S = kMapSize;
  const double scale = static_cast<double>(kImageSize) / static_cast<double>(S);
  std::vector<float> d(S * S);
  for (std::size_t y = 0; y < S; ++y)
    for (std::size_t x = 0; x < S; ++x)
      d[y * S + x] = static_cast<float>(face_height(
          g, (static_cast<double>(x) + 0.5) * scale, (static_cast<double>(y) + 0.5) * scale));
  return TensorT<float>::from_data({S, S, 1}, std::move(d));
}

inline TensorT<float> reflection_map_spoof(Rng& rng) {
  const std::size_t S = kMapSize;
  std::vector<float> r(S * S * 3);
  for (auto& v : r) v = static_cast<float>(std::clamp(0.6 + rng.uniform(-0.05, 0.05), 0.0, 1.0));
  return TensorT<float>::from_data({S, S, 3}, std::move(r));
}

}  // namespace detail

// Generates n_live + n_spoof samples under out_dir and returns the manifest
// entries (also written to out_dir/manifest.jsonl). Spoof carriers alternate
// print and replay. Deterministic per (seed, kind, index).
inline std::vector<ManifestEntry> generate(std::size_t n_live, std::size_t n_spoof,
                                           std::uint64_t seed, const std::string& out_dir) {
  if (n_live == 0 || n_spoof == 0)
    throw ManifestError("synth: sample counts must be positive");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  std::vector<ManifestEntry> entries;
  std::vector<float> rgb;
  char name[64];

  const TensorT<float> black_map = TensorT<float>::zeros({kMapSize, kMapSize, 1});
  const TensorT<float> black_rgb = TensorT<float>::zeros({kMapSize, kMapSize, 3});

  for (std::size_t i = 0; i < n_live; ++i) {
    Rng rng(hash_combine(hash_combine(seed, hash_str("live")), i));
    const auto geo = detail::sample_geometry(rng);
    detail::render_face(geo, rgb);
    detail::add_sensor_noise(rgb, rng, 0.012);

    std::snprintf(name, sizeof(name), "live_%04zu", i);
    const std::string img = out_dir + "/" + name + ".png";
    const std::string depth = out_dir + "/" + name + "_depth.png";
    const std::string refl = out_dir + "/" + name + "_refl.png";
    write_png(img, TensorT<float>::from_data({kImageSize, kImageSize, 3}, rgb));
    write_png(depth, detail::depth_map_for(geo));
    write_png(refl, black_rgb);
    entries.push_back({img, "live", std::nullopt, depth, refl});
  }
  for (std::size_t i = 0; i < n_spoof; ++i) {
    Rng rng(hash_combine(hash_combine(seed, hash_str("spoof")), i));
    const auto geo = detail::sample_geometry(rng);
    detail::render_face(geo, rgb);
    const bool is_print = (i % 2 == 0);
    if (is_print)
      detail::apply_print_carrier(rgb, rng);
    else
      detail::apply_replay_carrier(rgb, rng);
    detail::add_sensor_noise(rgb, rng, 0.012);

    std::snprintf(name, sizeof(name), "spoof_%04zu", i);
    const std::string img = out_dir + "/" + name + ".png";
    const std::string depth = out_dir + "/" + name + "_depth.png";
    const std::string refl = out_dir + "/" + name + "_refl.png";
    write_png(img, TensorT<float>::from_data({kImageSize, kImageSize, 3}, rgb));
    write_png(depth, black_map);
    write_png(refl, detail::reflection_map_spoof(rng));
    entries.push_back({img, "spoof", is_print ? "print" : "replay", depth, refl});
  }
  write_manifest(out_dir + "/manifest.jsonl", entries);
  return entries;
}

// Two-sample Kolmogorov-Smirnov statistic between pixel-intensity samples.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double ks = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j])
      ++i;
    else
      ++j;
    const double fa = static_cast<double>(i) / static_cast<double>(a.size());
    const double fb = static_cast<double>(j) / static_cast<double>(b.size());
    ks = std::max(ks, std::abs(fa - fb));
  }
  return ks;
}

}  // namespace synth
}  // namespace bifas
