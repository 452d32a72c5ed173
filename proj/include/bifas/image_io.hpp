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

#include <png.h>

#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "bifas/tensor.hpp"

namespace bifas {

struct ImageIoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline bool has_suffix(const std::string& s, const char* suffix) {
  const std::size_t n = std::strlen(suffix);
  return s.size() >= n && s.compare(s.size() - n, n, suffix) == 0;
}

inline TensorT<float> read_png(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw ImageIoError("cannot open " + path);
  png_byte header[8];
  if (std::fread(header, 1, 8, f.get()) != 8 || png_sig_cmp(header, 0, 8))
    throw ImageIoError(path + ": not a PNG file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw ImageIoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw ImageIoError("png_create_info_struct failed");
  }
  std::vector<png_bytep> rows;
  std::vector<png_byte> pixels;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageIoError(path + ": PNG decode error");
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  png_set_strip_16(png);
  png_set_strip_alpha(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY &&
      png_get_bit_depth(png, info) < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);

  const std::size_t H = png_get_image_height(png, info);
  const std::size_t W = png_get_image_width(png, info);
  const std::size_t C = png_get_channels(png, info);
  if (C != 1 && C != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageIoError(path + ": unsupported channel count " + std::to_string(C));
  }
  pixels.resize(H * W * C);
  rows.resize(H);
  for (std::size_t y = 0; y < H; ++y) rows[y] = pixels.data() + y * W * C;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  std::vector<float> out(H * W * C);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pixels[i] / 255.f;
  return TensorT<float>::from_data({H, W, C}, std::move(out));
}

inline TensorT<float> read_ppm(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw ImageIoError("cannot open " + path);
  auto next_token = [&]() -> std::string {
    std::string tok;
    int c;
    while ((c = std::fgetc(f.get())) != EOF) {
      if (c == '#') {
        while ((c = std::fgetc(f.get())) != EOF && c != '\n') {}
        continue;
      }
      if (std::isspace(c)) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(static_cast<char>(c));
    }
    return tok;
  };
  const std::string magic = next_token();
  if (magic != "P6" && magic != "P5") throw ImageIoError(path + ": not a binary PPM/PGM");
  const std::size_t C = magic == "P6" ? 3 : 1;
  const std::size_t W = std::stoul(next_token());
  const std::size_t H = std::stoul(next_token());
  const std::size_t maxval = std::stoul(next_token());
  if (maxval != 255) throw ImageIoError(path + ": only maxval 255 supported");
  std::vector<unsigned char> pixels(H * W * C);
  if (std::fread(pixels.data(), 1, pixels.size(), f.get()) != pixels.size())
    throw ImageIoError(path + ": truncated pixel data");
  std::vector<float> out(pixels.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pixels[i] / 255.f;
  return TensorT<float>::from_data({H, W, C}, std::move(out));
}

}  // namespace detail

// Reads an 8-bit PNG or binary PPM/PGM into an HWC float tensor in [0,1].
inline TensorT<float> read_image(const std::string& path) {
  if (detail::has_suffix(path, ".ppm") || detail::has_suffix(path, ".pgm"))
    return detail::read_ppm(path);
  return detail::read_png(path);
}

// Writes an HWC tensor (1 or 3 channels) as an 8-bit PNG, clamping to [0,1].
inline void write_png(const std::string& path, const TensorT<float>& image) {
  if (image.ndim() != 3 || (image.dim(2) != 1 && image.dim(2) != 3))
    throw ImageIoError("write_png: image must be HWC with 1 or 3 channels, got " +
                       shape_str(image.shape()));
  const std::size_t H = image.dim(0), W = image.dim(1), C = image.dim(2);
  std::vector<png_byte> pixels(H * W * C);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const float v = std::clamp(image.values()[i], 0.f, 1.f);
    pixels[i] = static_cast<png_byte>(std::lround(v * 255.f));
  }

  detail::FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw ImageIoError("cannot open " + path + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw ImageIoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw ImageIoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ImageIoError(path + ": PNG encode error");
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(W), static_cast<png_uint_32>(H), 8,
               C == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(H);
  for (std::size_t y = 0; y < H; ++y) rows[y] = pixels.data() + y * W * C;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// Box-mean downscale by an integer factor; factor 1 is a copy.
inline TensorT<float> downscale_box(const TensorT<float>& image, std::size_t factor) {
  if (image.ndim() != 3)
    throw ImageIoError("downscale_box: image must be HWC, got " + shape_str(image.shape()));
  if (factor == 0) throw ImageIoError("downscale_box: factor must be positive");
  const std::size_t H = image.dim(0), W = image.dim(1), C = image.dim(2);
  if (factor == 1) return image.detached_copy();
  if (H % factor != 0 || W % factor != 0)
    throw ImageIoError("downscale_box: " + shape_str(image.shape()) +
                       " not divisible by factor " + std::to_string(factor));
  const std::size_t Ho = H / factor, Wo = W / factor;
  std::vector<float> out(Ho * Wo * C);
  const float inv = 1.f / static_cast<float>(factor * factor);
  for (std::size_t oy = 0; oy < Ho; ++oy)
    for (std::size_t ox = 0; ox < Wo; ++ox)
      for (std::size_t c = 0; c < C; ++c) {
        float acc = 0.f;
        for (std::size_t fy = 0; fy < factor; ++fy)
          for (std::size_t fx = 0; fx < factor; ++fx)
            acc += image.values()[((oy * factor + fy) * W + ox * factor + fx) * C + c];
        out[(oy * Wo + ox) * C + c] = acc * inv;
      }
  return TensorT<float>::from_data({Ho, Wo, C}, std::move(out));
}

// HWC [0,1] image to a 1xCxHxW tensor.
inline TensorT<float> nchw_from_hwc(const TensorT<float>& image) {
  const std::size_t H = image.dim(0), W = image.dim(1), C = image.dim(2);
  std::vector<float> out(image.numel());
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < C; ++c)
        out[(c * H + y) * W + x] = image.values()[(y * W + x) * C + c];
  return TensorT<float>::from_data({1, C, H, W}, std::move(out));
}

// 1xCxHxW tensor back to HWC.
inline TensorT<float> hwc_from_nchw(const TensorT<float>& t) {
  const std::size_t C = t.dim(1), H = t.dim(2), W = t.dim(3);
  std::vector<float> out(t.numel());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x)
        out[(y * W + x) * C + c] = t.values()[(c * H + y) * W + x];
  return TensorT<float>::from_data({H, W, C}, std::move(out));
}

}  // namespace bifas
