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
#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "bifas/layers.hpp"
#include "bifas/tensor.hpp"

namespace bifas {

// Checkpoint file layout: one line of compact JSON (schema version, tensor
// names sorted and unique, shapes, byte offsets into the payload), newline,
// then the raw little-endian float32 payload. Round-trips bit-exactly.
enum class CheckpointErrorCode { bad_header, shape_mismatch, truncated };

struct CheckpointError : std::runtime_error {
  CheckpointErrorCode code;
  CheckpointError(CheckpointErrorCode c, const std::string& msg)
      : std::runtime_error(msg), code(c) {}
};

struct Checkpoint {
  std::vector<std::pair<std::string, TensorT<float>>> tensors;  // sorted by name
  nlohmann::json config;  // model/train configuration carried alongside

  const TensorT<float>* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }
};

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian");

inline void checkpoint_save(const std::string& path, const ParamRegistry<float>& reg,
                            const nlohmann::json& config = {}) {
  std::vector<std::pair<std::string, TensorT<float>>> sorted(reg.items.begin(),
                                                             reg.items.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i].first == sorted[i - 1].first)
      throw CheckpointError(CheckpointErrorCode::bad_header,
                            "duplicate tensor name '" + sorted[i].first + "'");
  for (const auto& [name, t] : sorted)
    for (float v : t.values())
      if (!std::isfinite(v))
        throw CheckpointError(CheckpointErrorCode::bad_header,
                              "non-finite value in tensor '" + name + "'");

  nlohmann::json header;
  header["schema_version"] = 1;
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : sorted) {
    nlohmann::json entry;
    entry["name"] = name;
    entry["shape"] = t.shape();
    entry["offset"] = offset;
    entry["nbytes"] = t.numel() * sizeof(float);
    header["tensors"].push_back(entry);
    offset += t.numel() * sizeof(float);
  }
  if (!config.is_null()) header["config"] = config;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError(CheckpointErrorCode::bad_header,
                                  "cannot open " + path + " for writing");
  out << header.dump() << "\n";
  for (const auto& [name, t] : sorted)
    out.write(reinterpret_cast<const char*>(t.values().data()),
              static_cast<std::streamsize>(t.numel() * sizeof(float)));
  if (!out) throw CheckpointError(CheckpointErrorCode::truncated,
                                  "short write to " + path);
}

inline Checkpoint checkpoint_load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw CheckpointError(CheckpointErrorCode::bad_header, "cannot open " + path);
  std::string header_line;
  if (!std::getline(in, header_line))
    throw CheckpointError(CheckpointErrorCode::bad_header, path + ": empty file");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(CheckpointErrorCode::bad_header,
                          path + ": header is not valid JSON: " + e.what());
  }
  if (!header.contains("schema_version") || header["schema_version"] != 1)
    throw CheckpointError(CheckpointErrorCode::bad_header,
                          path + ": unsupported schema version");
  if (!header.contains("tensors") || !header["tensors"].is_array())
    throw CheckpointError(CheckpointErrorCode::bad_header, path + ": missing tensor table");

  const std::streamoff payload_start = in.tellg();
  in.seekg(0, std::ios::end);
  const std::uint64_t payload_size = static_cast<std::uint64_t>(in.tellg() - payload_start);

  Checkpoint ckpt;
  if (header.contains("config")) ckpt.config = header["config"];
  std::string prev_name;
  for (const auto& entry : header["tensors"]) {
    std::string name;
    Shape shape;
    std::uint64_t offset = 0, nbytes = 0;
    try {
      name = entry.at("name").get<std::string>();
      shape = entry.at("shape").get<Shape>();
      offset = entry.at("offset").get<std::uint64_t>();
      nbytes = entry.at("nbytes").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw CheckpointError(CheckpointErrorCode::bad_header,
                            path + ": malformed tensor entry: " + e.what());
    }
    if (!prev_name.empty() && !(prev_name < name))
      throw CheckpointError(CheckpointErrorCode::bad_header,
                            path + ": tensor names not sorted/unique at '" + name + "'");
    prev_name = name;
    if (nbytes != shape_numel(shape) * sizeof(float))
      throw CheckpointError(CheckpointErrorCode::shape_mismatch,
                            path + ": tensor '" + name + "' shape " + shape_str(shape) +
                                " disagrees with nbytes " + std::to_string(nbytes));
    if (offset + nbytes > payload_size)
      throw CheckpointError(CheckpointErrorCode::truncated,
                            path + ": payload truncated at tensor '" + name + "'");
    std::vector<float> data(shape_numel(shape));
    in.seekg(payload_start + static_cast<std::streamoff>(offset));
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(nbytes));
    if (!in)
      throw CheckpointError(CheckpointErrorCode::truncated,
                            path + ": short read for tensor '" + name + "'");
    ckpt.tensors.emplace_back(name, TensorT<float>::from_data(shape, std::move(data)));
  }
  return ckpt;
}

// Copies checkpoint values into a built model's registry; every name must
// be present with a matching shape.
inline void checkpoint_apply(const Checkpoint& ckpt, ParamRegistry<float>& reg) {
  for (auto& [name, param] : reg.items) {
    const TensorT<float>* src = ckpt.find(name);
    if (!src)
      throw CheckpointError(CheckpointErrorCode::shape_mismatch,
                            "checkpoint is missing tensor '" + name + "'");
    if (src->shape() != param.shape())
      throw CheckpointError(CheckpointErrorCode::shape_mismatch,
                            "tensor '" + name + "': checkpoint " + shape_str(src->shape()) +
                                " vs model " + shape_str(param.shape()));
    std::copy(src->values().begin(), src->values().end(), param.values().begin());
  }
}

}  // namespace bifas
