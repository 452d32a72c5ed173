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

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bifas/tensor.hpp"

namespace bifas {

// One sample of a dataset manifest (JSON lines, one object per line).
// label is "live" or "spoof" in binary mode; material manifests may use the
// class names directly (live/replay/print/mask/makeup).
struct ManifestEntry {
  std::string image_path;
  std::string label;
  std::optional<std::string> attack_type;          // e.g. print, replay
  std::optional<std::string> depth_map_path;       // 32x32 gray PNG
  std::optional<std::string> reflection_map_path;  // 32x32 RGB PNG

  bool is_live() const { return label == "live"; }
};

struct ManifestError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Material categories in fixed order; binary manifests map through
// attack_type when available.
inline const std::vector<std::string>& material_class_names() {
  static const std::vector<std::string> names = {"live", "replay", "print", "mask",
                                                 "makeup"};
  return names;
}

inline int material_class_of(const ManifestEntry& e) {
  const auto& names = material_class_names();
  for (std::size_t i = 0; i < names.size(); ++i)
    if (e.label == names[i]) return static_cast<int>(i);
  if (e.label == "spoof" && e.attack_type) {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (*e.attack_type == names[i]) return static_cast<int>(i);
  }
  throw ManifestError("no material class for label '" + e.label + "'");
}

inline bool valid_label(const std::string& label) {
  if (label == "live" || label == "spoof") return true;
  for (const auto& name : material_class_names())
    if (label == name) return true;
  return false;
}

inline std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest " + path);
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ManifestError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    ManifestEntry e;
    e.image_path = j.at("image_path").get<std::string>();
    e.label = j.at("label").get<std::string>();
    if (!valid_label(e.label))
      throw ManifestError(path + ":" + std::to_string(lineno) + ": invalid label '" +
                          e.label + "'");
    if (j.contains("attack_type") && !j["attack_type"].is_null())
      e.attack_type = j["attack_type"].get<std::string>();
    if (j.contains("depth_map_path") && !j["depth_map_path"].is_null())
      e.depth_map_path = j["depth_map_path"].get<std::string>();
    if (j.contains("reflection_map_path") && !j["reflection_map_path"].is_null())
      e.reflection_map_path = j["reflection_map_path"].get<std::string>();
    entries.push_back(std::move(e));
  }
  return entries;
}

inline void write_manifest(const std::string& path,
                           const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw ManifestError("cannot open manifest " + path + " for writing");
  for (const auto& e : entries) {
    nlohmann::json j;
    j["image_path"] = e.image_path;
    j["label"] = e.label;
    if (e.attack_type) j["attack_type"] = *e.attack_type;
    if (e.depth_map_path) j["depth_map_path"] = *e.depth_map_path;
    if (e.reflection_map_path) j["reflection_map_path"] = *e.reflection_map_path;
    out << j.dump() << "\n";
  }
}

}  // namespace bifas
