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
#include <string>

#include <json.hpp>

#include "bifas/model.hpp"

namespace bifas {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double lr = 1e-4;
  double weight_decay = 5e-5;
  std::size_t batch_size = 7;
  std::size_t max_epochs = 1300;
  std::size_t lr_halving_period = 500;  // epochs
  std::uint64_t seed = 0;
  std::size_t max_steps = 0;         // optimizer-step cap; 0 = epochs only
  std::size_t checkpoint_every = 0;  // epochs between checkpoints; 0 = final only
  bool cache_samples = true;

  void validate() const {
    if (lr <= 0 || weight_decay < 0) throw ConfigError("TrainConfig: bad lr/weight_decay");
    if (batch_size == 0) throw ConfigError("TrainConfig: batch_size must be positive");
    if (lr_halving_period == 0)
      throw ConfigError("TrainConfig: lr_halving_period must be positive");
  }
};

struct FullConfig {
  TrainConfig train;
  ModelConfig model;

  void validate() const {
    train.validate();
    model.validate();
  }
};

namespace detail {

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void from_json_dbo(const nlohmann::json& j, DboParams& p) {
  maybe(j, "sigma_r", p.sigma_r);
  maybe(j, "window", p.window);
  maybe(j, "use_spatial", p.use_spatial);
  maybe(j, "sigma_s", p.sigma_s);
}

}  // namespace detail

// Parses a config JSON with the trained defaults filled in for every
// missing key, so "{}" is the paper configuration.
inline FullConfig config_from_json(const nlohmann::json& j) {
  FullConfig cfg;
  if (j.contains("train")) {
    const auto& t = j.at("train");
    detail::maybe(t, "lr", cfg.train.lr);
    detail::maybe(t, "weight_decay", cfg.train.weight_decay);
    detail::maybe(t, "batch_size", cfg.train.batch_size);
    detail::maybe(t, "max_epochs", cfg.train.max_epochs);
    detail::maybe(t, "lr_halving_period", cfg.train.lr_halving_period);
    detail::maybe(t, "seed", cfg.train.seed);
    detail::maybe(t, "max_steps", cfg.train.max_steps);
    detail::maybe(t, "checkpoint_every", cfg.train.checkpoint_every);
    detail::maybe(t, "cache_samples", cfg.train.cache_samples);
  }
  if (j.contains("bcn")) {
    const auto& b = j.at("bcn");
    detail::maybe(b, "input_size", cfg.model.bcn.input_size);
    detail::maybe(b, "stem_channels", cfg.model.bcn.stem_channels);
    if (b.contains("level_channels")) {
      const auto& lc = b.at("level_channels");
      if (!lc.is_array() || lc.size() != 3)
        throw ConfigError("bcn.level_channels must be 3 triples");
      for (std::size_t l = 0; l < 3; ++l) {
        const auto triple = lc[l].get<std::vector<std::size_t>>();
        if (triple.size() != 3) throw ConfigError("bcn.level_channels entries need 3 values");
        for (std::size_t i = 0; i < 3; ++i) cfg.model.bcn.level_channels[l][i] = triple[i];
      }
    }
    if (b.contains("dbo")) detail::from_json_dbo(b.at("dbo"), cfg.model.bcn.dbo);
    detail::maybe(b, "dbo_on_output", cfg.model.bcn.dbo_on_output);
    detail::maybe(b, "disable_dbo", cfg.model.bcn.disable_dbo);
  }
  if (j.contains("mfrm")) {
    const auto& m = j.at("mfrm");
    detail::maybe(m, "compressed_channels", cfg.model.mfrm.compressed_channels);
    detail::maybe(m, "kernel_size", cfg.model.mfrm.kernel_size);
    detail::maybe(m, "encoder_kernel", cfg.model.mfrm.encoder_kernel);
  }
  if (j.contains("heads")) {
    const auto& h = j.at("heads");
    detail::maybe(h, "channels", cfg.model.heads.channels);
    detail::maybe(h, "patch_classes", cfg.model.heads.patch_classes);
  }
  cfg.validate();
  return cfg;
}

inline nlohmann::json config_to_json(const FullConfig& cfg) {
  nlohmann::json j;
  j["train"] = {{"lr", cfg.train.lr},
                {"weight_decay", cfg.train.weight_decay},
                {"batch_size", cfg.train.batch_size},
                {"max_epochs", cfg.train.max_epochs},
                {"lr_halving_period", cfg.train.lr_halving_period},
                {"seed", cfg.train.seed},
                {"max_steps", cfg.train.max_steps},
                {"checkpoint_every", cfg.train.checkpoint_every},
                {"cache_samples", cfg.train.cache_samples}};
  j["bcn"] = {{"input_size", cfg.model.bcn.input_size},
              {"stem_channels", cfg.model.bcn.stem_channels},
              {"level_channels",
               {cfg.model.bcn.level_channels[0], cfg.model.bcn.level_channels[1],
                cfg.model.bcn.level_channels[2]}},
              {"dbo",
               {{"sigma_r", cfg.model.bcn.dbo.sigma_r},
                {"window", cfg.model.bcn.dbo.window},
                {"use_spatial", cfg.model.bcn.dbo.use_spatial},
                {"sigma_s", cfg.model.bcn.dbo.sigma_s}}},
              {"dbo_on_output", cfg.model.bcn.dbo_on_output},
              {"disable_dbo", cfg.model.bcn.disable_dbo}};
  j["mfrm"] = {{"compressed_channels", cfg.model.mfrm.compressed_channels},
               {"kernel_size", cfg.model.mfrm.kernel_size},
               {"encoder_kernel", cfg.model.mfrm.encoder_kernel}};
  j["heads"] = {{"channels", cfg.model.heads.channels},
                {"patch_classes", cfg.model.heads.patch_classes}};
  return j;
}

inline FullConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace bifas
