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

#include <cstdint>

#include "bifas/bcn.hpp"
#include "bifas/heads.hpp"
#include "bifas/mfrm.hpp"

namespace bifas {

struct ModelConfig {
  BcnConfig bcn;
  MfrmConfig mfrm;
  HeadConfig heads;

  void validate() const {
    bcn.validate();
    mfrm.validate();
    heads.validate();
    for (const auto& triple : bcn.level_channels)
      if (triple[2] < mfrm.compressed_channels)
        throw TensorError("ModelConfig: mfrm compressed_channels exceeds a level width");
  }

  // Head maps live at 1/8 of the input resolution.
  std::size_t map_size() const { return bcn.input_size / 8; }
};

// The full pipeline: BCN features -> MFRM fusion -> three supervision heads.
template <typename T>
struct Model {
  ModelConfig config;
  Bcn<T> bcn;
  Mfrm<T> mfrm;
  Heads<T> heads;

  static Model build(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Model m;
    m.config = cfg;
    Rng root(seed);
    Rng bcn_rng = root.fork("bcn");
    Rng mfrm_rng = root.fork("mfrm");
    Rng heads_rng = root.fork("heads");
    m.bcn = Bcn<T>::make(cfg.bcn, bcn_rng);
    m.mfrm = Mfrm<T>::make(cfg.bcn, cfg.mfrm, mfrm_rng);
    m.heads = Heads<T>::make(cfg.bcn.fused_channels(), cfg.heads, heads_rng);
    return m;
  }

  HeadOutputs<T> operator()(const TensorT<T>& image) const {
    return heads(mfrm(bcn(image)));
  }

  ParamRegistry<T> params() {
    ParamRegistry<T> reg;
    bcn.register_into(reg, "bcn");
    mfrm.register_into(reg, "mfrm");
    heads.register_into(reg, "heads");
    return reg;
  }
};

}  // namespace bifas
