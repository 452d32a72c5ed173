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

#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "bifas/adam.hpp"
#include "bifas/checkpoint.hpp"
#include "bifas/config.hpp"
#include "bifas/image_io.hpp"
#include "bifas/log.hpp"
#include "bifas/manifest.hpp"
#include "bifas/metrics.hpp"
#include "bifas/model.hpp"
#include "bifas/targets.hpp"

namespace bifas {

struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LoadedSample {
  TensorT<float> image;  // [1,3,S,S]
  SupervisionTargets targets;
  bool attack = false;
  std::string attack_type;
};

// Decodes images and builds targets at the model's resolution, with an
// in-memory cache. Larger source images are box-downscaled by an integer
// factor.
class SampleLoader {
 public:
  SampleLoader(std::size_t input_size, bool material_mode, bool cache)
      : input_size_(input_size),
        map_size_(input_size / 8),
        material_(material_mode),
        cache_enabled_(cache) {}

  const LoadedSample& load(const ManifestEntry& entry) {
    if (cache_enabled_) {
      auto it = cache_.find(entry.image_path);
      if (it != cache_.end()) return it->second;
    }
    LoadedSample s;
    auto img = read_image(entry.image_path);
    if (img.dim(2) != 3)
      throw TrainError(entry.image_path + ": expected an RGB image");
    if (img.dim(0) != img.dim(1))
      throw TrainError(entry.image_path + ": expected a square image, got " +
                       shape_str(img.shape()));
    if (img.dim(0) % input_size_ != 0)
      throw TrainError(entry.image_path + ": cannot scale " +
                       std::to_string(img.dim(0)) + " to input size " +
                       std::to_string(input_size_));
    if (img.dim(0) != input_size_) img = downscale_box(img, img.dim(0) / input_size_);
    s.image = nchw_from_hwc(img);
    s.targets = make_targets(entry, map_size_, material_);
    s.attack = !entry.is_live();
    s.attack_type = entry.attack_type.value_or("");
    if (!cache_enabled_) {
      scratch_ = std::move(s);
      return scratch_;
    }
    return cache_.emplace(entry.image_path, std::move(s)).first->second;
  }

 private:
  std::size_t input_size_;
  std::size_t map_size_;
  bool material_;
  bool cache_enabled_;
  std::unordered_map<std::string, LoadedSample> cache_;
  LoadedSample scratch_;
};

struct EpochStats {
  double loss = 0.0, loss_depth = 0.0, loss_reflection = 0.0, loss_patch = 0.0;
  std::size_t samples = 0;
};

struct TrainResult {
  std::size_t steps = 0;
  std::size_t epochs = 0;
  std::vector<double> step_losses;  // batch-mean overall loss per optimizer step
  std::vector<EpochStats> epoch_stats;
  std::string final_checkpoint;
};

namespace detail {

template <typename T>
struct SampleLoss {
  TensorT<T> total, depth, reflection, patch;
};

// Per-sample loss graph: L_depth + L_reflection + L_patch in binary mode,
// patch-only categorical cross-entropy in material mode.
inline SampleLoss<float> sample_loss(const Model<float>& model, const LoadedSample& s) {
  auto out = model(s.image);
  SampleLoss<float> l;
  if (s.targets.material) {
    l.patch = ce_loss(out.patch, s.targets.patch_classes);
    l.total = l.patch;
    l.depth = Tensor::scalar(0.f);
    l.reflection = Tensor::scalar(0.f);
  } else {
    l.depth = loss_depth(out.depth, s.targets.depth);
    l.reflection = loss_reflection(out.reflection, s.targets.reflection);
    l.patch = loss_patch(out.patch, s.targets.patch);
    l.total = loss_overall(l.depth, l.reflection, l.patch);
  }
  return l;
}

}  // namespace detail

// Minimizes the overall loss over shuffled mini-batches with Adam and the
// halving learning-rate schedule. Deterministic given the config seed:
// initialization, shuffling and accumulation order are all derived from it.
inline TrainResult train(const std::vector<ManifestEntry>& entries, const FullConfig& config,
                         const std::string& out_dir) {
  config.validate();
  if (entries.empty()) throw TrainError("train: empty manifest");
  const bool material = config.model.heads.material_mode();
  if (!material) {
    std::size_t live = 0, spoof = 0;
    for (const auto& e : entries) (e.is_live() ? live : spoof)++;
    if (live == 0 || spoof == 0)
      throw TrainError("train: binary mode needs both live and spoof samples, got " +
                       std::to_string(live) + " live / " + std::to_string(spoof) +
                       " spoof");
  }
  std::filesystem::create_directories(out_dir);
  std::ofstream log_file(out_dir + "/train_log.jsonl");

  auto model = Model<float>::build(config.model, config.train.seed);
  auto reg = model.params();
  auto adam = AdamState<float>::init(reg);
  SampleLoader loader(config.model.bcn.input_size, material, config.train.cache_samples);
  Rng shuffle_rng = Rng(config.train.seed).fork("shuffle");

  TrainResult result;
  std::vector<std::size_t> order(entries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const std::size_t batch = config.train.batch_size;
  bool stop = false;
  for (std::size_t epoch = 0; epoch < config.train.max_epochs && !stop; ++epoch) {
    const double lr = lr_schedule(epoch, config.train.lr, config.train.lr_halving_period);
    shuffle_rng.shuffle(order);
    EpochStats stats;
    for (std::size_t start = 0; start < order.size() && !stop; start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const float inv_batch = 1.f / static_cast<float>(end - start);
      reg.zero_grad();
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const auto& sample = loader.load(entries[order[k]]);
        auto loss = detail::sample_loss(model, sample);
        scale(loss.total, inv_batch).backward();
        batch_loss += static_cast<double>(loss.total.item()) * inv_batch;
        stats.loss += loss.total.item();
        stats.loss_depth += loss.depth.item();
        stats.loss_reflection += loss.reflection.item();
        stats.loss_patch += loss.patch.item();
        ++stats.samples;
      }
      adam_step(reg, adam, lr, config.train.weight_decay);
      result.step_losses.push_back(batch_loss);
      ++result.steps;
      if (config.train.max_steps > 0 && result.steps >= config.train.max_steps) stop = true;
    }
    result.epochs = epoch + 1;
    if (stats.samples > 0) {
      const double inv = 1.0 / static_cast<double>(stats.samples);
      stats.loss *= inv;
      stats.loss_depth *= inv;
      stats.loss_reflection *= inv;
      stats.loss_patch *= inv;
    }
    result.epoch_stats.push_back(stats);
    nlohmann::json line = {{"epoch", epoch},
                           {"lr", lr},
                           {"loss", stats.loss},
                           {"loss_depth", stats.loss_depth},
                           {"loss_reflection", stats.loss_reflection},
                           {"loss_patch", stats.loss_patch},
                           {"steps", result.steps}};
    log_file << line.dump() << "\n";
    log_file.flush();
    log_info("epoch ", epoch, " loss ", stats.loss, " lr ", lr);

    if (config.train.checkpoint_every > 0 && (epoch + 1) % config.train.checkpoint_every == 0) {
      checkpoint_save(out_dir + "/ckpt_epoch_" + std::to_string(epoch + 1) + ".bfc", reg,
                      config_to_json(config));
    }
  }

  result.final_checkpoint = out_dir + "/model.bfc";
  checkpoint_save(result.final_checkpoint, reg, config_to_json(config));
  return result;
}

// Scores every entry with the fused test score. Binary mode only.
inline std::vector<ScoredSample> score_entries(const Model<float>& model,
                                               const std::vector<ManifestEntry>& entries,
                                               SampleLoader& loader) {
  std::vector<ScoredSample> scored;
  scored.reserve(entries.size());
  for (const auto& e : entries) {
    const auto& sample = loader.load(e);
    auto out = model(sample.image);
    scored.push_back({score(out), sample.attack, sample.attack_type});
  }
  return scored;
}

// Rebuilds the model a checkpoint was trained with (config travels in the
// checkpoint header) and restores its parameters.
inline std::pair<Model<float>, FullConfig> model_from_checkpoint(const std::string& path) {
  auto ckpt = checkpoint_load(path);
  if (ckpt.config.is_null())
    throw CheckpointError(CheckpointErrorCode::bad_header,
                          path + ": checkpoint carries no config");
  FullConfig cfg = config_from_json(ckpt.config);
  auto model = Model<float>::build(cfg.model, cfg.train.seed);
  auto reg = model.params();
  checkpoint_apply(ckpt, reg);
  return {std::move(model), cfg};
}

// Scores a manifest against a checkpoint and sweeps the thresholds. With a
// dev manifest the operating threshold is the dev-set EER threshold;
// otherwise the test-set EER threshold is used and the report flags it.
inline EvalReport evaluate_checkpoint(const std::string& ckpt_path,
                                      const std::vector<ManifestEntry>& test_entries,
                                      const std::vector<ManifestEntry>* dev_entries = nullptr) {
  auto [model, cfg] = model_from_checkpoint(ckpt_path);
  if (cfg.model.heads.material_mode())
    throw TrainError("evaluate: material-mode checkpoints have no binary score");
  SampleLoader loader(cfg.model.bcn.input_size, false, cfg.train.cache_samples);
  auto scored = score_entries(model, test_entries, loader);
  if (dev_entries && !dev_entries->empty()) {
    auto dev_scored = score_entries(model, *dev_entries, loader);
    return evaluate_scores(scored, ThresholdPolicy::dev_eer(), &dev_scored);
  }
  return evaluate_scores(scored, ThresholdPolicy::test_eer());
}

inline nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json j;
  j["threshold_policy"] = {{"policy", r.threshold_policy},
                           {"threshold", r.threshold},
                           {"chosen_on_test_set", r.threshold_flagged}};
  j["headline"] = {{"apcer", r.apcer}, {"bpcer", r.bpcer}, {"acer", r.acer}};
  if (r.eer_defined) {
    j["headline"]["eer"] = r.eer;
    j["headline"]["eer_threshold"] = r.eer_threshold;
  } else {
    j["headline"]["eer"] = nullptr;
  }
  if (r.auc_defined)
    j["headline"]["auc"] = r.auc;
  else
    j["headline"]["auc"] = nullptr;
  if (r.hter) j["headline"]["hter"] = *r.hter;
  j["counts"] = {{"live", r.n_live}, {"attack", r.n_attack}};
  if (!r.apcer_per_type.empty()) {
    j["apcer_per_type"] = r.apcer_per_type;
    j["apcer_max_over_types"] = *r.apcer_max_over_types;
  }
  j["sweep"] = nlohmann::json::array();
  for (const auto& p : r.sweep)
    j["sweep"].push_back({{"threshold", p.threshold},
                          {"apcer", p.apcer},
                          {"bpcer", p.bpcer},
                          {"acer", p.acer}});
  return j;
}

}  // namespace bifas
