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

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "bifas/bilateral.hpp"
#include "bifas/config.hpp"
#include "bifas/gradcheck.hpp"
#include "bifas/synth.hpp"
#include "bifas/train.hpp"

namespace {

using namespace bifas;

int cmd_train(const std::string& config_path, const std::string& manifest_path,
              const std::string& out_dir) {
  FullConfig cfg = config_path.empty() ? FullConfig{} : load_config(config_path);
  auto entries = read_manifest(manifest_path);
  auto result = train(entries, cfg, out_dir);
  std::cout << "trained " << result.steps << " steps over " << result.epochs
            << " epochs\n";
  if (!result.epoch_stats.empty())
    std::cout << "final loss " << result.epoch_stats.back().loss << "\n";
  std::cout << "checkpoint: " << result.final_checkpoint << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& manifest_path,
             const std::string& dev_manifest_path, const std::string& report_path) {
  auto entries = read_manifest(manifest_path);
  EvalReport report;
  if (!dev_manifest_path.empty()) {
    auto dev = read_manifest(dev_manifest_path);
    report = evaluate_checkpoint(ckpt, entries, &dev);
  } else {
    report = evaluate_checkpoint(ckpt, entries);
  }
  auto j = report_to_json(report);
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    out << j.dump(2) << "\n";
  }
  std::cout << "threshold " << report.threshold << " (" << report.threshold_policy
            << (report.threshold_flagged ? ", chosen on the test set" : "") << ")\n";
  std::cout << "APCER " << report.apcer << "  BPCER " << report.bpcer << "  ACER "
            << report.acer << "\n";
  if (report.eer_defined) std::cout << "EER " << report.eer << "\n";
  if (report.auc_defined) std::cout << "AUC " << report.auc << "\n";
  if (report.hter) std::cout << "HTER " << *report.hter << "\n";
  for (const auto& [type, v] : report.apcer_per_type)
    std::cout << "APCER[" << type << "] " << v << "\n";
  return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& image_path,
              const std::string& out_dir) {
  auto [model, cfg] = model_from_checkpoint(ckpt);
  SampleLoader loader(cfg.model.bcn.input_size, cfg.model.heads.material_mode(),
                      false);
  ManifestEntry entry{image_path, "live", std::nullopt, std::nullopt, std::nullopt};
  auto img = read_image(image_path);
  if (img.dim(0) != img.dim(1) || img.dim(0) % cfg.model.bcn.input_size != 0)
    throw TrainError(image_path + ": image size incompatible with model input " +
                     std::to_string(cfg.model.bcn.input_size));
  if (img.dim(0) != cfg.model.bcn.input_size)
    img = downscale_box(img, img.dim(0) / cfg.model.bcn.input_size);
  auto outputs = model(nchw_from_hwc(img));

  std::filesystem::create_directories(out_dir);
  write_png(out_dir + "/depth_pred.png", hwc_from_nchw(outputs.depth));
  write_png(out_dir + "/reflection_pred.png", hwc_from_nchw(outputs.reflection));
  if (outputs.material) {
    const std::size_t K = outputs.patch.dim(1);
    std::cout << "material class probabilities (spatial means):\n";
    const auto& names = material_class_names();
    for (std::size_t k = 0; k < K; ++k) {
      double acc = 0.0;
      const std::size_t HW = outputs.patch.dim(2) * outputs.patch.dim(3);
      for (std::size_t s = 0; s < HW; ++s)
        acc += outputs.patch.values()[k * HW + s];
      std::cout << "  " << (k < names.size() ? names[k] : std::to_string(k)) << ": "
                << acc / static_cast<double>(HW) << "\n";
    }
    std::cout << "predicted class: " << names[predicted_material_class(outputs)] << "\n";
  } else {
    write_png(out_dir + "/patch_pred.png", hwc_from_nchw(outputs.patch));
    std::cout << "score " << score(outputs) << "\n";
  }
  return 0;
}

int cmd_filter(const std::string& image_path, const std::string& out_dir) {
  auto img = read_image(image_path);
  auto params = BilateralParams::defaults_for(img);
  auto d = bilateral_decompose(img, params);
  std::filesystem::create_directories(out_dir);
  write_png(out_dir + "/base.png", d.base);
  // residual is signed; store offset by +0.5 and clamped
  std::vector<float> shifted(d.residual.numel());
  for (std::size_t i = 0; i < shifted.size(); ++i)
    shifted[i] = d.residual.values()[i] + 0.5f;
  write_png(out_dir + "/residual.png",
            TensorT<float>::from_data(d.residual.shape(), std::move(shifted)));
  std::cout << "sigma_s " << params.sigma_s << " sigma_r " << params.sigma_r
            << " window " << params.window << "\n";
  std::cout << "wrote " << out_dir << "/base.png and " << out_dir << "/residual.png\n";
  return 0;
}

int cmd_gradcheck(const std::string& only_op) {
  Rng rng(2024);
  auto rand_input = [&rng](Shape shape, double lo, double hi) {
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = rng.uniform(lo, hi);
    return TensorT<double>::from_data(std::move(shape), std::move(data));
  };

  struct Check {
    std::string name;
    double error;
  };
  std::vector<Check> checks;
  auto run = [&](const std::string& name, auto&& fn, std::vector<TensorT<double>> inputs,
                 double eps = 1e-5, std::size_t max_coords = SIZE_MAX) {
    if (!only_op.empty() && only_op != name) return;
    checks.push_back({name, gradcheck(fn, std::move(inputs), eps, max_coords)});
  };

  run("conv2d", [](const std::vector<TensorT<double>>& in) {
        return mean(conv2d(in[0], ConvSpec::same(2, 3), in[1], in[2]));
      },
      {rand_input({1, 2, 6, 6}, -1, 1), rand_input({3, 2, 3, 3}, -1, 1),
       rand_input({3}, -1, 1)});
  {
    auto x = rand_input({1, 2, 6, 6}, 0, 1);
    for (std::size_t i = 0; i < x.numel(); ++i)
      x.values()[i] += 2.0 * static_cast<double>(i);
    run("maxpool2", [](const std::vector<TensorT<double>>& in) {
          return mean(maxpool2(in[0]));
        }, {x});
  }
  {
    auto x = rand_input({32}, 0.2, 1.0);
    for (std::size_t i = 0; i < x.numel(); ++i)
      if (i % 2 == 0) x.values()[i] = -x.values()[i];
    run("relu", [](const std::vector<TensorT<double>>& in) {
          return sum(relu(in[0]));
        }, {x});
  }
  run("sigmoid", [](const std::vector<TensorT<double>>& in) {
        return mean(sigmoid(in[0]));
      }, {rand_input({1, 2, 4, 4}, -2, 2)});
  run("softmax_channel", [](const std::vector<TensorT<double>>& in) {
        return mean(mul(softmax_channel(in[0]), in[1]));
      },
      {rand_input({1, 5, 3, 3}, -2, 2), rand_input({1, 5, 3, 3}, -1, 1)});
  {
    DboParams p;
    run("dbo", [p](const std::vector<TensorT<double>>& in) {
          return mean(dbo(in[0], p));
        }, {rand_input({1, 2, 5, 5}, -1, 1)});
    DboParams pf;
    pf.use_spatial = true;
    run("dbo_full", [pf](const std::vector<TensorT<double>>& in) {
          return mean(dbo_full(in[0], pf));
        }, {rand_input({1, 2, 5, 5}, -1, 1)});
  }
  run("refine", [](const std::vector<TensorT<double>>& in) {
        return mean(refine(in[0], softmax_channel(in[1])));
      },
      {rand_input({1, 2, 5, 5}, -1, 1), rand_input({1, 9, 5, 5}, -1, 1)});
  {
    auto gt = rand_input({1, 1, 4, 4}, 0, 1);
    run("mse_loss", [gt](const std::vector<TensorT<double>>& in) {
          return mse_loss(in[0], gt);
        }, {rand_input({1, 1, 4, 4}, 0, 1)});
    auto bgt = rand_input({1, 1, 4, 4}, 0, 1);
    for (auto& v : bgt.values()) v = v > 0.5 ? 1.0 : 0.0;
    run("bce_loss", [bgt](const std::vector<TensorT<double>>& in) {
          return bce_loss(sigmoid(in[0]), bgt);
        }, {rand_input({1, 1, 4, 4}, -2, 2)});
  }
  {
    ModelConfig cfg;
    cfg.bcn.input_size = 32;
    cfg.bcn.stem_channels = 8;
    cfg.bcn.level_channels = {{{8, 8, 8}, {8, 8, 8}, {8, 8, 8}}};
    cfg.mfrm.compressed_channels = 4;
    cfg.mfrm.kernel_size = 3;
    cfg.heads.channels = {8, 4};
    auto model = Model<double>::build(cfg, 15);
    auto image = rand_input({1, 3, 32, 32}, 0.05, 0.95);
    auto depth_gt = rand_input({1, 1, 4, 4}, 0, 1);
    auto refl_gt = rand_input({1, 3, 4, 4}, 0, 1);
    auto patch_gt = TensorT<double>::full({1, 1, 4, 4}, 1.0);
    auto model_loss = [&](const std::vector<TensorT<double>>& in) {
      auto out = model(in[0]);
      return loss_overall(mse_loss(out.depth, depth_gt), mse_loss(out.reflection, refl_gt),
                          bce_loss(out.patch, patch_gt));
    };
    run("model", model_loss, {image}, 1e-5, 24);
  }

  if (checks.empty()) {
    std::cerr << "unknown op '" << only_op << "'\n";
    return 2;
  }
  bool ok = true;
  for (const auto& c : checks) {
    const bool pass = c.error < 1e-3;
    ok = ok && pass;
    std::cout << (pass ? "[PASS] " : "[FAIL] ") << c.name << " max_rel_error "
              << c.error << "\n";
  }
  return ok ? 0 : 1;
}

int cmd_synth(std::size_t n_live, std::size_t n_spoof, std::uint64_t seed,
              const std::string& out_dir) {
  auto entries = synth::generate(n_live, n_spoof, seed, out_dir);
  std::cout << "wrote " << entries.size() << " samples and " << out_dir
            << "/manifest.jsonl\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bilateral face anti-spoofing pipeline"};
  app.require_subcommand(1);

  std::string config_path, manifest_path, out_dir, ckpt_path, dev_manifest_path;
  std::string report_path, image_path, op_name;
  std::size_t n_live = 16, n_spoof = 16;
  std::uint64_t seed = 0;

  auto* train_cmd = app.add_subcommand("train", "train a model on a manifest");
  train_cmd->add_option("--config", config_path, "config JSON (defaults when omitted)");
  train_cmd->add_option("--manifest", manifest_path, "JSONL manifest")->required();
  train_cmd->add_option("--out", out_dir, "output directory")->required();

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
  eval_cmd->add_option("--checkpoint", ckpt_path)->required();
  eval_cmd->add_option("--manifest", manifest_path)->required();
  eval_cmd->add_option("--dev-manifest", dev_manifest_path,
                       "dev split that fixes the operating threshold");
  eval_cmd->add_option("--report", report_path, "write the full report JSON here");

  auto* infer_cmd = app.add_subcommand("infer", "score one image");
  infer_cmd->add_option("--checkpoint", ckpt_path)->required();
  infer_cmd->add_option("--image", image_path)->required();
  infer_cmd->add_option("--out", out_dir, "directory for predicted maps")
      ->default_val(".");

  auto* filter_cmd = app.add_subcommand("filter", "bilateral base/residual decomposition");
  filter_cmd->add_option("--image", image_path)->required();
  filter_cmd->add_option("--out", out_dir)->required();

  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference checks");
  gradcheck_cmd->add_option("--op", op_name, "check a single op");

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
  synth_cmd->add_option("--live", n_live)->required();
  synth_cmd->add_option("--spoof", n_spoof)->required();
  synth_cmd->add_option("--seed", seed)->default_val(0);
  synth_cmd->add_option("--out", out_dir)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return cmd_train(config_path, manifest_path, out_dir);
    if (eval_cmd->parsed())
      return cmd_eval(ckpt_path, manifest_path, dev_manifest_path, report_path);
    if (infer_cmd->parsed()) return cmd_infer(ckpt_path, image_path, out_dir);
    if (filter_cmd->parsed()) return cmd_filter(image_path, out_dir);
    if (gradcheck_cmd->parsed()) return cmd_gradcheck(op_name);
    if (synth_cmd->parsed()) return cmd_synth(n_live, n_spoof, seed, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
