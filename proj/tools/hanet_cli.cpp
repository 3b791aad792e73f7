// SPDX-FileCopyrightText: Copyright (c) 2026 HANet contributors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end. Talks to the library only through hanet.h.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hanet/hanet.h"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Failure {
  int code;
};

void check(hanet_status s) {
  if (s != HANET_OK) {
    std::fprintf(stderr, "error: %s\n", hanet_last_error());
    if (s == HANET_ERR_NUMERIC && hanet_last_error_iteration() >= 0) {
      std::fprintf(stderr, "aborted at iteration %lld\n", static_cast<long long>(hanet_last_error_iteration()));
    }
    throw Failure{static_cast<int>(s)};
  }
}

std::string take(char* s) {
  std::string out = s ? s : "";
  hanet_free_string(s);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) {
    std::fprintf(stderr, "error: cannot write %s\n", path.string().c_str());
    throw Failure{HANET_ERR_VALIDATION};
  }
  f << text << '\n';
}

// Training flags shared by train and ablate. Unset flags leave the config
// file (or preset) value alone.
struct RunFlags {
  std::string config_file;
  std::string preset;
  std::optional<std::string> train_manifest, test_manifest, variant, iteration_unit, loss_reduction, kernel_mode;
  std::optional<double> lr, weight_decay, momentum;
  std::optional<int> batch_size, patches, patch_size, prefetch;
  std::optional<std::int64_t> iterations, eval_every;
  std::optional<std::uint64_t> seed;
  std::vector<int> scales;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "JSON run config")->check(CLI::ExistingFile);
    app->add_option("--preset", preset, "full | toy")->check(CLI::IsMember({"full", "toy"}));
    app->add_option("--train-manifest", train_manifest, "training manifest");
    app->add_option("--test-manifest", test_manifest, "evaluation manifest");
    app->add_option("--variant", variant, "full | no_attention | backbone_only");
    app->add_option("--scales", scales, "cascade scales, e.g. 1,2,3,6")->delimiter(',');
    app->add_option("--lr", lr, "learning rate");
    app->add_option("--weight-decay", weight_decay, "weight decay");
    app->add_option("--momentum", momentum, "SGD momentum");
    app->add_option("--batch", batch_size, "batch size");
    app->add_option("--iterations", iterations, "iterations");
    app->add_option("--iteration-unit", iteration_unit, "steps | epochs");
    app->add_option("--loss-reduction", loss_reduction, "batch | batch_pixels");
    app->add_option("--patches", patches, "patches per image (overrides manifest)");
    app->add_option("--patch-size", patch_size, "patch side (overrides manifest)");
    app->add_option("--kernel", kernel_mode, "fixed | adaptive");
    app->add_option("--eval-every", eval_every, "checkpoint/eval cadence in steps");
    app->add_option("--prefetch", prefetch, "background batch depth (0 = off)");
    app->add_option("--seed", seed, "master seed");
  }

  json overlay() const {
    json j = json::object();
    if (train_manifest) j["train_manifest"] = *train_manifest;
    if (test_manifest) j["test_manifest"] = *test_manifest;
    if (variant) j["model"]["variant"] = *variant;
    if (!scales.empty()) j["model"]["scales"] = scales;
    if (lr) j["optimizer"]["lr"] = *lr;
    if (weight_decay) j["optimizer"]["weight_decay"] = *weight_decay;
    if (momentum) j["optimizer"]["momentum"] = *momentum;
    if (batch_size) j["batch_size"] = *batch_size;
    if (iterations) j["iterations"] = *iterations;
    if (iteration_unit) j["iteration_unit"] = *iteration_unit;
    if (loss_reduction) j["loss_reduction"] = *loss_reduction;
    if (patches) j["augment"]["M"] = *patches;
    if (patch_size) j["augment"]["m"] = *patch_size;
    if (patches || patch_size) j["augment"]["policy_override"] = true;
    if (kernel_mode) j["kernel"]["mode"] = *kernel_mode;
    if (eval_every) j["eval_every"] = *eval_every;
    if (prefetch) j["prefetch"] = *prefetch;
    if (seed) j["seed"] = *seed;
    return j;
  }

  // preset, then config file, then flags.
  std::string resolve() const {
    std::vector<std::string> layers;
    if (!config_file.empty()) {
      char* text = nullptr;
      check(hanet_config_read(config_file.c_str(), &text));
      layers.push_back(take(text));
    }
    layers.push_back(overlay().dump());
    std::vector<const char*> ptrs;
    for (const auto& l : layers) ptrs.push_back(l.c_str());
    char* out = nullptr;
    check(hanet_config_resolve(preset.empty() ? nullptr : preset.c_str(), ptrs.data(), ptrs.size(), &out));
    return take(out);
  }
};

struct ModelHandle {
  hanet_model* ptr = nullptr;
  ~ModelHandle() { hanet_model_free(ptr); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HANet crowd counting"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic annotated dataset");
  std::string synth_out, synth_size = "64x64", synth_heads = "5:20";
  int synth_images = 8;
  std::uint64_t synth_seed = 7;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--images", synth_images, "number of images");
  synth->add_option("--size", synth_size, "HxW, both divisible by 8");
  synth->add_option("--heads", synth_heads, "LO:HI heads per image");
  synth->add_option("--seed", synth_seed, "seed");

  // make-gt
  auto* make_gt = app.add_subcommand("make-gt", "render ground-truth density maps");
  std::string gt_manifest, gt_out, gt_config, gt_mode = "fixed";
  std::optional<int> gt_window, gt_k;
  std::optional<double> gt_sigma, gt_beta;
  make_gt->add_option("--manifest", gt_manifest, "dataset manifest")->required();
  make_gt->add_option("--out", gt_out, "output directory")->required();
  make_gt->add_option("--mode", gt_mode, "fixed | adaptive")->check(CLI::IsMember({"fixed", "adaptive"}));
  make_gt->add_option("--config", gt_config, "JSON run config (kernel section)")->check(CLI::ExistingFile);
  make_gt->add_option("--window", gt_window, "fixed window size");
  make_gt->add_option("--sigma", gt_sigma, "fixed sigma");
  make_gt->add_option("--beta", gt_beta, "adaptive beta");
  make_gt->add_option("--k", gt_k, "adaptive neighbour count");

  // train
  auto* train = app.add_subcommand("train", "train a model");
  RunFlags train_flags;
  std::string train_out;
  train_flags.attach(train);
  train->add_option("--out", train_out, "output directory")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_ckpt, eval_manifest, eval_out;
  eval->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--manifest", eval_manifest, "dataset manifest")->required();
  eval->add_option("--out", eval_out, "output directory")->required();

  // predict
  auto* predict = app.add_subcommand("predict", "count people in images");
  std::string pred_ckpt, pred_out;
  std::vector<std::string> pred_images;
  predict->add_option("--checkpoint", pred_ckpt, "model checkpoint")->required()->check(CLI::ExistingFile);
  predict->add_option("--image", pred_images, "PNG image(s)")->required();
  predict->add_option("--out", pred_out, "output directory")->required();

  // ablate
  auto* ablate = app.add_subcommand("ablate", "run an ablation suite");
  RunFlags ablate_flags;
  std::string ablate_suite, ablate_out;
  ablate_flags.attach(ablate);
  ablate->add_option("--suite", ablate_suite, "components | fusion_order | patch_size")
      ->required()
      ->check(CLI::IsMember({"components", "fusion_order", "patch_size"}));
  ablate->add_option("--out", ablate_out, "output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : HANET_ERR_USAGE;
  }

  try {
    check(hanet_set_log_level(log_level.c_str()));

    if (*synth) {
      int h = 0, w = 0, lo = 0, hi = 0;
      if (std::sscanf(synth_size.c_str(), "%dx%d", &h, &w) != 2) {
        std::fprintf(stderr, "error: --size must look like 64x64\n");
        return HANET_ERR_USAGE;
      }
      if (std::sscanf(synth_heads.c_str(), "%d:%d", &lo, &hi) != 2) {
        std::fprintf(stderr, "error: --heads must look like 5:20\n");
        return HANET_ERR_USAGE;
      }
      if (h % 8 != 0 || w % 8 != 0 || h <= 0 || w <= 0) {
        std::fprintf(stderr, "error: --size %s: height and width must be divisible by 8\n", synth_size.c_str());
        return HANET_ERR_VALIDATION;
      }
      write_text(fs::path(synth_out) / "synth_config.json",
                 json{{"images", synth_images}, {"height", h}, {"width", w}, {"heads", {lo, hi}}, {"seed", synth_seed}}
                     .dump(2));
      check(hanet_synth(synth_out.c_str(), synth_images, h, w, lo, hi, synth_seed));
      std::printf("wrote %d images to %s\n", synth_images, synth_out.c_str());
    } else if (*make_gt) {
      std::vector<std::string> layers;
      if (!gt_config.empty()) {
        char* text = nullptr;
        check(hanet_config_read(gt_config.c_str(), &text));
        layers.push_back(take(text));
      }
      json k{{"mode", gt_mode}};
      if (gt_window) k["window"] = *gt_window;
      if (gt_sigma) k["sigma"] = *gt_sigma;
      if (gt_beta) k["beta"] = *gt_beta;
      if (gt_k) k["k_neighbors"] = *gt_k;
      layers.push_back(json{{"kernel", k}}.dump());
      std::vector<const char*> ptrs;
      for (const auto& l : layers) ptrs.push_back(l.c_str());
      char* out = nullptr;
      check(hanet_config_resolve(nullptr, ptrs.data(), ptrs.size(), &out));
      const std::string cfg = take(out);
      write_text(fs::path(gt_out) / "config.json", cfg);
      int written = 0, failed = 0;
      check(hanet_make_gt(gt_manifest.c_str(), cfg.c_str(), gt_out.c_str(), &written, &failed));
      std::printf("wrote %d density maps, %d records failed\n", written, failed);
      if (failed > 0) return HANET_ERR_VALIDATION;
    } else if (*train) {
      const std::string cfg = train_flags.resolve();
      write_text(fs::path(train_out) / "config.json", cfg);
      double first = 0, last = 0;
      check(hanet_train(cfg.c_str(), train_out.c_str(), &first, &last));
      std::printf("loss %.6g -> %.6g; checkpoint %s\n", first, last, (fs::path(train_out) / "model.hnck").c_str());
    } else if (*eval) {
      ModelHandle m;
      check(hanet_model_load(eval_ckpt.c_str(), &m.ptr));
      char* cfg = nullptr;
      check(hanet_model_config(m.ptr, &cfg));
      write_text(fs::path(eval_out) / "config.json", take(cfg));
      double mae = 0, mse = 0;
      check(hanet_eval(eval_ckpt.c_str(), eval_manifest.c_str(), eval_out.c_str(), &mae, &mse));
      std::printf("MAE %.6f  MSE %.6f\n", mae, mse);
    } else if (*predict) {
      ModelHandle m;
      check(hanet_model_load(pred_ckpt.c_str(), &m.ptr));
      char* cfg = nullptr;
      check(hanet_model_config(m.ptr, &cfg));
      write_text(fs::path(pred_out) / "config.json", take(cfg));
      for (const auto& img : pred_images) {
        double count = 0;
        check(hanet_predict_file(m.ptr, img.c_str(), pred_out.c_str(), &count));
        std::printf("%s %.4f\n", img.c_str(), count);
      }
    } else if (*ablate) {
      const std::string cfg = ablate_flags.resolve();
      fs::path csv(ablate_out);
      write_text(fs::path(csv).replace_extension(".config.json"), cfg);
      int rows = 0, failed = 0;
      check(hanet_ablate(cfg.c_str(), ablate_suite.c_str(), ablate_out.c_str(), &rows, &failed));
      std::printf("%d rows (%d failed) -> %s\n", rows, failed, ablate_out.c_str());
    }
  } catch (const Failure& f) {
    return f.code;
  }
  return 0;
}
