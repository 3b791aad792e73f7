// SPDX-FileCopyrightText: Copyright (c) 2026 HANet contributors
// SPDX-License-Identifier: Apache-2.0

#include "hanet/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <fmt/format.h>

#include "hanet/errors.hpp"

namespace hanet {

using json = nlohmann::json;

void BackboneConfig::validate() const {
  if (stages.size() < 4) {
    throw ValidationError(fmt::format(
        "backbone needs at least 4 stages (pooling after the first three), got {}", stages.size()));
  }
  for (const auto& s : stages) {
    if (s.convs < 1 || s.width < 1) {
      throw ValidationError(fmt::format("backbone stage ({}, {}) is invalid", s.convs, s.width));
    }
  }
  if (out_channels() % 2 != 0) {
    throw ValidationError(fmt::format("backbone output width {} must be even", out_channels()));
  }
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kNoAttention: return "no_attention";
    case Variant::kBackboneOnly: return "backbone_only";
  }
  return "full";
}

Variant variant_from_string(const std::string& name) {
  if (name == "full") return Variant::kFull;
  if (name == "no_attention") return Variant::kNoAttention;
  if (name == "backbone_only") return Variant::kBackboneOnly;
  throw ValidationError("unknown model variant '" + name + "' (expected full|no_attention|backbone_only)");
}

std::vector<std::int64_t> ModelConfig::resolved_backend_widths() const {
  if (!backend_widths.empty()) return backend_widths;
  const std::int64_t c = backbone.out_channels();
  return {std::max<std::int64_t>(1, c / 2), std::max<std::int64_t>(1, c / 4),
          std::max<std::int64_t>(1, c / 8)};
}

void ModelConfig::validate() const {
  backbone.validate();
  if (variant == Variant::kFull) hanet::validate(CascadeConfig{scales, backbone.out_channels()});
  for (auto w : resolved_backend_widths()) {
    if (w < 1) throw ValidationError("backend widths must be >= 1");
  }
  if (!(init_std > 0.0)) throw ValidationError("init_std must be > 0");
  if (attention.reduction < 1) throw ValidationError("attention reduction must be >= 1");
}

void RunConfig::validate() const {
  model.validate();
  // lr = 0 is allowed (frozen-model diagnostics).
  if (!(optimizer.lr >= 0.0)) throw ValidationError(fmt::format("lr must be >= 0, got {}", optimizer.lr));
  if (!(optimizer.weight_decay >= 0.0)) throw ValidationError("weight_decay must be >= 0");
  if (!(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0)) {
    throw ValidationError("momentum must lie in [0, 1)");
  }
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (iterations < 1) throw ValidationError("iterations must be >= 1");
  if (eval_every < 0) throw ValidationError("eval_every must be >= 0");
  augment.validate();
  kernel.validate();
  if (model.variant == Variant::kFull) {
    const int max_k = *std::max_element(model.scales.begin(), model.scales.end());
    if (max_k > augment.patch.size / 8) {
      throw ValidationError(fmt::format("scale K={} exceeds the {}x{} feature map of {}px patches", max_k,
                                        augment.patch.size / 8, augment.patch.size / 8, augment.patch.size));
    }
  }
}

RunConfig preset(const std::string& name) {
  RunConfig c;
  if (name == "full") return c;
  if (name == "toy") {
    c.model.backbone = BackboneConfig::toy();
    c.model.scales = {1, 2};
    c.batch_size = 4;
    c.iterations = 500;
    c.augment.patch = {1, 64};
    return c;
  }
  throw ValidationError("unknown preset '" + name + "' (expected full|toy)");
}

// ---------------------------------------------------------------------------
// JSON

namespace {

const char* to_string(LossReduction r) { return r == LossReduction::kBatch ? "batch" : "batch_pixels"; }

LossReduction reduction_from_string(const std::string& s) {
  if (s == "batch") return LossReduction::kBatch;
  if (s == "batch_pixels") return LossReduction::kBatchPixels;
  throw ValidationError("unknown loss_reduction '" + s + "' (expected batch|batch_pixels)");
}

const char* to_string(IterationUnit u) { return u == IterationUnit::kSteps ? "steps" : "epochs"; }

IterationUnit unit_from_string(const std::string& s) {
  if (s == "steps") return IterationUnit::kSteps;
  if (s == "epochs") return IterationUnit::kEpochs;
  throw ValidationError("unknown iteration_unit '" + s + "' (expected steps|epochs)");
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* where) {
  const std::set<std::string> allowed(known.begin(), known.end());
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ValidationError(fmt::format("unknown key '{}' in {}", it.key(), where));
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("config key '{}': {}", key, e.what()));
  }
}

}  // namespace

void to_json(json& j, const ModelConfig& c) {
  json stages = json::array();
  for (const auto& s : c.backbone.stages) stages.push_back({s.convs, s.width});
  j = json{{"backbone", stages},
           {"variant", to_string(c.variant)},
           {"scales", c.scales},
           {"attention",
            {{"reduction", c.attention.reduction},
             {"branch_bn", c.attention.branch_bn},
             {"shared_g3", c.attention.shared_g3}}},
           {"bn_momentum", c.attention.norm.momentum},
           {"bn_eps", c.attention.norm.eps},
           {"backend_widths", c.resolved_backend_widths()},
           {"init_std", c.init_std}};
}

void from_json(const json& j, ModelConfig& c) {
  if (!j.is_object()) throw ValidationError("model config must be an object");
  reject_unknown(j, {"backbone", "variant", "scales", "attention", "bn_momentum", "bn_eps", "backend_widths", "init_std"},
                 "model");
  if (j.contains("backbone")) {
    const json& b = j["backbone"];
    if (b.is_string()) {
      const auto name = b.get<std::string>();
      if (name != "toy" && name != "full") throw ValidationError("backbone preset must be 'full' or 'toy'");
      c.backbone = name == "toy" ? BackboneConfig::toy() : BackboneConfig::full();
    } else {
      c.backbone.stages.clear();
      for (const auto& s : b) {
        if (!s.is_array() || s.size() != 2) throw ValidationError("backbone stages are [convs, width] pairs");
        c.backbone.stages.push_back({s[0].get<int>(), s[1].get<std::int64_t>()});
      }
    }
  }
  if (j.contains("variant")) c.variant = variant_from_string(j["variant"].get<std::string>());
  read(j, "scales", c.scales);
  if (j.contains("attention")) {
    const json& a = j["attention"];
    reject_unknown(a, {"reduction", "branch_bn", "shared_g3"}, "model.attention");
    read(a, "reduction", c.attention.reduction);
    read(a, "branch_bn", c.attention.branch_bn);
    read(a, "shared_g3", c.attention.shared_g3);
  }
  read(j, "bn_momentum", c.attention.norm.momentum);
  read(j, "bn_eps", c.attention.norm.eps);
  read(j, "backend_widths", c.backend_widths);
  read(j, "init_std", c.init_std);
}

void to_json(json& j, const RunConfig& c) {
  j = json{{"model", c.model},
           {"optimizer",
            {{"lr", c.optimizer.lr}, {"weight_decay", c.optimizer.weight_decay}, {"momentum", c.optimizer.momentum}}},
           {"loss_reduction", to_string(c.loss_reduction)},
           {"batch_size", c.batch_size},
           {"iterations", c.iterations},
           {"iteration_unit", to_string(c.iteration_unit)},
           {"seed", c.seed},
           {"train_manifest", c.train_manifest},
           {"test_manifest", c.test_manifest},
           {"augment",
            {{"gray_prob", c.augment.gray_prob},
             {"hflip_prob", c.augment.hflip_prob},
             {"M", c.augment.patch.patches},
             {"m", c.augment.patch.size},
             {"policy_override", c.policy_override}}},
           {"kernel",
            {{"mode", to_string(c.kernel.mode)},
             {"window", c.kernel.window},
             {"sigma", c.kernel.sigma},
             {"beta", c.kernel.beta},
             {"k_neighbors", c.kernel.k_neighbors}}},
           {"normalization",
            {{"mean", {c.normalization.mean[0], c.normalization.mean[1], c.normalization.mean[2]}},
             {"std", {c.normalization.std[0], c.normalization.std[1], c.normalization.std[2]}}}},
           {"eval_every", c.eval_every},
           {"prefetch", c.prefetch},
           {"clamp_exported_maps", c.clamp_exported_maps}};
}

void from_json(const json& j, RunConfig& c) {
  if (!j.is_object()) throw ValidationError("run config must be a JSON object");
  reject_unknown(j,
                 {"preset", "model", "optimizer", "loss_reduction", "batch_size", "iterations", "iteration_unit", "seed",
                  "train_manifest", "test_manifest", "augment", "kernel", "normalization", "eval_every", "prefetch",
                  "clamp_exported_maps"},
                 "run config");
  if (j.contains("preset")) c = preset(j["preset"].get<std::string>());
  if (j.contains("model")) from_json(j["model"], c.model);
  if (j.contains("optimizer")) {
    const json& o = j["optimizer"];
    reject_unknown(o, {"lr", "weight_decay", "momentum"}, "optimizer");
    read(o, "lr", c.optimizer.lr);
    read(o, "weight_decay", c.optimizer.weight_decay);
    read(o, "momentum", c.optimizer.momentum);
  }
  if (j.contains("loss_reduction")) c.loss_reduction = reduction_from_string(j["loss_reduction"].get<std::string>());
  read(j, "batch_size", c.batch_size);
  read(j, "iterations", c.iterations);
  if (j.contains("iteration_unit")) c.iteration_unit = unit_from_string(j["iteration_unit"].get<std::string>());
  read(j, "seed", c.seed);
  read(j, "train_manifest", c.train_manifest);
  read(j, "test_manifest", c.test_manifest);
  if (j.contains("augment")) {
    const json& a = j["augment"];
    reject_unknown(a, {"gray_prob", "hflip_prob", "M", "m", "policy_override"}, "augment");
    read(a, "gray_prob", c.augment.gray_prob);
    read(a, "hflip_prob", c.augment.hflip_prob);
    read(a, "M", c.augment.patch.patches);
    read(a, "m", c.augment.patch.size);
    read(a, "policy_override", c.policy_override);
  }
  if (j.contains("kernel")) {
    const json& k = j["kernel"];
    reject_unknown(k, {"mode", "window", "sigma", "beta", "k_neighbors"}, "kernel");
    if (k.contains("mode")) c.kernel.mode = kernel_mode_from_string(k["mode"].get<std::string>());
    read(k, "window", c.kernel.window);
    read(k, "sigma", c.kernel.sigma);
    read(k, "beta", c.kernel.beta);
    read(k, "k_neighbors", c.kernel.k_neighbors);
  }
  if (j.contains("normalization")) {
    const json& n = j["normalization"];
    reject_unknown(n, {"mean", "std"}, "normalization");
    for (int i = 0; i < 3; ++i) {
      if (n.contains("mean")) c.normalization.mean[i] = n["mean"].at(static_cast<std::size_t>(i)).get<double>();
      if (n.contains("std")) c.normalization.std[i] = n["std"].at(static_cast<std::size_t>(i)).get<double>();
    }
  }
  read(j, "eval_every", c.eval_every);
  read(j, "prefetch", c.prefetch);
  read(j, "clamp_exported_maps", c.clamp_exported_maps);
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("malformed config {}: {}", path, e.what()));
  }
  RunConfig c;
  from_json(j, c);
  return c;
}

void save_config(const std::string& path, const RunConfig& c) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << json(c).dump(2) << '\n';
  if (!f) throw IoError("failed writing " + path);
}

}  // namespace hanet
