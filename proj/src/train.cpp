// SPDX-FileCopyrightText: Copyright (c) 2026 HANet contributors
// SPDX-License-Identifier: Apache-2.0

#include "hanet/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <memory>

#include <fmt/format.h>

#include "hanet/errors.hpp"
#include "hanet/log.hpp"

namespace hanet {

using json = nlohmann::json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  return f;
}

void check_grad(const Parameter& p) {
  if (!p.tensor.has_grad()) {
    throw ValidationError("sgd_step: parameter '" + p.name + "' has no gradient; run backward first");
  }
}

}  // namespace

void sgd_step(std::vector<Parameter>& params, double lr, double weight_decay) {
  for (const auto& p : params) check_grad(p);
  for (auto& p : params) {
    auto w = p.tensor.data();
    auto g = p.tensor.grad();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * (g[i] + weight_decay * w[i]);
    p.tensor.zero_grad();
  }
}

void Sgd::step(std::vector<Parameter>& params) {
  if (cfg_.momentum == 0.0) {
    sgd_step(params, cfg_.lr, cfg_.weight_decay);
    return;
  }
  for (const auto& p : params) check_grad(p);
  for (auto& p : params) {
    auto w = p.tensor.data();
    auto g = p.tensor.grad();
    auto& v = velocity_[p.name];
    v.resize(w.size(), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = cfg_.momentum * v[i] + (g[i] + cfg_.weight_decay * w[i]);
      w[i] -= cfg_.lr * v[i];
    }
    p.tensor.zero_grad();
  }
}

std::vector<TensorBlob> Sgd::state() const {
  std::vector<TensorBlob> out;
  for (const auto& [name, v] : velocity_) {
    out.push_back({"velocity." + name, Shape{1, static_cast<std::int64_t>(v.size()), 1, 1}, v});
  }
  return out;
}

void Sgd::load_state(const std::vector<TensorBlob>& blobs) {
  velocity_.clear();
  for (const auto& b : blobs) {
    if (!b.name.starts_with("velocity.")) continue;
    velocity_[b.name.substr(9)] = b.values;
  }
}

Tensor training_loss(const Tensor& pred, const Tensor& gt, LossReduction reduction) {
  Tensor loss = ops::mse_loss(pred, gt);
  if (reduction == LossReduction::kBatchPixels) {
    loss = ops::scale(loss, 1.0 / static_cast<double>(pred.shape().plane()));
  }
  return loss;
}

std::int64_t total_steps(const RunConfig& cfg, std::size_t train_images) {
  if (cfg.iteration_unit == IterationUnit::kSteps) return cfg.iterations;
  const std::int64_t patches = static_cast<std::int64_t>(train_images) * cfg.augment.patch.patches;
  const std::int64_t per_epoch = std::max<std::int64_t>(1, (patches + cfg.batch_size - 1) / cfg.batch_size);
  return cfg.iterations * per_epoch;
}

TrainResult train(const RunConfig& cfg, std::vector<AnnotatedImage> images, const TrainOptions& options,
                  const std::vector<AnnotatedImage>* eval_images) {
  cfg.validate();
  if (images.empty()) throw ValidationError("training set is empty");
  const auto t0 = std::chrono::steady_clock::now();
  const bool to_disk = !options.out_dir.empty();
  if (to_disk) {
    std::filesystem::create_directories(options.out_dir);
    save_config((options.out_dir / "config.json").string(), cfg);
  }

  HaNet model(cfg.model, cfg.seed);
  Sgd optimizer(cfg.optimizer);
  const std::int64_t steps = total_steps(cfg, images.size());
  PatchStream stream(std::move(images), cfg.augment, cfg.kernel, cfg.normalization, cfg.batch_size,
                     derive_seed(cfg.seed, "data"));
  std::unique_ptr<BatchPrefetcher> prefetch;
  if (cfg.prefetch > 0) {
    prefetch = std::make_unique<BatchPrefetcher>(std::move(stream), static_cast<std::size_t>(cfg.prefetch));
  }
  auto next_batch = [&] { return prefetch ? prefetch->next() : stream.next(); };

  std::ofstream loss_csv;
  if (to_disk) {
    loss_csv = open_out(options.out_dir / "loss.csv");
    loss_csv << "iteration,loss\n";
  }

  TrainResult result;
  result.losses.reserve(static_cast<std::size_t>(steps));
  std::string last_checkpoint;
  std::string stream_state;
  auto snapshot = [&](std::int64_t step) {
    ModelCheckpoint ckpt = capture(model, cfg, step, stream_state);
    ckpt.optimizer_state = optimizer.state();
    return ckpt;
  };

  for (std::int64_t step = 1; step <= steps; ++step) {
    PatchBatch batch = next_batch();
    stream_state = batch.rng_state;
    ParameterList plist = model.parameters();
    const Tensor pred = model.forward(batch.images, Mode::kTrain);
    const Tensor loss = training_loss(pred, batch.gt_maps, cfg.loss_reduction);
    const double value = loss.item();
    if (!std::isfinite(value)) {
      std::string msg = fmt::format("non-finite loss ({}) at iteration {}", value, step);
      if (!last_checkpoint.empty()) msg += "; last checkpoint: " + last_checkpoint;
      if (to_disk) loss_csv.flush();
      throw NumericError(msg, step);
    }
    backward(loss);
    optimizer.step(plist.params);
    result.losses.push_back(value);
    if (to_disk) loss_csv << step << ',' << fmt::format("{}", value) << '\n';
    if (options.on_step) options.on_step({step, value});

    if (cfg.eval_every > 0 && step % cfg.eval_every == 0 && step < steps) {
      if (to_disk) {
        const auto path = options.out_dir / fmt::format("checkpoint_{:06}.hnck", step);
        save_checkpoint(path, snapshot(step));
        last_checkpoint = path.string();
      }
      if (eval_images && !eval_images->empty()) {
        const EvalReport r = evaluate(model, *eval_images, cfg.normalization);
        logger()->info("step {}: loss {:.6g}, eval MAE {:.4f}, MSE {:.4f}", step, value, r.mae, r.mse);
        if (to_disk) write_eval_csv(options.out_dir / fmt::format("eval_{:06}.csv", step), r);
      } else {
        logger()->info("step {}: loss {:.6g}", step, value);
      }
    }
  }

  result.steps = steps;
  result.checkpoint = snapshot(steps);
  if (to_disk) {
    save_checkpoint(options.out_dir / "model.hnck", result.checkpoint);
    if (eval_images && !eval_images->empty()) {
      const EvalReport r = evaluate(model, *eval_images, cfg.normalization);
      write_eval_csv(options.out_dir / "eval.csv", r);
      write_eval_summary(options.out_dir / "eval.json", r);
    }
  }
  result.wall_seconds = seconds_since(t0);
  return result;
}

TrainResult train(RunConfig cfg, const TrainOptions& options) {
  if (cfg.train_manifest.empty()) throw ValidationError("train_manifest is not set");
  const DatasetManifest manifest = load_manifest(cfg.train_manifest);
  if (!cfg.policy_override) cfg.augment.patch = manifest.policy;
  std::vector<AnnotatedImage> test;
  if (!cfg.test_manifest.empty()) test = load_dataset(load_manifest(cfg.test_manifest));
  return train(cfg, load_dataset(manifest), options, test.empty() ? nullptr : &test);
}

// ---------------------------------------------------------------------------
// evaluation

CountMetrics count_metrics(const std::vector<double>& estimated, const std::vector<double>& ground_truth) {
  if (estimated.empty()) throw ValidationError("cannot compute metrics over zero images");
  if (estimated.size() != ground_truth.size()) {
    throw ValidationError(fmt::format("metric inputs differ in length: {} estimates, {} ground-truth counts",
                                      estimated.size(), ground_truth.size()));
  }
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  for (std::size_t i = 0; i < estimated.size(); ++i) {
    const double e = estimated[i] - ground_truth[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
  }
  const double n = static_cast<double>(estimated.size());
  CountMetrics m{abs_sum / n, std::sqrt(sq_sum / n)};
  // Rounding can leave the root a hair under the mean for equal errors.
  m.mse = std::max(m.mse, m.mae);
  return m;
}

Tensor pad_to_stride(const Tensor& image, std::int64_t stride) {
  const Shape& s = image.shape();
  const std::int64_t pb = (stride - s.h % stride) % stride;
  const std::int64_t pr = (stride - s.w % stride) % stride;
  if (pb == 0 && pr == 0) return image;
  return ops::reflect_pad(image, pb, pr);
}

double predict_count(HaNet& model, const RgbImage& image, const Normalization& norm, Tensor* density) {
  NoGradGuard guard;
  const Tensor x = pad_to_stride(image_to_tensor(image, norm));
  Tensor map = model.forward(x, Mode::kEval);
  const double count = count_from_map(map).front();
  if (density) *density = map;
  return count;
}

EvalReport evaluate(HaNet& model, const std::vector<AnnotatedImage>& images, const Normalization& norm) {
  if (images.empty()) throw ValidationError("evaluation set is empty");
  const auto t0 = std::chrono::steady_clock::now();
  EvalReport report;
  std::vector<double> est;
  std::vector<double> gt;
  for (const auto& img : images) {
    const double c = predict_count(model, img.image, norm);
    report.rows.push_back({img.id, c, static_cast<double>(img.points.size())});
    est.push_back(c);
    gt.push_back(static_cast<double>(img.points.size()));
  }
  const CountMetrics m = count_metrics(est, gt);
  report.mae = m.mae;
  report.mse = m.mse;
  report.config = model.config();
  report.wall_seconds = seconds_since(t0);
  return report;
}

EvalReport evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest) {
  const ModelCheckpoint ckpt = load_checkpoint(checkpoint);
  HaNet model = model_from_checkpoint(ckpt);
  const DatasetManifest m = load_manifest(manifest);
  if (m.records.empty()) throw ValidationError("manifest " + manifest.string() + " has no records");
  EvalReport report = evaluate(model, load_dataset(m), ckpt.config.normalization);
  report.config = ckpt.config;
  return report;
}

void write_eval_csv(const std::filesystem::path& path, const EvalReport& report) {
  auto f = open_out(path);
  f << "id,estimated,ground_truth,abs_error\n";
  for (const auto& r : report.rows) {
    f << fmt::format("{},{},{},{}\n", r.id, r.estimated, r.ground_truth, std::abs(r.estimated - r.ground_truth));
  }
}

void write_eval_summary(const std::filesystem::path& path, const EvalReport& report) {
  json j{{"mae", report.mae},
         {"mse", report.mse},
         {"images", report.rows.size()},
         {"wall_seconds", report.wall_seconds},
         {"config", report.config}};
  auto f = open_out(path);
  f << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// ablations

std::string to_string(Suite s) {
  switch (s) {
    case Suite::kComponents: return "components";
    case Suite::kFusionOrder: return "fusion_order";
    case Suite::kPatchSize: return "patch_size";
  }
  return "components";
}

Suite suite_from_string(const std::string& name) {
  if (name == "components") return Suite::kComponents;
  if (name == "fusion_order") return Suite::kFusionOrder;
  if (name == "patch_size") return Suite::kPatchSize;
  throw ValidationError("unknown suite '" + name + "' (expected components|fusion_order|patch_size)");
}

namespace {

std::string scale_label(const std::vector<int>& scales) {
  return "PES-" + fmt::format("{}", fmt::join(scales, ","));
}

}  // namespace

std::vector<AblationRun> ablation_runs(const RunConfig& base, Suite suite) {
  std::vector<AblationRun> runs;
  auto with = [&](std::string label, auto&& edit) {
    RunConfig c = base;
    edit(c);
    runs.push_back({std::move(label), std::move(c)});
  };
  switch (suite) {
    case Suite::kComponents: {
      with("backbone", [](RunConfig& c) { c.model.variant = Variant::kBackboneOnly; });
      with("backbone+backend", [](RunConfig& c) { c.model.variant = Variant::kNoAttention; });
      for (const std::vector<int>& s : {std::vector<int>{1}, {1, 2}, {1, 2, 3}, {1, 2, 3, 6}}) {
        with("backbone+HAM(" + scale_label(s) + ")+backend", [&](RunConfig& c) {
          c.model.variant = Variant::kFull;
          c.model.scales = s;
        });
      }
      break;
    }
    case Suite::kFusionOrder: {
      for (const std::vector<int>& s : {std::vector<int>{3, 2, 1}, {1, 2, 3}, {6, 3, 2, 1}, {1, 2, 3, 6}}) {
        with("backbone+HAM(" + scale_label(s) + ")+backend", [&](RunConfig& c) {
          c.model.variant = Variant::kFull;
          c.model.scales = s;
        });
      }
      break;
    }
    case Suite::kPatchSize: {
      for (int m : {128, 192, 256}) {
        with(fmt::format("{}x{}", m, m), [&](RunConfig& c) {
          c.augment.patch.size = m;
          c.policy_override = true;
        });
      }
      break;
    }
  }
  return runs;
}

std::vector<AblationRow> ablation_suite(const RunConfig& base, Suite suite,
                                        const std::vector<AnnotatedImage>& train_set,
                                        const std::vector<AnnotatedImage>& test) {
  const auto& eval_set = test.empty() ? train_set : test;
  std::vector<AblationRow> rows;
  for (auto& run : ablation_runs(base, suite)) {
    AblationRow row;
    row.label = run.label;
    row.config = run.config;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      TrainResult r = train(run.config, train_set);
      HaNet model = model_from_checkpoint(r.checkpoint);
      const EvalReport rep = evaluate(model, eval_set, run.config.normalization);
      row.mae = rep.mae;
      row.mse = rep.mse;
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
      logger()->warn("ablation row '{}' failed: {}", run.label, e.what());
    }
    row.wall_seconds = seconds_since(t0);
    logger()->info("ablation {} / {}: {}", to_string(suite), row.label,
                   row.ok ? fmt::format("MAE {:.4f} MSE {:.4f}", row.mae, row.mse) : "failed");
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<AblationRow> ablation_suite(const RunConfig& base, Suite suite) {
  if (base.train_manifest.empty()) throw ValidationError("train_manifest is not set");
  RunConfig cfg = base;
  const DatasetManifest manifest = load_manifest(cfg.train_manifest);
  if (!cfg.policy_override) cfg.augment.patch = manifest.policy;
  std::vector<AnnotatedImage> test;
  if (!cfg.test_manifest.empty()) test = load_dataset(load_manifest(cfg.test_manifest));
  return ablation_suite(cfg, suite, load_dataset(manifest), test);
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch == '\n' ? ' ' : ch;
  }
  return out + "\"";
}

}  // namespace

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows) {
  auto f = open_out(path);
  f << "config,variant,scales,patch_size,status,mae,mse,wall_seconds,error\n";
  for (const auto& r : rows) {
    const auto& m = r.config.model;
    const std::string scales = m.variant == Variant::kFull ? fmt::format("{}", fmt::join(m.scales, " ")) : "";
    f << csv_field(r.label) << ',' << to_string(m.variant) << ',' << scales << ',' << r.config.augment.patch.size
      << ',' << (r.ok ? "ok" : "failed") << ',' << (r.ok ? fmt::format("{}", r.mae) : "") << ','
      << (r.ok ? fmt::format("{}", r.mse) : "") << ',' << fmt::format("{:.3f}", r.wall_seconds) << ','
      << csv_field(r.error) << '\n';
  }
}

}  // namespace hanet
