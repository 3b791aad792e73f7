// SPDX-FileCopyrightText: Copyright (c) 2026 HANet contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "hanet/config.hpp"
#include "hanet/data.hpp"
#include "hanet/model.hpp"

namespace hanet {

// p <- p - lr * (grad + weight_decay * p), then every grad is zeroed.
// A parameter without a gradient is rejected by name.
void sgd_step(std::vector<Parameter>& params, double lr, double weight_decay);

// Same update with optional heavy-ball momentum:
// v <- momentum * v + (grad + wd * p); p <- p - lr * v.
class Sgd {
 public:
  explicit Sgd(OptimizerConfig cfg) : cfg_(cfg) {}
  void step(std::vector<Parameter>& params);
  std::vector<TensorBlob> state() const;
  void load_state(const std::vector<TensorBlob>& blobs);

 private:
  OptimizerConfig cfg_;
  std::map<std::string, std::vector<double>> velocity_;
};

// Training loss for one batch under the configured reduction.
Tensor training_loss(const Tensor& pred, const Tensor& gt, LossReduction reduction);

struct TrainResult {
  ModelCheckpoint checkpoint;  // final state
  std::vector<double> losses;  // one per optimizer step
  std::int64_t steps = 0;
  double wall_seconds = 0.0;
};

struct StepInfo {
  std::int64_t step = 0;  // 1-based
  double loss = 0.0;
};

struct TrainOptions {
  // When non-empty: config.json, loss.csv, checkpoints and eval reports go here.
  std::filesystem::path out_dir;
  std::function<void(const StepInfo&)> on_step;
};

// Steps implied by the config: `iterations` itself, or iterations epochs of
// ceil(images * M / B) batches.
std::int64_t total_steps(const RunConfig& cfg, std::size_t train_images);

// Runs the loop sample -> forward -> loss -> backward -> sgd. Deterministic in
// cfg.seed. A non-finite loss raises NumericError carrying the step index
// (and the last checkpoint path when one was written).
TrainResult train(const RunConfig& cfg, std::vector<AnnotatedImage> images, const TrainOptions& options = {},
                  const std::vector<AnnotatedImage>* eval_images = nullptr);

// Loads cfg.train_manifest (and cfg.test_manifest when set). Without
// policy_override the patch policy comes from the manifest.
TrainResult train(RunConfig cfg, const TrainOptions& options = {});

// ---------------------------------------------------------------------------
// evaluation

struct EvalRow {
  std::string id;
  double estimated = 0.0;
  double ground_truth = 0.0;
};

struct EvalReport {
  double mae = 0.0;
  double mse = 0.0;  // root of the mean squared count error
  std::vector<EvalRow> rows;
  nlohmann::json config;
  double wall_seconds = 0.0;
};

struct CountMetrics {
  double mae = 0.0;
  double mse = 0.0;
};

CountMetrics count_metrics(const std::vector<double>& estimated, const std::vector<double>& ground_truth);

// Whole-image forward in eval mode. Images whose sides are not multiples of
// 8 are reflect-padded on the bottom/right edge.
double predict_count(HaNet& model, const RgbImage& image, const Normalization& norm, Tensor* density = nullptr);
Tensor pad_to_stride(const Tensor& image, std::int64_t stride = 8);

EvalReport evaluate(HaNet& model, const std::vector<AnnotatedImage>& images, const Normalization& norm);
EvalReport evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest);

// id,estimated,ground_truth,abs_error per image. Summary values and timing
// go to a separate JSON so repeated evaluations give identical CSVs.
void write_eval_csv(const std::filesystem::path& path, const EvalReport& report);
void write_eval_summary(const std::filesystem::path& path, const EvalReport& report);

// ---------------------------------------------------------------------------
// ablations

enum class Suite { kComponents, kFusionOrder, kPatchSize };

std::string to_string(Suite s);
Suite suite_from_string(const std::string& name);

struct AblationRun {
  std::string label;
  RunConfig config;
};

// The configuration rows of a suite, in table order.
std::vector<AblationRun> ablation_runs(const RunConfig& base, Suite suite);

struct AblationRow {
  std::string label;
  RunConfig config;
  bool ok = false;
  std::string error;
  double mae = 0.0;
  double mse = 0.0;
  double wall_seconds = 0.0;
};

// Trains and evaluates every row; a failing row is recorded and the suite
// continues. Evaluation uses `test` when non-empty, otherwise `train_set`.
std::vector<AblationRow> ablation_suite(const RunConfig& base, Suite suite,
                                        const std::vector<AnnotatedImage>& train_set,
                                        const std::vector<AnnotatedImage>& test);
std::vector<AblationRow> ablation_suite(const RunConfig& base, Suite suite);

// config,variant,scales,patch_size,status,mae,mse,wall_seconds,error
void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);

}  // namespace hanet
