// SPDX-FileCopyrightText: Copyright (c) 2026 HANet contributors
// SPDX-License-Identifier: Apache-2.0

#include "hanet/hanet.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <new>
#include <string>

#include <fmt/format.h>

#include "hanet/config.hpp"
#include "hanet/errors.hpp"
#include "hanet/log.hpp"
#include "hanet/model.hpp"
#include "hanet/train.hpp"

struct hanet_model {
  hanet::HaNet net;
  hanet::RunConfig config;
  std::int64_t iteration = 0;
  std::string rng_state;
};

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

thread_local std::string g_error;
thread_local std::int64_t g_error_iteration = -1;

hanet_status fail(hanet_status code, const std::string& msg) {
  g_error = msg;
  return code;
}

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename F>
hanet_status guard(F&& body) {
  g_error.clear();
  g_error_iteration = -1;
  try {
    body();
    return HANET_OK;
  } catch (const UsageError& e) {
    return fail(HANET_ERR_USAGE, e.what());
  } catch (const hanet::NumericError& e) {
    g_error_iteration = e.iteration();
    return fail(HANET_ERR_NUMERIC, e.what());
  } catch (const hanet::ValidationError& e) {
    return fail(HANET_ERR_VALIDATION, e.what());
  } catch (const json::exception& e) {
    return fail(HANET_ERR_VALIDATION, std::string("bad JSON: ") + e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(HANET_ERR_VALIDATION, e.what());
  } catch (const std::bad_alloc&) {
    return fail(HANET_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(HANET_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(HANET_ERR_INTERNAL, "unknown error");
  }
}

void need(const void* p, const char* what) {
  if (!p) throw UsageError(std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

hanet::RunConfig parse_config(const char* text) {
  hanet::RunConfig cfg;
  if (text && *text) from_json(json::parse(text), cfg);
  return cfg;
}

void write_map(const fs::path& dir, const std::string& stem, const hanet::DensityMap& map, bool clamp) {
  fs::create_directories(dir);
  hanet::DensityMap out = map;
  if (clamp) {
    for (double& v : out.grid) v = std::max(v, 0.0);
  }
  hanet::write_dmap(dir / (stem + ".dmap"), out);
  hanet::write_pgm(dir / (stem + ".pgm"), out);
}

hanet::DensityMap to_map(const hanet::Tensor& t) {
  const auto& s = t.shape();
  hanet::DensityMap m(s.h, s.w);
  std::copy(t.data().begin(), t.data().end(), m.grid.begin());
  return m;
}

}  // namespace

extern "C" {

const char* hanet_version(void) { return "1.0.0"; }

const char* hanet_last_error(void) { return g_error.c_str(); }

int64_t hanet_last_error_iteration(void) { return g_error_iteration; }

void hanet_free_string(char* s) { std::free(s); }

hanet_status hanet_set_log_level(const char* level) {
  return guard([&] {
    need(level, "level");
    const auto lv = spdlog::level::from_str(level);
    if (lv == spdlog::level::off && std::strcmp(level, "off") != 0) {
      throw UsageError(std::string("unknown log level '") + level + "'");
    }
    hanet::logger()->set_level(lv);
  });
}

hanet_status hanet_config_resolve(const char* preset, const char* const* overlays, size_t n_overlays,
                                  char** out_json) {
  return guard([&] {
    need(out_json, "out_json");
    if (n_overlays > 0) need(overlays, "overlays");
    hanet::RunConfig cfg = hanet::preset(preset ? preset : "full");
    for (size_t i = 0; i < n_overlays; ++i) {
      if (overlays[i] && *overlays[i]) from_json(json::parse(overlays[i]), cfg);
    }
    cfg.validate();
    *out_json = dup_string(json(cfg).dump(2));
  });
}

hanet_status hanet_config_read(const char* path, char** out_json) {
  return guard([&] {
    need(path, "path");
    need(out_json, "out_json");
    std::ifstream f(path);
    if (!f) throw hanet::IoError(std::string("cannot open config ") + path);
    const json j = json::parse(f);
    *out_json = dup_string(j.dump());
  });
}

hanet_status hanet_synth(const char* out_dir, int images, int64_t height, int64_t width, int heads_lo, int heads_hi,
                         uint64_t seed) {
  return guard([&] {
    need(out_dir, "out_dir");
    if (images < 1) throw hanet::ValidationError("image count must be >= 1");
    if (height < 8 || width < 8 || height % 8 != 0 || width % 8 != 0) {
      throw hanet::ValidationError(
          fmt::format("image size {}x{} must be positive and divisible by 8", height, width));
    }
    if (heads_lo < 0 || heads_hi < heads_lo) {
      throw hanet::ValidationError(fmt::format("head range {}:{} is invalid", heads_lo, heads_hi));
    }
    hanet::SyntheticSpec spec;
    spec.images = images;
    spec.height = height;
    spec.width = width;
    spec.heads_lo = heads_lo;
    spec.heads_hi = heads_hi;
    spec.seed = seed;
    try {
      hanet::make_synthetic(out_dir, spec);
    } catch (const fs::filesystem_error& e) {
      throw hanet::IoError(std::string("cannot write to ") + out_dir + ": " + e.code().message());
    }
  });
}

hanet_status hanet_make_gt(const char* manifest, const char* config_json, const char* out_dir, int* written,
                           int* failed) {
  return guard([&] {
    need(manifest, "manifest");
    need(out_dir, "out_dir");
    const hanet::RunConfig cfg = parse_config(config_json);
    cfg.kernel.validate();
    std::vector<std::string> failures;
    const hanet::DatasetManifest m = hanet::load_manifest(manifest, &failures);
    for (const auto& f : failures) hanet::logger()->error("{}", f);
    int ok = 0;
    for (const auto& rec : m.records) {
      try {
        const hanet::AnnotatedImage img = hanet::load_record(rec);
        const hanet::DensityMap map =
            hanet::render(img.points, img.image.height, img.image.width, cfg.kernel);
        write_map(out_dir, rec.id, map, false);
        ++ok;
      } catch (const hanet::ValidationError& e) {
        failures.push_back(e.what());
        hanet::logger()->error("record '{}': {}", rec.id, e.what());
      }
    }
    if (written) *written = ok;
    if (failed) *failed = static_cast<int>(failures.size());
  });
}

hanet_status hanet_train(const char* config_json, const char* out_dir, double* first_loss, double* final_loss) {
  return guard([&] {
    need(config_json, "config_json");
    hanet::TrainOptions opt;
    if (out_dir) opt.out_dir = out_dir;
    const hanet::TrainResult r = hanet::train(parse_config(config_json), opt);
    if (first_loss) *first_loss = r.losses.front();
    if (final_loss) *final_loss = r.losses.back();
  });
}

hanet_status hanet_eval(const char* checkpoint, const char* manifest, const char* out_dir, double* mae,
                        double* mse) {
  return guard([&] {
    need(checkpoint, "checkpoint");
    need(manifest, "manifest");
    const hanet::EvalReport r = hanet::evaluate(checkpoint, manifest);
    if (out_dir) {
      fs::create_directories(out_dir);
      hanet::write_eval_csv(fs::path(out_dir) / "eval.csv", r);
      hanet::write_eval_summary(fs::path(out_dir) / "eval.json", r);
    }
    if (mae) *mae = r.mae;
    if (mse) *mse = r.mse;
  });
}

hanet_status hanet_ablate(const char* config_json, const char* suite, const char* out_csv, int* rows, int* failed) {
  return guard([&] {
    need(config_json, "config_json");
    need(suite, "suite");
    need(out_csv, "out_csv");
    hanet::Suite s;
    try {
      s = hanet::suite_from_string(suite);
    } catch (const hanet::ValidationError& e) {
      throw UsageError(e.what());
    }
    const auto result = hanet::ablation_suite(parse_config(config_json), s);
    const fs::path out(out_csv);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    hanet::write_ablation_csv(out, result);
    int bad = 0;
    for (const auto& r : result) bad += r.ok ? 0 : 1;
    if (rows) *rows = static_cast<int>(result.size());
    if (failed) *failed = bad;
  });
}

hanet_status hanet_model_create(const char* config_json, hanet_model** out) {
  return guard([&] {
    need(out, "out");
    *out = nullptr;
    hanet::RunConfig cfg = parse_config(config_json);
    cfg.validate();
    *out = new hanet_model{hanet::HaNet(cfg.model, cfg.seed), cfg};
  });
}

hanet_status hanet_model_load(const char* checkpoint, hanet_model** out) {
  return guard([&] {
    need(checkpoint, "checkpoint");
    need(out, "out");
    *out = nullptr;
    const hanet::ModelCheckpoint ckpt = hanet::load_checkpoint(checkpoint);
    *out = new hanet_model{hanet::model_from_checkpoint(ckpt), ckpt.config, ckpt.iteration, ckpt.rng_state};
  });
}

hanet_status hanet_model_save(hanet_model* model, const char* checkpoint) {
  return guard([&] {
    need(model, "model");
    need(checkpoint, "checkpoint");
    hanet::save_checkpoint(checkpoint, hanet::capture(model->net, model->config, model->iteration, model->rng_state));
  });
}

void hanet_model_free(hanet_model* model) { delete model; }

int64_t hanet_model_parameter_count(hanet_model* model) { return model ? model->net.parameter_count() : -1; }

hanet_status hanet_model_config(hanet_model* model, char** out_json) {
  return guard([&] {
    need(model, "model");
    need(out_json, "out_json");
    *out_json = dup_string(json(model->config).dump(2));
  });
}

hanet_status hanet_model_predict(hanet_model* model, const uint8_t* rgb, int64_t height, int64_t width,
                                 double* count, double* density, size_t capacity, int64_t* map_h, int64_t* map_w) {
  return guard([&] {
    need(model, "model");
    need(rgb, "rgb");
    if (height < 1 || width < 1) throw hanet::ValidationError("image must be at least 1x1");
    hanet::RgbImage img;
    img.height = height;
    img.width = width;
    img.pixels.assign(rgb, rgb + height * width * 3);
    hanet::Tensor map;
    const double c = hanet::predict_count(model->net, img, model->config.normalization, &map);
    const auto& s = map.shape();
    if (map_h) *map_h = s.h;
    if (map_w) *map_w = s.w;
    if (density) {
      if (capacity < static_cast<size_t>(s.h * s.w)) {
        throw UsageError(fmt::format("density buffer holds {} values, map has {}", capacity, s.h * s.w));
      }
      std::copy(map.data().begin(), map.data().end(), density);
    }
    if (count) *count = c;
  });
}

hanet_status hanet_predict_file(hanet_model* model, const char* image_png, const char* out_dir, double* count) {
  return guard([&] {
    need(model, "model");
    need(image_png, "image_png");
    const hanet::RgbImage img = hanet::read_png(image_png);
    hanet::Tensor map;
    const double c = hanet::predict_count(model->net, img, model->config.normalization, &map);
    if (out_dir) write_map(out_dir, fs::path(image_png).stem().string(), to_map(map),
                           model->config.clamp_exported_maps);
    if (count) *count = c;
  });
}

}  // extern "C"
