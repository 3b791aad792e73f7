// SPDX-FileCopyrightText: Copyright (c) 2026 HANet contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "hanet/hanet.h"

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hanet_capi_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::string resolve(const char* preset, std::vector<std::string> overlays) {
  std::vector<const char*> ptrs;
  for (const auto& o : overlays) ptrs.push_back(o.c_str());
  char* out = nullptr;
  EXPECT_EQ(hanet_config_resolve(preset, ptrs.data(), ptrs.size(), &out), HANET_OK) << hanet_last_error();
  std::string s = out ? out : "";
  hanet_free_string(out);
  return s;
}

}  // namespace

TEST(CApi, VersionAndLogLevel) {
  EXPECT_GT(std::strlen(hanet_version()), 0u);
  EXPECT_EQ(hanet_set_log_level("warn"), HANET_OK);
  EXPECT_EQ(hanet_set_log_level("loud"), HANET_ERR_USAGE);
}

TEST(CApi, SynthIsByteDeterministic) {
  const fs::path a = scratch("synth_a"), b = scratch("synth_b");
  ASSERT_EQ(hanet_synth(a.c_str(), 3, 32, 40, 2, 4, 7), HANET_OK);
  ASSERT_EQ(hanet_synth(b.c_str(), 3, 32, 40, 2, 4, 7), HANET_OK);
  for (const char* f : {"img_0000.png", "img_0002.json", "manifest.json"}) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  EXPECT_EQ(hanet_synth(a.c_str(), 3, 30, 40, 2, 4, 7), HANET_ERR_VALIDATION);
  EXPECT_NE(std::string(hanet_last_error()).find("divisible by 8"), std::string::npos);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(CApi, MakeGtWritesMapsWithMatchingCounts) {
  const fs::path d = scratch("gt");
  ASSERT_EQ(hanet_synth(d.c_str(), 2, 32, 32, 3, 3, 1), HANET_OK);
  int written = 0, failed = 0;
  ASSERT_EQ(hanet_make_gt((d / "manifest.json").c_str(), nullptr, (d / "gt").c_str(), &written, &failed), HANET_OK)
      << hanet_last_error();
  EXPECT_EQ(written, 2);
  EXPECT_EQ(failed, 0);
  const std::string bytes = slurp(d / "gt" / "img_0001.dmap");
  ASSERT_EQ(bytes.size(), 16u + 32u * 32u * 8u);
  double sum = 0.0;
  for (std::size_t i = 16; i < bytes.size(); i += 8) {
    double v;
    std::memcpy(&v, bytes.data() + i, 8);
    sum += v;
  }
  EXPECT_NEAR(sum, 3.0, 1e-9);
  EXPECT_TRUE(fs::exists(d / "gt" / "img_0000.pgm"));
  fs::remove_all(d);
}

TEST(CApi, ConfigResolutionAndErrors) {
  const std::string toy = resolve("toy", {R"({"batch_size": 2})"});
  EXPECT_NE(toy.find("\"batch_size\": 2"), std::string::npos) << toy;
  char* out = nullptr;
  const char* bad[] = {R"({"batch_size": 0})"};
  EXPECT_EQ(hanet_config_resolve("toy", bad, 1, &out), HANET_ERR_VALIDATION);
  const char* junk[] = {"{"};
  EXPECT_EQ(hanet_config_resolve("toy", junk, 1, &out), HANET_ERR_VALIDATION);
  EXPECT_EQ(hanet_config_resolve("huge", nullptr, 0, &out), HANET_ERR_VALIDATION);
  int rows = 0, failed = 0;
  EXPECT_EQ(hanet_ablate(toy.c_str(), "colours", "/tmp/x.csv", &rows, &failed), HANET_ERR_USAGE);
}

TEST(CApi, ModelPredictAndSaveLoad) {
  const std::string cfg = resolve("toy", {});
  hanet_model* m = nullptr;
  ASSERT_EQ(hanet_model_create(cfg.c_str(), &m), HANET_OK) << hanet_last_error();
  EXPECT_GT(hanet_model_parameter_count(m), 0);
  std::vector<std::uint8_t> rgb(20 * 28 * 3, 100);
  std::vector<double> map(64);
  double count = 0.0;
  std::int64_t mh = 0, mw = 0;
  ASSERT_EQ(hanet_model_predict(m, rgb.data(), 20, 28, &count, map.data(), map.size(), &mh, &mw), HANET_OK);
  EXPECT_EQ(mh, 3);
  EXPECT_EQ(mw, 4);
  double sum = 0.0;
  for (std::int64_t i = 0; i < mh * mw; ++i) sum += map[static_cast<std::size_t>(i)];
  EXPECT_NEAR(sum, count, 1e-9);

  const fs::path d = scratch("model");
  ASSERT_EQ(hanet_model_save(m, (d / "m.hnck").c_str()), HANET_OK);
  hanet_model* back = nullptr;
  ASSERT_EQ(hanet_model_load((d / "m.hnck").c_str(), &back), HANET_OK);
  double again = 0.0;
  ASSERT_EQ(hanet_model_predict(back, rgb.data(), 20, 28, &again, nullptr, 0, &mh, &mw), HANET_OK);
  EXPECT_EQ(again, count);
  EXPECT_EQ(hanet_model_load((d / "missing.hnck").c_str(), &back), HANET_ERR_VALIDATION);
  hanet_model_free(back);
  hanet_model_free(m);
  fs::remove_all(d);
}

TEST(CApi, TrainThenEvalRoundTrip) {
  const fs::path d = scratch("train");
  ASSERT_EQ(hanet_synth((d / "data").c_str(), 2, 64, 64, 5, 8, 3), HANET_OK);
  const std::string manifest = (d / "data" / "manifest.json").string();
  const std::string cfg = resolve("toy", {R"({"iterations": 3, "prefetch": 0, "train_manifest": ")" + manifest + "\"}"});
  double first = 0.0, last = 0.0;
  ASSERT_EQ(hanet_train(cfg.c_str(), (d / "run").c_str(), &first, &last), HANET_OK) << hanet_last_error();
  EXPECT_TRUE(std::isfinite(first));
  double mae = -1.0, mse = -1.0;
  ASSERT_EQ(hanet_eval((d / "run" / "model.hnck").c_str(), manifest.c_str(), (d / "e1").c_str(), &mae, &mse),
            HANET_OK);
  ASSERT_EQ(hanet_eval((d / "run" / "model.hnck").c_str(), manifest.c_str(), (d / "e2").c_str(), &mae, &mse),
            HANET_OK);
  EXPECT_GE(mse, mae);
  EXPECT_EQ(slurp(d / "e1" / "eval.csv"), slurp(d / "e2" / "eval.csv"));
  fs::remove_all(d);
}
