// SPDX-FileCopyrightText: Copyright (c) 2026 HANet contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>

#include "hanet/errors.hpp"
#include "hanet/model.hpp"
#include "oracles.hpp"

using namespace hanet;
namespace o = oracle;

namespace {

ModelConfig toy(std::vector<int> scales = {1, 2}) {
  ModelConfig c;
  c.backbone = BackboneConfig::toy();
  c.scales = std::move(scales);
  return c;
}

Tensor image(std::int64_t n, std::int64_t h, std::int64_t w, std::uint64_t seed) {
  std::mt19937_64 r(seed);
  return o::random_tensor(Shape{n, 3, h, w}, r);
}

}  // namespace

TEST(Model, ToyShapes) {
  HaNet net(toy(), 0);
  ForwardTrace trace;
  Tensor y = net.forward(image(1, 128, 128, 1), Mode::kTrain, &trace);
  EXPECT_EQ(trace.features.shape(), (Shape{1, 64, 16, 16}));
  EXPECT_EQ(y.shape(), (Shape{1, 1, 16, 16}));
  EXPECT_EQ(trace.hams.size(), 2u);
  EXPECT_EQ(net.forward(image(2, 64, 48, 2), Mode::kTrain).shape(), (Shape{2, 1, 8, 6}));
}

TEST(Model, BackendWidthsFollowBackbone) {
  ModelConfig c;
  EXPECT_EQ(c.resolved_backend_widths(), (std::vector<std::int64_t>{256, 128, 64}));
  EXPECT_EQ(toy().resolved_backend_widths(), (std::vector<std::int64_t>{32, 16, 8}));
  Rng rng(0);
  Backend b(512, c.resolved_backend_widths(), NormSettings{}, rng);
  std::mt19937_64 r(3);
  EXPECT_EQ(b.forward(o::random_tensor(Shape{1, 512, 32, 32}, r), Mode::kTrain).shape(), (Shape{1, 1, 32, 32}));
  EXPECT_THROW(b.forward(o::random_tensor(Shape{1, 64, 4, 4}, r), Mode::kTrain), ValidationError);
}

TEST(Model, FullBackboneStride) {
  Rng rng(0);
  Backbone bb(BackboneConfig::full(), NormSettings{}, rng);
  EXPECT_EQ(bb.forward(image(1, 32, 24, 4), Mode::kTrain).shape(), (Shape{1, 512, 4, 3}));
}

TEST(Model, ZeroBackendGivesZeroMap) {
  HaNet net(toy(), 0);
  ParameterList list = net.parameters();
  for (auto& p : list.params) {
    if (p.name.starts_with("backend.")) for (double& v : p.tensor.data()) v = 0.0;
  }
  const Tensor y = net.forward(image(1, 64, 64, 5), Mode::kTrain);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Model, RejectsIndivisibleInput) {
  HaNet net(toy(), 0);
  try {
    net.forward(image(1, 60, 64, 6), Mode::kTrain);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("pad"), std::string::npos);
  }
}

TEST(Model, VariantsBuildAndRun) {
  for (Variant v : {Variant::kFull, Variant::kNoAttention, Variant::kBackboneOnly}) {
    ModelConfig c = toy();
    c.variant = v;
    HaNet net(c, 1);
    EXPECT_EQ(net.forward(image(1, 128, 128, 7), Mode::kTrain).shape(), (Shape{1, 1, 16, 16}));
    bool has_ham = false, has_backend = false;
    for (const auto& p : net.parameters().params) {
      has_ham |= p.name.starts_with("ham.");
      has_backend |= p.name.starts_with("backend.");
    }
    EXPECT_EQ(has_ham, v == Variant::kFull);
    EXPECT_EQ(has_backend, v != Variant::kBackboneOnly);
  }
}

TEST(Model, EvalIsDeterministicAndSeedControlsInit) {
  HaNet a(toy(), 3), b(toy(), 3), c(toy(), 4);
  const Tensor x = image(1, 64, 64, 8);
  a.forward(x, Mode::kTrain);
  Tensor y1 = a.forward(x, Mode::kEval);
  Tensor y2 = a.forward(x, Mode::kEval);
  EXPECT_EQ(o::max_abs_diff(y1, y2), 0.0);
  EXPECT_EQ(a.parameters().params[0].tensor.data()[0], b.parameters().params[0].tensor.data()[0]);
  EXPECT_NE(a.parameters().params[0].tensor.data()[0], c.parameters().params[0].tensor.data()[0]);
}

TEST(Model, CountFromMap) {
  EXPECT_EQ(count_from_map(Tensor(Shape{1, 1, 16, 16}, 0.0))[0], 0.0);
  EXPECT_EQ(count_from_map(Tensor(Shape{2, 1, 16, 16}, 1.0))[1], 256.0);
  std::vector<Point> pts{{3, 4}, {10, 20}, {30, 30}, {31, 0}, {0, 31}, {16, 16}, {16.4, 16.6}};
  DensityMap gt = downsample_sum(render(pts, 32, 32, KernelRecipe{}), 8);
  Tensor t(Shape{1, 1, 4, 4}, gt.grid);
  EXPECT_NEAR(count_from_map(t)[0], 7.0, 1e-6);
}

TEST(Model, BackendHeadGradient) {
  HaNet net(toy(), 0);
  const Tensor x = image(2, 32, 32, 9);
  ParameterList list = net.parameters();
  Tensor head = list.params.back().tensor;  // backend.out.bias
  Tensor head_w = list.params[list.params.size() - 2].tensor;
  auto value = [&] {
    NoGradGuard g;
    return ops::sum(ops::mul(net.forward(x, Mode::kTrain), net.forward(x, Mode::kTrain))).item();
  };
  Tensor y = net.forward(x, Mode::kTrain);
  backward(ops::sum(ops::mul(y, y)));
  std::vector<std::size_t> idx(head_w.data().size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (const auto& s : o::finite_difference(value, head_w, idx)) EXPECT_LT(s.rel, 1e-6);
  for (const auto& s : o::finite_difference(value, head, {0})) EXPECT_LT(s.rel, 1e-6);
}

TEST(Model, CheckpointRoundTripIsBitExact) {
  RunConfig cfg = preset("toy");
  HaNet net(cfg.model, 11);
  const Tensor x = image(2, 64, 64, 10);
  for (int i = 0; i < 3; ++i) net.forward(x, Mode::kTrain);
  Tensor before = net.forward(x, Mode::kEval);
  ModelCheckpoint ck = capture(net, cfg, 42, "state");
  const auto path = std::filesystem::temp_directory_path() / "hanet_model_rt.hnck";
  save_checkpoint(path, ck);
  ModelCheckpoint back = load_checkpoint(path);
  EXPECT_EQ(back.iteration, 42);
  EXPECT_EQ(back.rng_state, "state");
  ASSERT_EQ(back.blobs.size(), ck.blobs.size());
  for (std::size_t i = 0; i < ck.blobs.size(); ++i) {
    EXPECT_EQ(back.blobs[i].name, ck.blobs[i].name);
    EXPECT_EQ(back.blobs[i].values, ck.blobs[i].values);
  }
  EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(ck));
  HaNet fresh = model_from_checkpoint(back);
  EXPECT_EQ(o::max_abs_diff(fresh.forward(x, Mode::kEval), before), 0.0);
  std::filesystem::remove(path);
}

TEST(Model, RestoreChecksNamesAndShapesAndSupportsImport) {
  RunConfig cfg = preset("toy");
  HaNet net(cfg.model, 1);
  ModelCheckpoint ck = capture(net, cfg, 0, "");
  ck.blobs.front().shape.n += 1;
  EXPECT_THROW(restore(net, ck, true), ValidationError);
  ck.blobs.erase(ck.blobs.begin());
  EXPECT_THROW(restore(net, ck, true), ValidationError);

  // Import only the backbone of one model into a different variant.
  ModelConfig other = cfg.model;
  other.variant = Variant::kNoAttention;
  HaNet target(other, 99);
  const std::size_t copied = restore(target, capture(net, cfg, 0, ""), false);
  EXPECT_GT(copied, 0u);
  EXPECT_EQ(target.backbone().stages[0][0].conv.weight.data()[0], net.backbone().stages[0][0].conv.weight.data()[0]);

  std::vector<std::uint8_t> junk{'X', 'Y', 'Z', 'W', 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  EXPECT_THROW(decode_checkpoint(junk), ValidationError);
}
