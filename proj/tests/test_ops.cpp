// SPDX-FileCopyrightText: Copyright (c) 2026 HANet contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hanet/errors.hpp"
#include "hanet/ops.hpp"
#include "hanet/rng.hpp"
#include "oracles.hpp"

using namespace hanet;
namespace o = oracle;

namespace {

std::mt19937_64 rng_for(const char* tag) { return std::mt19937_64(derive_seed(1234, tag)); }

std::vector<std::size_t> all_indices(const Tensor& t) {
  std::vector<std::size_t> idx(t.data().size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return idx;
}

// Loss = sum(out * probe) for a fixed random probe, so every output element
// carries a distinct weight.
double probe_loss(const Tensor& out, const Tensor& probe) {
  double acc = 0.0;
  for (std::size_t i = 0; i < out.data().size(); ++i) acc += out.data()[i] * probe.data()[i];
  return acc;
}

void expect_gradients(const std::function<Tensor()>& f, std::vector<Tensor> leaves, std::mt19937_64& rng,
                      double tol = 1e-6) {
  Tensor out = f();
  const Tensor probe = o::random_tensor(out.shape(), rng);
  for (auto& l : leaves) l.zero_grad();
  backward(ops::sum(ops::mul(out, probe)));
  for (auto& l : leaves) {
    auto samples = o::finite_difference(
        [&] {
          NoGradGuard g;
          return probe_loss(f(), probe);
        },
        l, all_indices(l));
    for (const auto& s : samples) EXPECT_LT(s.rel, tol) << s.analytic << " vs " << s.numeric;
  }
}

}  // namespace

TEST(Tensor, BackwardAccumulatesAcrossCalls) {
  Tensor a(Shape{1, 1, 1, 3}, {1.0, 2.0, 3.0}, true);
  Tensor y = ops::sum(ops::mul(a, a));
  backward(y);
  backward(y);
  EXPECT_DOUBLE_EQ(a.grad()[1], 8.0);
  a.zero_grad();
  EXPECT_DOUBLE_EQ(a.grad()[1], 0.0);
}

TEST(Tensor, TapeIsStrictlyDecreasing) {
  Tensor a(Shape{1, 2, 2, 2}, 0.5, true);
  Tensor b = ops::relu(ops::scale(a, 2.0));
  Tensor c = ops::sum(ops::add(b, a));
  const AutodiffTape tape = collect_tape(c);
  ASSERT_EQ(tape.size(), 4u);
  for (std::size_t i = 1; i < tape.size(); ++i) EXPECT_GT(tape[i - 1].seq, tape[i].seq);
  EXPECT_EQ(tape.front().op, "sum");
}

TEST(Tensor, RejectsNonScalarLossAndBadShapes) {
  Tensor a(Shape{1, 1, 2, 2}, 1.0, true);
  EXPECT_THROW(backward(ops::scale(a, 2.0)), ValidationError);
  EXPECT_THROW(Tensor(Shape{0, 1, 1, 1}), ValidationError);
  EXPECT_THROW(Tensor(Shape{1, 1, 1, 2}, std::vector<double>{1.0}), ValidationError);
}

TEST(Tensor, NoGradGuardRecordsNothing) {
  Tensor a(Shape{1, 1, 1, 2}, 1.0, true);
  NoGradGuard g;
  Tensor b = ops::scale(a, 3.0);
  EXPECT_FALSE(b.has_history());
  EXPECT_FALSE(b.requires_grad());
}

TEST(Tensor, CloneAndDetachCopyValues) {
  Tensor a(Shape{1, 1, 1, 2}, 1.0, true);
  Tensor c = a.clone();
  Tensor d = a.detach();
  a.data()[0] = 5.0;
  EXPECT_EQ(c.data()[0], 1.0);
  EXPECT_EQ(d.data()[0], 1.0);
  EXPECT_FALSE(d.requires_grad());
}

TEST(Ops, ConvMatchesOracle) {
  auto rng = rng_for("conv");
  for (int t = 0; t < 20; ++t) {
    const int r = (t % 3) * 2 + 1;
    const int stride = 1 + t % 2;
    Tensor x = o::random_tensor(Shape{2, 3, 7 + t % 3, 6}, rng);
    Tensor w = o::random_tensor(Shape{4, 3, r, r}, rng);
    Tensor b = o::random_tensor(Shape{1, 4, 1, 1}, rng);
    EXPECT_LT(o::max_abs_diff(ops::conv2d(x, w, b, stride, r / 2), o::conv2d(x, w, &b, stride, r / 2)), 1e-12);
  }
}

TEST(Ops, PoolingResizeFcMatchOracles) {
  auto rng = rng_for("misc");
  for (int t = 0; t < 20; ++t) {
    Tensor x = o::random_tensor(Shape{2, 3, 5 + t % 4, 4 + t % 5}, rng);
    const int k = 1 + t % 4;
    EXPECT_LT(o::max_abs_diff(ops::adaptive_avg_pool(x, k), o::adaptive_avg_pool(x, k)), 1e-12);
    EXPECT_LT(o::max_abs_diff(ops::bilinear_resize(x, 3 + t % 7, 9 - t % 5), o::bilinear_resize(x, 3 + t % 7, 9 - t % 5)),
              1e-12);
    Tensor w = o::random_tensor(Shape{5, x.shape().c * x.shape().plane(), 1, 1}, rng);
    Tensor b = o::random_tensor(Shape{1, 5, 1, 1}, rng);
    EXPECT_LT(o::max_abs_diff(ops::fully_connected(x, w, b), o::fully_connected(x, w, &b)), 1e-12);
    Tensor y = o::random_tensor(Shape{1, 2, 6, 8}, rng);
    EXPECT_EQ(o::max_abs_diff(ops::max_pool2d(y), o::max_pool(y)), 0.0);
  }
}

TEST(Ops, BilinearIdentityAndConstantsAreExact) {
  auto rng = rng_for("bilinear");
  Tensor x = o::random_tensor(Shape{1, 2, 5, 7}, rng);
  EXPECT_EQ(o::max_abs_diff(ops::bilinear_resize(x, 5, 7), x), 0.0);
  Tensor c(Shape{1, 1, 2, 3}, 0.7);
  const Tensor up = ops::bilinear_resize(c, 11, 13);
  for (double v : up.data()) EXPECT_EQ(v, 0.7);
}

TEST(Ops, BatchNormTrainMatchesOracleAndTracksRunningStats) {
  auto rng = rng_for("bn");
  Tensor x = o::random_tensor(Shape{3, 2, 4, 4}, rng);
  Tensor g = o::random_tensor(Shape{1, 2, 1, 1}, rng);
  Tensor b = o::random_tensor(Shape{1, 2, 1, 1}, rng);
  ops::BatchNormState st(2);
  EXPECT_LT(o::max_abs_diff(ops::batchnorm2d(x, g, b, st, ops::Mode::kTrain), o::batchnorm_train(x, g, b, 1e-5)),
            1e-12);
  EXPECT_EQ(st.updates, 1);
  // running = 0.9 * init + 0.1 * batch statistic (unbiased variance)
  double mean = 0.0;
  for (std::int64_t n = 0; n < 3; ++n)
    for (std::int64_t i = 0; i < 16; ++i) mean += x.data()[static_cast<std::size_t>(n * 32 + i)];
  mean /= 48.0;
  EXPECT_NEAR(st.running_mean[0], 0.1 * mean, 1e-14);
}

TEST(Ops, BatchNormEvalUsesRunningStats) {
  Tensor x(Shape{1, 1, 1, 2}, {1.0, 3.0});
  Tensor g(Shape{1, 1, 1, 1}, 2.0);
  Tensor b(Shape{1, 1, 1, 1}, 0.5);
  ops::BatchNormState st(1);
  st.running_mean = {1.0};
  st.running_var = {4.0};
  st.updates = 1;
  Tensor y = ops::batchnorm2d(x, g, b, st, ops::Mode::kEval);
  EXPECT_NEAR(y.data()[1], 2.0 * 2.0 / std::sqrt(4.0 + 1e-5) + 0.5, 1e-12);
  EXPECT_EQ(st.updates, 1);
}

TEST(Ops, BatchNormEvalBeforeUpdateWarnsOnce) {
  Tensor x(Shape{1, 1, 1, 2}, {1.0, 3.0});
  Tensor g(Shape{1, 1, 1, 1}, 1.0);
  Tensor b(Shape{1, 1, 1, 1}, 0.0);
  ops::BatchNormState st(1);
  ops::batchnorm2d(x, g, b, st, ops::Mode::kEval);
  EXPECT_TRUE(st.warned_uninitialized);
}

TEST(Ops, GradientsMatchFiniteDifferences) {
  auto rng = rng_for("grad");
  Tensor x = o::random_tensor(Shape{2, 3, 5, 5}, rng);
  x.set_requires_grad(true);
  Tensor w = o::random_tensor(Shape{4, 3, 3, 3}, rng);
  w.set_requires_grad(true);
  Tensor b = o::random_tensor(Shape{1, 4, 1, 1}, rng);
  b.set_requires_grad(true);
  expect_gradients([&] { return ops::conv2d(x, w, b, 1, 1); }, {x, w, b}, rng);
  expect_gradients([&] { return ops::conv2d(x, w, b, 2, 0); }, {x, w, b}, rng);
  expect_gradients([&] { return ops::adaptive_avg_pool(x, 3); }, {x}, rng);
  expect_gradients([&] { return ops::bilinear_resize(x, 7, 4); }, {x}, rng);
  expect_gradients([&] { return ops::max_pool2d(ops::slice_channels(x, 0, 2)); }, {x}, rng);
  expect_gradients([&] { return ops::sigmoid(x); }, {x}, rng);
  expect_gradients([&] { return ops::relu(x); }, {x}, rng);

  Tensor gamma = o::random_tensor(Shape{1, 3, 1, 1}, rng, 0.5, 1.5);
  gamma.set_requires_grad(true);
  Tensor beta = o::random_tensor(Shape{1, 3, 1, 1}, rng);
  beta.set_requires_grad(true);
  ops::BatchNormState st(3);
  expect_gradients([&] { return ops::batchnorm2d(x, gamma, beta, st, ops::Mode::kTrain); }, {x, gamma, beta}, rng);

  Tensor fw = o::random_tensor(Shape{6, 75, 1, 1}, rng);
  fw.set_requires_grad(true);
  Tensor fb = o::random_tensor(Shape{1, 6, 1, 1}, rng);
  fb.set_requires_grad(true);
  expect_gradients([&] { return ops::fully_connected(x, fw, fb); }, {x, fw, fb}, rng);

  Tensor gate = o::random_tensor(Shape{2, 1, 5, 5}, rng);
  gate.set_requires_grad(true);
  Tensor chan = o::random_tensor(Shape{2, 3, 1, 1}, rng);
  chan.set_requires_grad(true);
  expect_gradients([&] { return ops::mul(x, gate); }, {x, gate}, rng);
  expect_gradients([&] { return ops::add(x, chan); }, {x, chan}, rng);
  expect_gradients([&] { return ops::concat_channels(x, ops::scale(x, -2.0)); }, {x}, rng);
  expect_gradients([&] { return ops::reshape(x, Shape{1, 6, 25, 1}); }, {x}, rng);
  expect_gradients([&] { return ops::sum_per_image(x); }, {x}, rng);
}

TEST(Ops, SigmoidStaysInsideOpenInterval) {
  Tensor x(Shape{1, 1, 1, 4}, {-1000.0, -40.0, 40.0, 1000.0});
  const Tensor s = ops::sigmoid(x);
  for (double v : s.data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Ops, MseLossExamples) {
  Tensor p(Shape{1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0}, true);
  EXPECT_EQ(ops::mse_loss(p, p.clone()).item(), 0.0);
  Tensor t(Shape{1, 1, 2, 2}, {1.0, 2.0, 3.0, 6.0});
  EXPECT_DOUBLE_EQ(ops::mse_loss(p, t).item(), 4.0);

  auto rng = rng_for("mse");
  Tensor a = o::random_tensor(Shape{3, 1, 4, 4}, rng);
  a.set_requires_grad(true);
  Tensor b = o::random_tensor(Shape{3, 1, 4, 4}, rng);
  backward(ops::mse_loss(a, b));
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    EXPECT_NEAR(a.grad()[i], 2.0 * (a.data()[i] - b.data()[i]) / 3.0, 1e-14);
  }
  EXPECT_THROW(ops::mse_loss(a, Tensor(Shape{3, 1, 4, 5})), ValidationError);
}

TEST(Ops, ShapeErrorsNameTheDimensions) {
  Tensor x(Shape{1, 3, 4, 4});
  try {
    ops::conv2d(x, Tensor(Shape{2, 5, 3, 3}), Tensor(), 1, 1);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("3 channels"), std::string::npos);
  }
  EXPECT_THROW(ops::adaptive_avg_pool(x, 5), ValidationError);
  EXPECT_THROW(ops::add(x, Tensor(Shape{1, 2, 4, 4})), ValidationError);
  EXPECT_THROW(ops::reflect_pad(x, 4, 0), ValidationError);
}

TEST(Ops, ReflectPadMirrorsEdges) {
  Tensor x(Shape{1, 1, 1, 3}, {1.0, 2.0, 3.0});
  Tensor y = ops::reflect_pad(x, 0, 2);
  EXPECT_EQ(y.shape().w, 5);
  EXPECT_EQ(y.data()[3], 2.0);
  EXPECT_EQ(y.data()[4], 1.0);
}
