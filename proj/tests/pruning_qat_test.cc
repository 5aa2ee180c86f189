// Copyright 2026 The noptc Authors. All Rights Reserved.
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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "noptc/graph_utils.h"
#include "noptc/models.h"
#include "noptc/pruning.h"
#include "noptc/status.h"
#include "noptc/trainer.h"
#include "test_util.h"

namespace noptc {
namespace {

using testing::count_ops;
using testing::random_values;

TEST(Schedule, EndpointsHoldForAnyExponent) {
  for (double e : {0.5, 1.0, 2.0, 3.0}) {
    SparsitySchedule s{.s_initial = 0.1, .s_final = 0.8, .t0 = 20, .delta_t = 5,
                       .span_steps = 100, .exponent = e};
    EXPECT_EQ(sparsity_at(s, 20), 0.1);
    EXPECT_EQ(sparsity_at(s, 120), 0.8);
    EXPECT_EQ(sparsity_at(s, 500), 0.8);
  }
}

TEST(Schedule, CubicMidpoint) {
  const SparsitySchedule s{.s_initial = 0.0, .s_final = 0.5, .t0 = 0, .delta_t = 1,
                           .span_steps = 100, .exponent = 3.0};
  EXPECT_NEAR(sparsity_at(s, 50), 0.4375, 1e-12);
}

TEST(Schedule, LinearMatchesPlainFormula) {
  const SparsitySchedule s{.s_initial = 0.2, .s_final = 0.6, .t0 = 10, .delta_t = 10,
                           .span_steps = 80, .exponent = 1.0};
  for (int64_t t = 10; t <= 90; ++t) {
    const double plain = 0.6 + (0.2 - 0.6) * (1.0 - (t - 10) / 80.0);
    EXPECT_NEAR(sparsity_at(s, t), plain, 1e-12);
  }
}

TEST(Schedule, NonDecreasing) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    SparsitySchedule s;
    s.s_initial = rng.uniform(0.0, 0.5);
    s.s_final = rng.uniform(s.s_initial + 0.01, 1.0);
    s.t0 = rng.integer(0, 20);
    s.delta_t = rng.integer(1, 5);
    s.span_steps = s.delta_t * rng.integer(1, 30);
    s.exponent = rng.uniform(0.2, 5.0);
    s.check();
    for (int64_t t = s.t0; t < s.t0 + s.span_steps + 10; ++t) {
      EXPECT_LE(sparsity_at(s, t), sparsity_at(s, t + 1));
    }
  }
}

TEST(Schedule, BadFieldsRejected) {
  SparsitySchedule s;
  s.span_steps = 7;
  s.delta_t = 2;
  EXPECT_THROW(s.check(), Error);
  s = SparsitySchedule{};
  s.s_final = 0.0;
  EXPECT_THROW(s.check(), Error);
}

TEST(Masks, ZeroTargetKeepsAll) {
  const std::vector<double> w = {0.1, -0.5, 0.3, 0.05};
  EXPECT_EQ(update_mask(w, {}, 0.0), Mask(4, 1));
}

TEST(Masks, HalfPrunesSmallestMagnitudes) {
  const std::vector<double> w = {0.1, -0.5, 0.3, 0.05};
  EXPECT_EQ(update_mask(w, {}, 0.5), (Mask{0, 1, 1, 0}));
}

TEST(Masks, FullTargetPrunesEverything) {
  const std::vector<double> w = {0.1, -0.5, 0.3, 0.05};
  EXPECT_EQ(update_mask(w, {}, 1.0), Mask(4, 0));
}

TEST(Masks, RandomAgainstSortOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const int64_t n = rng.integer(1, 60);
    const auto w = random_values(rng, n);
    const double target = rng.uniform(0.0, 1.0);
    const Mask m = update_mask(w, {}, target);
    const int64_t want = static_cast<int64_t>(std::ceil(target * n - 1e-9));
    EXPECT_EQ(std::count(m.begin(), m.end(), 0), want);
    std::vector<double> sorted(w);
    for (double& x : sorted) x = std::abs(x);
    std::sort(sorted.begin(), sorted.end());
    for (int64_t i = 0; i < n; ++i) {
      if (!m[i] && want < n) EXPECT_LE(std::abs(w[i]), sorted[want]);
      if (m[i] && want > 0) EXPECT_GE(std::abs(w[i]), sorted[want - 1]);
    }
  }
}

TEST(Masks, PrunedWeightsNeverRevive) {
  Rng rng(3);
  auto w = random_values(rng, 50);
  Mask m;
  for (double target : {0.1, 0.3, 0.3, 0.5, 0.9}) {
    // Weights drift between updates; survivors may now be smaller than the pruned.
    for (double& x : w) x += rng.uniform(-0.5, 0.5);
    const Mask next = update_mask(w, m, target);
    for (size_t i = 0; i < m.size(); ++i) {
      if (!m[i]) EXPECT_EQ(next[i], 0);
    }
    EXPECT_NEAR(mask_sparsity(next), target, 1.0 / 50);
    m = next;
  }
}

TEST(Masks, GraphWeightsMaskedInPlace) {
  const Graph g = make_mlp({4, 6, 3}, 1);
  const MaskSet masks = update_masks(g, {}, 0.5);
  EXPECT_EQ(masks.size(), 2u);
  const Graph pruned = apply_masks(g, masks);
  for (TensorId t : prunable_weights(pruned)) {
    const auto v = *constant_values(pruned, t);
    EXPECT_EQ(std::count(v.begin(), v.end(), 0.0), static_cast<long>(v.size() / 2));
  }
}

TEST(FakeQuant, OneConvGetsTwoNodes) {
  Rng rng(4);
  Graph g;
  const TensorId x = add_input(g, "x", {1, 4, 4, 2});
  const TensorId w = add_constant(g, {3, 3, 2, 2}, DType::kF32, random_values(rng, 36));
  add_output(g, emit1(g, OpKind::kConv2D, {x, w}), "y");
  const Graph out = insert_fake_quant(g, 8);
  EXPECT_EQ(count_ops(out, OpKind::kFakeQuant), 2);
  EXPECT_EQ(out.find_tensor(out.outputs[0])->name, "y");
}

TEST(FakeQuant, MlpSitesAndCalibratedRanges) {
  const Graph g = make_mlp({3, 5, 2}, 2, false);
  Rng rng(5);
  std::vector<TensorMap> samples;
  for (int i = 0; i < 4; ++i) samples.push_back(testing::random_inputs(g, rng));
  const Graph out = insert_fake_quant(g, 8, samples);
  // Two weights, two MatMul outputs, one Relu output.
  EXPECT_EQ(count_ops(out, OpKind::kFakeQuant), 5);
  const auto a = run(g, samples[0]).outputs.at("y");
  const auto b = run(out, samples[0]).outputs.at("y");
  for (size_t i = 0; i < a.data.size(); ++i) EXPECT_NEAR(a.data[i], b.data[i], 0.05);
}

TEST(FakeQuant, RepresentableValueAndIdempotence) {
  Graph g;
  const TensorId x = add_input(g, "x", {5});
  const Attrs a = {{"bits", int64_t{8}}, {"min", -1.0}, {"max", 1.0}};
  add_output(g, emit1(g, OpKind::kFakeQuant, {x}, a), "once");
  add_output(g, emit1(g, OpKind::kFakeQuant, {emit1(g, OpKind::kFakeQuant, {x}, a)}, a), "twice");
  const auto r = run(g, testing::single_input("x", {5}, {0.5, 0.3, -0.77, 1.5, -2.0})).outputs;
  EXPECT_EQ(r.at("once").data[0], 0.5);
  EXPECT_EQ(r.at("once").data, r.at("twice").data);
}

TEST(FakeQuant, BitsValidated) { EXPECT_THROW(insert_fake_quant(make_mlp({2, 2}, 0), 1), Error); }

TEST(Ste, ElementGradientMatchesClipSurrogate) {
  Rng rng(6);
  const int bits = 4;
  const double range = 1.3;
  const double step = range / 8.0;
  const double h = 1e-6;
  int checked = 0;
  while (checked < 500) {
    const double x = rng.uniform(-2.0, 2.0);
    const ClipRange c = clip_range(range, bits);
    const double to_step = (0.5 - std::abs(x / step - std::round(x / step))) * step;
    const double to_clip = std::min(std::abs(x - c.lo), std::abs(x - c.hi));
    if (to_step < 1e-3 || to_clip < 1e-3) continue;
    const double fd = (std::clamp(x + h, c.lo, c.hi) - std::clamp(x - h, c.lo, c.hi)) / (2 * h);
    EXPECT_NEAR(fake_quant_grad(x, range, bits), fd, 1e-4);
    ++checked;
  }
}

TEST(Ste, MlpBackwardMatchesSurrogateFiniteDifferences) {
  const DataSplit data = make_blobs(10, 0, 7);
  Mlp mlp = extract_mlp(make_mlp({2, 6, 2}, 7, true));
  QuantState q = observe_ranges(mlp, data.train, QuantSim::kClipSurrogate, 4);
  // Shrink ranges so some values sit in the clipped region.
  for (double& r : q.matmul_range) r *= 0.7;
  for (double& r : q.relu_range) r *= 0.7;
  for (double& r : q.weight_range) r *= 0.9;
  const LossAndGrad g = loss_and_gradients(mlp, data.train, q);
  const double h = 1e-6;
  int compared = 0;
  for (size_t l = 0; l < mlp.layers.size(); ++l) {
    for (size_t i = 0; i < mlp.layers[l].w.size(); ++i) {
      const double w0 = mlp.layers[l].w[i];
      const ClipRange c = clip_range(q.weight_range[l], q.bits);
      if (std::min(std::abs(w0 - c.lo), std::abs(w0 - c.hi)) < 1e-3) continue;
      mlp.layers[l].w[i] = w0 + h;
      const double up = loss_and_gradients(mlp, data.train, q).loss;
      mlp.layers[l].w[i] = w0 - h;
      const double down = loss_and_gradients(mlp, data.train, q).loss;
      mlp.layers[l].w[i] = w0;
      EXPECT_NEAR(g.dw[l][i], (up - down) / (2 * h), 1e-4) << "layer " << l << " index " << i;
      ++compared;
    }
    for (size_t i = 0; i < mlp.layers[l].b.size(); ++i) {
      const double b0 = mlp.layers[l].b[i];
      mlp.layers[l].b[i] = b0 + h;
      const double up = loss_and_gradients(mlp, data.train, q).loss;
      mlp.layers[l].b[i] = b0 - h;
      const double down = loss_and_gradients(mlp, data.train, q).loss;
      mlp.layers[l].b[i] = b0;
      EXPECT_NEAR(g.db[l][i], (up - down) / (2 * h), 1e-4);
    }
  }
  EXPECT_GT(compared, 20);
}

TEST(Trainer, DenseBlobsReachHighAccuracy) {
  const DataSplit data = make_blobs(100, 100, 7);
  const TrainResult r = train_toy(make_mlp({2, 16, 2}, 7), data, {.steps = 500});
  EXPECT_GE(r.test_accuracy, 0.95);
  EXPECT_FALSE(r.history.empty());
  EXPECT_LT(r.history.back().loss, r.history.front().loss);
  // Interpreter agrees with the trainer's own forward pass.
  int correct = 0;
  for (int64_t s = 0; s < data.test.size(); ++s) {
    const auto y = run(r.graph, testing::single_input("x", {1, 2},
                                                     {data.test.x[2 * s], data.test.x[2 * s + 1]}))
                       .outputs.at("y");
    correct += (y.data[1] > y.data[0] ? 1 : 0) == data.test.y[s];
  }
  EXPECT_NEAR(correct / static_cast<double>(data.test.size()), r.test_accuracy, 0.011);
}

TEST(Trainer, HalfSparseStaysClose) {
  const DataSplit data = make_blobs(100, 100, 7);
  const Graph model = make_mlp({2, 16, 2}, 7);
  const TrainResult dense = train_toy(model, data, {.steps = 500});
  TrainConfig cfg{.steps = 500};
  cfg.schedule = SparsitySchedule{.s_initial = 0.0, .s_final = 0.5, .t0 = 0, .delta_t = 10,
                                  .span_steps = 300, .exponent = 3.0};
  const TrainResult sparse = train_toy(model, data, cfg);
  ASSERT_TRUE(sparse.last_mask_update.has_value());
  EXPECT_EQ(*sparse.last_mask_update, 300);
  for (const auto& [t, m] : sparse.masks) {
    EXPECT_NEAR(mask_sparsity(m), 0.5, 1.0 / m.size());
  }
  for (double s : sparse.layer_sparsity) EXPECT_GE(s, 0.5 - 1.0 / 32);
  EXPECT_GE(sparse.test_accuracy, dense.test_accuracy - 0.05);
}

TEST(Trainer, FakeQuantTrainingEmitsFakeQuantGraph) {
  const DataSplit data = make_blobs(100, 100, 8);
  TrainConfig cfg{.steps = 300};
  cfg.fake_quant_bits = 8;
  const TrainResult r = train_toy(make_mlp({2, 16, 2}, 8), data, cfg);
  EXPECT_GE(r.test_accuracy, 0.9);
  EXPECT_EQ(count_ops(r.graph, OpKind::kFakeQuant), 5);
}

TEST(Trainer, ZeroStepsLeavesModelAndMasks) {
  const DataSplit data = make_blobs(20, 20, 9);
  const Graph model = make_mlp({2, 4, 2}, 9);
  TrainConfig cfg{.steps = 0};
  cfg.schedule = SparsitySchedule{};
  const TrainResult r = train_toy(model, data, cfg);
  EXPECT_TRUE(r.masks.empty());
  EXPECT_EQ(r.graph, validated(model));
}

TEST(Trainer, ConvModelRejected) {
  ModelSpec s = reference_cnn_spec();
  s.input = {8, 8, 1};
  s.conv_channels = {2};
  s.dense = {};
  try {
    train_toy(generate_model(s), make_blobs(2, 2, 1), {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnsupportedLayerForTraining);
  }
}

}  // namespace
}  // namespace noptc
