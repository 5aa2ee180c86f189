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

#include <cmath>

#include "noptc/graph_utils.h"
#include "noptc/half.h"
#include "noptc/interpreter.h"
#include "test_util.h"

namespace noptc {
namespace {

using testing::only_output;
using testing::random_values;
using testing::single_input;

TEST(Run, AddsConstants) {
  Graph g;
  const TensorId a = add_constant(g, {2}, DType::kF32, std::vector<double>{1, 2});
  const TensorId b = add_constant(g, {2}, DType::kF32, std::vector<double>{3, 4});
  add_output(g, emit1(g, OpKind::kAdd, {a, b}), "y");
  EXPECT_EQ(only_output(run(g, {})).data, (std::vector<double>{4, 6}));
}

TEST(Run, IdentityPassesThrough) {
  Graph g;
  const TensorId x = add_input(g, "x", {1});
  add_output(g, emit1(g, OpKind::kIdentity, {x}), "y");
  EXPECT_EQ(only_output(run(g, single_input("x", {1}, {5}))).data, (std::vector<double>{5}));
}

TEST(Run, MissingInputIsReported) {
  Graph g;
  const TensorId x = add_input(g, "x", {1});
  add_output(g, emit1(g, OpKind::kNeg, {x}), "y");
  try {
    run(g, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingInput);
  }
}

// Direct NHWC / HWIO convolution, written out independently of the kernel.
std::vector<double> reference_conv(const std::vector<double>& x, int64_t h, int64_t w,
                                   int64_t c, const std::vector<double>& k, int64_t kh,
                                   int64_t kw, int64_t o, int64_t stride, bool same) {
  const int64_t oh = same ? (h + stride - 1) / stride : (h - kh) / stride + 1;
  const int64_t ow = same ? (w + stride - 1) / stride : (w - kw) / stride + 1;
  const int64_t pt = same ? std::max<int64_t>((oh - 1) * stride + kh - h, 0) / 2 : 0;
  const int64_t pl = same ? std::max<int64_t>((ow - 1) * stride + kw - w, 0) / 2 : 0;
  std::vector<double> out(oh * ow * o, 0.0);
  for (int64_t i = 0; i < oh; ++i)
    for (int64_t j = 0; j < ow; ++j)
      for (int64_t q = 0; q < o; ++q) {
        double s = 0;
        for (int64_t a = 0; a < kh; ++a)
          for (int64_t b = 0; b < kw; ++b)
            for (int64_t ci = 0; ci < c; ++ci) {
              const int64_t y = i * stride - pt + a, z = j * stride - pl + b;
              if (y < 0 || y >= h || z < 0 || z >= w) continue;
              s += x[(y * w + z) * c + ci] * k[((a * kw + b) * c + ci) * o + q];
            }
        out[(i * ow + j) * o + q] = s;
      }
  return out;
}

TEST(Run, AllOnesConvolution) {
  Graph g;
  const TensorId x = add_input(g, "x", {1, 3, 3, 1});
  const TensorId w = add_constant(g, {2, 2, 1, 1}, DType::kF32, std::vector<double>(4, 1.0));
  add_output(g, emit1(g, OpKind::kConv2D, {x, w}, {{"padding", std::string("VALID")}}), "y");
  const auto out = only_output(run(g, single_input("x", {1, 3, 3, 1}, std::vector<double>(9, 1.0))));
  EXPECT_EQ(out.shape, (Shape{1, 2, 2, 1}));
  EXPECT_EQ(out.data, (std::vector<double>(4, 4.0)));
  EXPECT_EQ(out.data, reference_conv(std::vector<double>(9, 1.0), 3, 3, 1,
                                     std::vector<double>(4, 1.0), 2, 2, 1, 1, false));
}

TEST(Run, RandomConvolutionsMatchReference) {
  Rng rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const int64_t h = rng.integer(3, 7), w = rng.integer(3, 7), c = rng.integer(1, 3);
    const int64_t kh = rng.integer(1, 3), kw = rng.integer(1, 3), o = rng.integer(1, 4);
    const int64_t stride = rng.integer(1, 2);
    const bool same = rng.coin();
    const auto xv = random_values(rng, h * w * c);
    const auto kv = random_values(rng, kh * kw * c * o);
    Graph g;
    const TensorId x = add_input(g, "x", {1, h, w, c});
    const TensorId k = add_constant(g, {kh, kw, c, o}, DType::kF32, kv);
    add_output(g,
               emit1(g, OpKind::kConv2D, {x, k},
                     {{"strides", std::vector<int64_t>{stride, stride}},
                      {"padding", std::string(same ? "SAME" : "VALID")}}),
               "y");
    // Constants are stored as float32; the reference sees the stored values.
    std::vector<double> kf(kv.size());
    for (size_t i = 0; i < kv.size(); ++i) kf[i] = static_cast<float>(kv[i]);
    const auto out = only_output(run(g, single_input("x", {1, h, w, c}, xv)));
    const auto ref = reference_conv(xv, h, w, c, kf, kh, kw, o, stride, same);
    ASSERT_EQ(out.data.size(), ref.size());
    for (size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out.data[i], ref[i], 1e-12);
  }
}

TEST(Run, DepthwiseConvolutionPerChannel) {
  Graph g;
  const TensorId x = add_input(g, "x", {1, 2, 2, 2});
  // Channel 0 filter all 1, channel 1 filter all 2.
  const TensorId w = add_constant(g, {2, 2, 2, 1}, DType::kF32,
                                  std::vector<double>{1, 2, 1, 2, 1, 2, 1, 2});
  add_output(g, emit1(g, OpKind::kDepthwiseConv2D, {x, w}), "y");
  const auto out =
      only_output(run(g, single_input("x", {1, 2, 2, 2}, {1, 10, 2, 20, 3, 30, 4, 40})));
  EXPECT_EQ(out.data, (std::vector<double>{10, 200}));
}

TEST(Run, MovementOps) {
  Graph g;
  const TensorId x = add_input(g, "x", {2, 3});
  add_output(g, emit1(g, OpKind::kTranspose, {x}), "t");
  add_output(g, emit1(g, OpKind::kReverse, {x}, {{"axes", std::vector<int64_t>{1}}}), "r");
  add_output(g, emit1(g, OpKind::kPad, {x}, {{"paddings", std::vector<int64_t>{0, 1, 1, 0}}}),
             "p");
  add_output(g, emit1(g, OpKind::kTile, {x}, {{"multiples", std::vector<int64_t>{1, 2}}}), "l");
  add_output(g,
             emit1(g, OpKind::kSlice, {x},
                   {{"begin", std::vector<int64_t>{1, 1}}, {"size", std::vector<int64_t>{1, -1}}}),
             "s");
  add_output(g, emit1(g, OpKind::kConcat, {x, x}, {{"axis", int64_t{1}}}), "c");
  const auto parts = emit(g, OpKind::kSplit, {x}, {{"axis", int64_t{0}}, {"num_splits", int64_t{2}}});
  add_output(g, parts[1], "sp");
  add_output(g, emit1(g, OpKind::kReshape, {x}, {{"shape", std::vector<int64_t>{3, -1}}}), "re");
  const auto r = run(g, single_input("x", {2, 3}, {1, 2, 3, 4, 5, 6})).outputs;
  EXPECT_EQ(r.at("t").data, (std::vector<double>{1, 4, 2, 5, 3, 6}));
  EXPECT_EQ(r.at("r").data, (std::vector<double>{3, 2, 1, 6, 5, 4}));
  EXPECT_EQ(r.at("p").data, (std::vector<double>{0, 1, 2, 3, 0, 4, 5, 6, 0, 0, 0, 0}));
  EXPECT_EQ(r.at("l").data, (std::vector<double>{1, 2, 3, 1, 2, 3, 4, 5, 6, 4, 5, 6}));
  EXPECT_EQ(r.at("s").data, (std::vector<double>{5, 6}));
  EXPECT_EQ(r.at("c").data, (std::vector<double>{1, 2, 3, 1, 2, 3, 4, 5, 6, 4, 5, 6}));
  EXPECT_EQ(r.at("sp").data, (std::vector<double>{4, 5, 6}));
  EXPECT_EQ(r.at("re").shape, (Shape{3, 2}));
}

TEST(Run, ChannelShuffle) {
  Graph g;
  const TensorId x = add_input(g, "x", {1, 6});
  add_output(g, emit1(g, OpKind::kShuffle, {x}, {{"groups", int64_t{2}}}), "y");
  const auto out = only_output(run(g, single_input("x", {1, 6}, {0, 1, 2, 3, 4, 5})));
  EXPECT_EQ(out.data, (std::vector<double>{0, 3, 1, 4, 2, 5}));
}

TEST(Run, PoolsSoftmaxBatchNorm) {
  Graph g;
  const TensorId x = add_input(g, "x", {1, 2, 2, 1});
  const Attrs pool = {{"ksize", std::vector<int64_t>{2, 2}}, {"strides", std::vector<int64_t>{2, 2}}};
  add_output(g, emit1(g, OpKind::kMaxPool, {x}, pool), "max");
  add_output(g, emit1(g, OpKind::kAvgPool, {x}, pool), "avg");
  add_output(g, emit1(g, OpKind::kSoftmax, {x}), "soft");
  const auto one = std::vector<double>{1.0};
  const TensorId gamma = add_constant(g, {1}, DType::kF32, std::vector<double>{2.0});
  const TensorId beta = add_constant(g, {1}, DType::kF32, std::vector<double>{0.5});
  const TensorId mean = add_constant(g, {1}, DType::kF32, one);
  const TensorId var = add_constant(g, {1}, DType::kF32, std::vector<double>{3.75});
  add_output(g,
             emit1(g, OpKind::kFusedBatchNorm, {x, gamma, beta, mean, var},
                   {{"epsilon", 0.25}}),
             "bn");
  const auto r = run(g, single_input("x", {1, 2, 2, 1}, {1, 4, 2, 3})).outputs;
  EXPECT_EQ(r.at("max").data, (std::vector<double>{4}));
  EXPECT_EQ(r.at("avg").data, (std::vector<double>{2.5}));
  EXPECT_EQ(r.at("soft").data, (std::vector<double>{1, 1, 1, 1}));
  // 2 * (x - 1) / 2 + 0.5
  EXPECT_EQ(r.at("bn").data, (std::vector<double>{0.5, 3.5, 1.5, 2.5}));
}

TEST(Run, BooleanOps) {
  Graph g;
  const TensorId a = add_input(g, "a", {3});
  const TensorId b = add_input(g, "b", {3});
  const TensorId gt = emit1(g, OpKind::kGreater, {a, b});
  add_output(g, emit1(g, OpKind::kNot, {gt}), "ng");
  add_output(g, emit1(g, OpKind::kLessEqual, {a, b}), "le");
  TensorMap in = single_input("a", {3}, {1, 2, 3});
  in["b"] = TensorValue::from({3}, {2, 2, 2});
  const auto r = run(g, in).outputs;
  EXPECT_EQ(r.at("ng").data, (std::vector<double>{1, 1, 0}));
  EXPECT_EQ(r.at("ng").data, r.at("le").data);
  EXPECT_EQ(r.at("le").dtype, DType::kBool);
}

Graph counter_loop(int64_t trip) {
  Graph body;
  const TensorId bx = add_input(body, "x", {1});
  const TensorId one = add_scalar(body, 1.0);
  add_output(body, emit1(body, OpKind::kAdd, {bx, one}));
  Graph g;
  g.subgraphs.push_back(body);
  const TensorId x = add_input(g, "x", {1});
  add_output(g, emit(g, OpKind::kLoop, {x}, {{"trip_count", trip}, {"body", int64_t{0}}})[0],
             "y");
  return g;
}

TEST(Run, LoopCarriesValues) {
  for (int64_t trip : {0, 1, 3}) {
    const auto r = run(counter_loop(trip), single_input("x", {1}, {5}));
    EXPECT_EQ(only_output(r).data[0], 5.0 + trip);
    EXPECT_EQ(r.stats.additions, trip);
  }
  EXPECT_EQ(count_multiplications(counter_loop(7)).additions, 7);
}

TEST(Run, LoopWithInvariantInput) {
  Graph body;
  const TensorId acc = add_input(body, "acc", {2});
  const TensorId step = add_input(body, "step", {2});
  add_output(body, emit1(body, OpKind::kAdd, {acc, step}));
  Graph g;
  g.subgraphs.push_back(body);
  const TensorId a = add_input(g, "a", {2});
  const TensorId s = add_input(g, "s", {2});
  add_output(g,
             emit(g, OpKind::kLoop, {a, s},
                  {{"trip_count", int64_t{4}}, {"body", int64_t{0}}, {"num_carried", int64_t{1}}})[0],
             "y");
  ASSERT_TRUE(validate(g).ok()) << validate(g).summary();
  TensorMap in = single_input("a", {2}, {1, 2});
  in["s"] = TensorValue::from({2}, {0.5, -1});
  EXPECT_EQ(only_output(run(g, in)).data, (std::vector<double>{3, -2}));
}

TEST(Run, DeterministicBitIdentical) {
  Rng rng(5);
  Graph g;
  const TensorId x = add_input(g, "x", {1, 5, 5, 3});
  const TensorId w = add_constant(g, {3, 3, 3, 4}, DType::kF32, random_values(rng, 108));
  const TensorId y = emit1(g, OpKind::kConv2D, {x, w}, {{"padding", std::string("SAME")}});
  add_output(g, emit1(g, OpKind::kSoftmax, {emit1(g, OpKind::kExp, {y})}), "y");
  const auto in = single_input("x", {1, 5, 5, 3}, random_values(rng, 75));
  EXPECT_EQ(only_output(run(g, in)).data, only_output(run(g, in)).data);
}

TEST(Run, Float16RoundsEveryNode) {
  Graph g;
  const TensorId x = add_input(g, "x", {1}, DType::kF16);
  const TensorId c = add_scalar(g, 1.0, DType::kF16);
  add_output(g, emit1(g, OpKind::kAdd, {x, c}), "y");
  const double tiny = std::ldexp(1.0, -12);
  const auto out = only_output(run(g, single_input("x", {1}, {tiny})));
  EXPECT_EQ(out.dtype, DType::kF16);
  EXPECT_EQ(out.data[0], 1.0);  // 1 + 2^-12 is below half precision
}

// --- Integer path ---------------------------------------------------------

QuantParams fixed_point(int bits = 8) {
  QuantParams q;
  q.bit_width = bits;
  q.scheme = QuantScheme::kSymmetric;
  q.scales = {static_cast<float>(std::ldexp(1.0, -(bits - 1)))};
  q.zero_points = {0};
  return q;
}

Graph int8_dot(const std::vector<double>& w_codes) {
  Graph g;
  const int64_t d = static_cast<int64_t>(w_codes.size());
  const TensorId x = add_input(g, "x", {1, d}, DType::kI8);
  g.find_tensor(x)->quant = fixed_point();
  const TensorId w = add_constant(g, {d, 1}, DType::kI8, w_codes, fixed_point());
  add_output(g, emit1(g, OpKind::kMatMul, {x, w}, {}, DType::kF32), "y");
  return g;
}

TensorMap int8_input(const std::string& name, Shape shape, std::vector<double> codes,
                     const QuantParams& q) {
  TensorValue v = TensorValue::from(std::move(shape), std::move(codes), DType::kI8);
  v.quant = q;
  TensorMap m;
  m[name] = v;
  return m;
}

TEST(RunQuantized, DotProductExample) {
  const Graph g = int8_dot({64, -32});
  const auto r = run_quantized(g, int8_input("x", {1, 2}, {100, 50}, fixed_point()));
  // phi = 64*100 - 32*50 = 4800; psi = 2^-14 * 4800
  EXPECT_EQ(only_output(r).data[0], 0.29296875);
  EXPECT_EQ(only_output(r).data[0], std::ldexp(4800.0, -14));
}

TEST(RunQuantized, ZeroWeightsGiveZero) {
  Rng rng(9);
  const Graph g = int8_dot({0, 0, 0, 0});
  for (int i = 0; i < 20; ++i) {
    std::vector<double> codes;
    for (int k = 0; k < 4; ++k) codes.push_back(static_cast<double>(rng.integer(-128, 127)));
    EXPECT_EQ(only_output(run_quantized(g, int8_input("x", {1, 4}, codes, fixed_point()))).data[0],
              0.0);
  }
}

TEST(RunQuantized, RejectsFloatOperands) {
  Graph g;
  const TensorId x = add_input(g, "x", {1, 2});
  const TensorId w = add_constant(g, {2, 1}, DType::kF32, std::vector<double>{1, 1});
  add_output(g, emit1(g, OpKind::kMatMul, {x, w}), "y");
  EXPECT_THROW(run_quantized(g, single_input("x", {1, 2}, {1, 2})), Error);
}

TEST(RunQuantized, SymmetricConvMatchesFloatOnDequantizedOperands) {
  Rng rng(21);
  for (int trial = 0; trial < 25; ++trial) {
    const int64_t h = rng.integer(2, 6), c = rng.integer(1, 3), o = rng.integer(1, 3);
    const int64_t k = rng.integer(1, 2);
    std::vector<double> xc, wc;
    for (int64_t i = 0; i < h * h * c; ++i) xc.push_back(static_cast<double>(rng.integer(-128, 127)));
    for (int64_t i = 0; i < k * k * c * o; ++i) wc.push_back(static_cast<double>(rng.integer(-128, 127)));
    Graph qg;
    const TensorId qx = add_input(qg, "x", {1, h, h, c}, DType::kI8);
    qg.find_tensor(qx)->quant = fixed_point();
    const TensorId qw = add_constant(qg, {k, k, c, o}, DType::kI8, wc, fixed_point());
    add_output(qg,
               emit1(qg, OpKind::kConv2D, {qx, qw}, {{"padding", std::string("SAME")}},
                     DType::kF32),
               "y");

    Graph fg;
    std::vector<double> wf, xf;
    for (double v : wc) wf.push_back(std::ldexp(v, -7));
    for (double v : xc) xf.push_back(std::ldexp(v, -7));
    const TensorId fx = add_input(fg, "x", {1, h, h, c});
    const TensorId fw = add_constant(fg, {k, k, c, o}, DType::kF32, wf);
    add_output(fg, emit1(fg, OpKind::kConv2D, {fx, fw}, {{"padding", std::string("SAME")}}), "y");

    const auto q = only_output(run_quantized(qg, int8_input("x", {1, h, h, c}, xc, fixed_point())));
    const auto f = only_output(run(fg, single_input("x", {1, h, h, c}, xf)));
    EXPECT_EQ(q.data, f.data);
  }
}

TEST(RunQuantized, AccumulatorOverflowIsRaised) {
  const int64_t d = 140000;
  const Graph g = int8_dot(std::vector<double>(d, 127));
  try {
    run_quantized(g, int8_input("x", {1, d}, std::vector<double>(d, 127), fixed_point()));
    FAIL() << "expected overflow";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kAccumulatorOverflow);
  }
  // Just below the limit: 127*127*133000 < 2^31.
  const int64_t ok = 133000;
  const Graph h = int8_dot(std::vector<double>(ok, 127));
  EXPECT_NO_THROW(
      run_quantized(h, int8_input("x", {1, ok}, std::vector<double>(ok, 127), fixed_point())));
}

TEST(RunQuantized, AsymmetricPerChannelRescale) {
  QuantParams qx;
  qx.scales = {0.5f};
  qx.zero_points = {-10};
  QuantParams qw;
  qw.axis = 1;
  qw.scales = {0.25f, 2.0f};
  qw.zero_points = {3, -1};
  Graph g;
  const TensorId x = add_input(g, "x", {1, 2}, DType::kI8);
  g.find_tensor(x)->quant = qx;
  const TensorId w = add_constant(g, {2, 2}, DType::kI8, std::vector<double>{5, 1, 7, -3}, qw);
  add_output(g, emit1(g, OpKind::kMatMul, {x, w}, {}, DType::kF32), "y");
  const auto out = only_output(run_quantized(g, int8_input("x", {1, 2}, {-6, 0}, qx)));
  // real x = [2, 5]; real w = [[0.5, 4], [1, -4]]
  EXPECT_EQ(out.data, (std::vector<double>{6, -12}));
}

TEST(CountMultiplications, ConvolutionFormula) {
  struct Case {
    int64_t c, a, b;
  };
  for (const Case& k : {Case{3, 3, 3}, Case{1, 3, 3}, Case{16, 3, 3}, Case{2, 5, 1}}) {
    Graph g;
    const TensorId x = add_input(g, "x", {1, 8, 8, k.c});
    const TensorId w = add_constant(g, {k.a, k.b, k.c, 2}, DType::kF32,
                                    std::vector<double>(k.a * k.b * k.c * 2, 0.5));
    add_output(g, emit1(g, OpKind::kConv2D, {x, w}), "y");
    const auto stats = count_multiplications(g);
    ASSERT_EQ(stats.per_node.size(), 1u);
    const auto& s = stats.per_node[0];
    EXPECT_EQ(s.mults_per_element, k.c * k.a * k.b);
    EXPECT_EQ(s.macs, s.output_elements * k.c * k.a * k.b);
    EXPECT_EQ(stats.macs, s.macs);
    EXPECT_EQ(run(g, testing::single_input("x", {1, 8, 8, k.c},
                                           std::vector<double>(64 * k.c, 1.0)))
                  .stats.macs,
              s.macs);
  }
}

TEST(Tolerance, RelativeAndAbsolute) {
  const auto a = TensorValue::from({2}, {1.0, 0.0});
  const auto b = TensorValue::from({2}, {1.0 + 1e-7, 1e-13});
  EXPECT_TRUE(values_close(a, b, 1e-5));
  EXPECT_FALSE(values_close(a, b, 1e-8));
  EXPECT_FALSE(values_close(a, TensorValue::from({1, 2}, {1.0, 0.0}), 1.0));
}

}  // namespace
}  // namespace noptc
