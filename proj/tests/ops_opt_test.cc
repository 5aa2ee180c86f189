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

#include "noptc/ops_opt.h"

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "noptc/graph_utils.h"
#include "noptc/status.h"
#include "noptc/svd.h"
#include "test_util.h"

namespace noptc {
namespace {

using testing::count_ops;
using testing::random_inputs;
using testing::random_values;

Eigen::MatrixXd to_eigen(const std::vector<double>& m, int64_t rows, int64_t cols) {
  Eigen::MatrixXd e(rows, cols);
  for (int64_t i = 0; i < rows; ++i) {
    for (int64_t j = 0; j < cols; ++j) e(i, j) = m[i * cols + j];
  }
  return e;
}

// Singular values from the eigenvalues of the smaller Gram matrix, descending.
std::vector<double> gram_singular_values(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd gram = m.rows() >= m.cols() ? Eigen::MatrixXd(m.transpose() * m)
                                                    : Eigen::MatrixXd(m * m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  std::vector<double> s;
  for (int i = 0; i < eig.eigenvalues().size(); ++i) {
    s.push_back(std::sqrt(std::max(0.0, eig.eigenvalues()(i))));
  }
  std::sort(s.rbegin(), s.rend());
  return s;
}

TEST(Svd, RandomMatricesAgainstGramOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const int64_t rows = rng.integer(1, 7), cols = rng.integer(1, 7);
    const auto m = random_values(rng, rows * cols);
    const Svd svd = jacobi_svd(m, rows, cols);
    const int64_t k = std::min(rows, cols);
    ASSERT_EQ(svd.rank_capacity(), k);
    Eigen::MatrixXd u(rows, k), v(cols, k);
    for (int64_t i = 0; i < rows; ++i)
      for (int64_t j = 0; j < k; ++j) u(i, j) = svd.u_at(i, j);
    for (int64_t i = 0; i < cols; ++i)
      for (int64_t j = 0; j < k; ++j) v(i, j) = svd.v_at(i, j);
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(k, k);
    EXPECT_LT((u.transpose() * u - eye).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((v.transpose() * v - eye).cwiseAbs().maxCoeff(), 1e-10);
    Eigen::VectorXd s(k);
    for (int64_t j = 0; j < k; ++j) s(j) = svd.s[j];
    const Eigen::MatrixXd rec = u * s.asDiagonal() * v.transpose();
    EXPECT_LT((rec - to_eigen(m, rows, cols)).cwiseAbs().maxCoeff(), 1e-10);
    const auto oracle = gram_singular_values(to_eigen(m, rows, cols));
    for (int64_t j = 0; j < k; ++j) {
      EXPECT_NEAR(svd.s[j], oracle[j], 1e-7) << "trial " << trial;
      if (j > 0) EXPECT_GE(svd.s[j - 1], svd.s[j]);
    }
  }
}

TEST(Svd, RankDeficientStillOrthonormal) {
  const std::vector<double> zeros(12, 0.0);
  const Svd svd = jacobi_svd(zeros, 4, 3);
  for (int64_t a = 0; a < 3; ++a) {
    for (int64_t b = 0; b < 3; ++b) {
      double d = 0.0;
      for (int64_t i = 0; i < 4; ++i) d += svd.u_at(i, a) * svd.u_at(i, b);
      EXPECT_NEAR(d, a == b ? 1.0 : 0.0, 1e-12);
    }
  }
}

TEST(Svd, SweepLimitRaisesConvergenceFailure) {
  Rng rng(2);
  const auto m = random_values(rng, 36);
  try {
    jacobi_svd(m, 6, 6, 1);
    FAIL() << "expected ConvergenceFailure";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConvergenceFailure);
  }
}

TEST(SeparateFilter, SobelFactorsExactly) {
  const std::vector<double> u = {1, 2, 1}, v = {1, 0, -1};
  std::vector<double> k;
  for (double a : u)
    for (double b : v) k.push_back(a * b);
  const SeparationResult r = separate_filter(k, 3, 3, 1);
  EXPECT_EQ(r.rank, 1);
  EXPECT_LE(r.max_abs_error, 1e-12);
  const std::vector<double> expect_v = {0.5, 1.0, 0.5}, expect_h = {2.0, 0.0, -2.0};
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(r.vertical[0][i], expect_v[i], 1e-12);
    EXPECT_NEAR(r.horizontal[0][i], expect_h[i], 1e-12);
  }
}

TEST(SeparateFilter, IdentityLosesTwoUnitValues) {
  const std::vector<double> eye = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  const SeparationResult r = separate_filter(eye, 3, 3, 1);
  EXPECT_NEAR(r.frobenius_error * r.frobenius_error, 2.0, 1e-12);
}

TEST(SeparateFilter, FullRankIsExact) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int64_t a = rng.integer(1, 7), b = rng.integer(1, 7);
    const auto f = random_values(rng, a * b);
    EXPECT_LE(separate_filter(f, a, b, std::min(a, b)).frobenius_error, 1e-12);
  }
}

TEST(SeparateFilter, ErrorIsTailEnergy) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const int64_t a = rng.integer(1, 7), b = rng.integer(1, 7);
    const int64_t n = rng.integer(1, std::min(a, b));
    const auto f = random_values(rng, a * b);
    const auto oracle = gram_singular_values(to_eigen(f, a, b));
    double tail = 0.0;
    for (size_t j = n; j < oracle.size(); ++j) tail += oracle[j] * oracle[j];
    EXPECT_NEAR(separate_filter(f, a, b, n).frobenius_error, std::sqrt(tail), 1e-7);
  }
}

TEST(SeparateFilter, RankOutOfRangeRejected) {
  const std::vector<double> f(6, 1.0);
  for (int64_t n : {0, 3}) {
    try {
      separate_filter(f, 2, 3, n);
      FAIL() << "rank " << n;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
    }
  }
}

// A x B x C kernel built from `rank` random outer products.
std::vector<double> cp_kernel(Rng& rng, int64_t a, int64_t b, int64_t c, int64_t rank) {
  std::vector<double> k(a * b * c, 0.0);
  for (int64_t r = 0; r < rank; ++r) {
    const auto u = random_values(rng, a), v = random_values(rng, b), p = random_values(rng, c);
    for (int64_t i = 0; i < a; ++i)
      for (int64_t j = 0; j < b; ++j)
        for (int64_t l = 0; l < c; ++l) k[(i * b + j) * c + l] += u[i] * v[j] * p[l];
  }
  return k;
}

TEST(SeparateKernel, LowRankKernelsRecovered) {
  Rng rng(5);
  for (int64_t rank : {1, 2}) {
    for (int trial = 0; trial < 20; ++trial) {
      const auto k = cp_kernel(rng, 3, 3, 4, rank);
      const SeparationResult r = separate_kernel(k, 3, 3, 4, rank);
      EXPECT_LT(r.max_abs_error, 1e-8) << "rank " << rank << " trial " << trial;
    }
  }
}

TEST(Savings, PlugInCounts) {
  const Savings tiny = estimate_savings(1, 1, 1, 1);
  EXPECT_EQ(tiny.before, 1);
  EXPECT_EQ(tiny.after, 3);
  EXPECT_DOUBLE_EQ(tiny.ratio, 1.0 / 3.0);
  EXPECT_EQ(estimate_savings(16, 3, 3, 1).before, 144);
  EXPECT_EQ(estimate_savings(16, 3, 3, 1).after, 22);
  EXPECT_EQ(estimate_savings(3, 3, 3, 1).after, 9);
  EXPECT_EQ(estimate_savings(3, 3, 3, 2).after, 18);
  EXPECT_THROW(estimate_savings(0, 3, 3, 1), Error);
}

struct ConvCase {
  Graph graph;
  NodeId conv;
};

// x[1,7,7,C] -> Conv2D(filter) [-> bias].
ConvCase conv_graph(const std::vector<double>& w, int64_t a, int64_t b, int64_t c, int64_t o,
                    const std::string& padding = "VALID", std::vector<int64_t> strides = {1, 1},
                    bool bias = false) {
  ConvCase cc;
  Graph& g = cc.graph;
  const TensorId x = add_input(g, "x", {1, 7, 7, c});
  std::vector<TensorId> ins = {x, add_constant(g, {a, b, c, o}, DType::kF32, w)};
  if (bias) ins.push_back(add_constant(g, {o}, DType::kF32, std::vector<double>(o, 0.25)));
  add_output(g, emit1(g, OpKind::kConv2D, ins, {{"padding", padding}, {"strides", strides}}), "y");
  cc.conv = g.nodes.back().id;
  return cc;
}

// Rank-1 filter per output channel from small dyadic factors, so the
// normalized factors are exact in float32.
std::vector<double> dyadic_rank1_filter(Rng& rng, int64_t a, int64_t b, int64_t c, int64_t o) {
  std::vector<double> w(a * b * c * o);
  for (int64_t oc = 0; oc < o; ++oc) {
    std::vector<double> u(a), v(b), p(c);
    for (double& x : u) x = static_cast<double>(rng.integer(-4, 4)) / 4.0;
    for (double& x : v) x = static_cast<double>(rng.integer(-4, 4)) / 4.0;
    for (double& x : p) x = static_cast<double>(rng.integer(-8, 8)) / 8.0;
    u[0] = 1.0;  // peak entry of exactly 1 keeps the normalization exact
    v[0] = 1.0;
    for (int64_t i = 0; i < a; ++i)
      for (int64_t j = 0; j < b; ++j)
        for (int64_t l = 0; l < c; ++l) w[((i * b + j) * c + l) * o + oc] = u[i] * v[j] * p[l];
  }
  return w;
}

void expect_outputs_within(const Graph& a, const Graph& b, double tol, uint64_t seed) {
  Rng rng(seed);
  const TensorMap in = random_inputs(a, rng);
  const auto ra = run(a, in).outputs.at("y");
  const auto rb = run(b, in).outputs.at("y");
  ASSERT_EQ(ra.shape, rb.shape);
  for (size_t i = 0; i < ra.data.size(); ++i) EXPECT_NEAR(ra.data[i], rb.data[i], tol);
}

TEST(SeparateConv, RankOneThreeChannelsCutsTo9) {
  Rng rng(6);
  const ConvCase cc = conv_graph(dyadic_rank1_filter(rng, 3, 3, 3, 4), 3, 3, 3, 4);
  const SeparateConvResult r = separate_conv2d(cc.graph, cc.conv);
  EXPECT_EQ(count_multiplications(cc.graph).mults_per_element_sum(), 27);
  EXPECT_EQ(count_multiplications(r.graph).mults_per_element_sum(), 9);
  EXPECT_EQ(count_ops(r.graph, OpKind::kDepthwiseConv2D), 2);
  expect_outputs_within(cc.graph, r.graph, 1e-9, 7);
  EXPECT_LT(r.report.mults_after, r.report.mults_before);
}

TEST(SeparateConv, SixteenChannelsCutsTo22) {
  Rng rng(8);
  const ConvCase cc = conv_graph(dyadic_rank1_filter(rng, 3, 3, 16, 2), 3, 3, 16, 2);
  const SeparateConvResult r = separate_conv2d(cc.graph, cc.conv);
  EXPECT_EQ(count_multiplications(cc.graph).mults_per_element_sum(), 144);
  EXPECT_EQ(count_multiplications(r.graph).mults_per_element_sum(), 22);
  expect_outputs_within(cc.graph, r.graph, 1e-9, 9);
}

TEST(SeparateConv, SamePaddingStridesAndBiasPreserved) {
  Rng rng(10);
  const ConvCase cc = conv_graph(dyadic_rank1_filter(rng, 3, 5, 2, 3), 3, 5, 2, 3, "SAME",
                                 {2, 2}, true);
  const SeparateConvResult r = separate_conv2d(cc.graph, cc.conv);
  EXPECT_EQ(count_ops(r.graph, OpKind::kBiasAdd), 1);
  expect_outputs_within(cc.graph, r.graph, 1e-9, 11);
}

TEST(SeparateConv, RankTwoCountsEighteen) {
  Rng rng(12);
  std::vector<double> w(3 * 3 * 3 * 2);
  for (int64_t o = 0; o < 2; ++o) {
    const auto k = cp_kernel(rng, 3, 3, 3, 2);
    for (size_t i = 0; i < k.size(); ++i) w[i * 2 + o] = k[i];
  }
  const ConvCase cc = conv_graph(w, 3, 3, 3, 2);
  const SeparateConvResult r = separate_conv2d(cc.graph, cc.conv, {.rank = 2, .tolerance = 1e-5});
  EXPECT_EQ(count_multiplications(r.graph).mults_per_element_sum(), 18);
  EXPECT_EQ(count_ops(r.graph, OpKind::kAddN), 1);
  // Factors are stored as float32.
  expect_outputs_within(cc.graph, r.graph, 1e-5, 13);
}

TEST(SeparateConv, FullRankFilterIsRankTooLow) {
  Rng rng(14);
  const ConvCase cc = conv_graph(random_values(rng, 3 * 3 * 3 * 2), 3, 3, 3, 2);
  try {
    separate_conv2d(cc.graph, cc.conv, {.rank = 1, .tolerance = 1e-6});
    FAIL() << "expected RankTooLow";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kRankTooLow);
  }
  const SeparateConvResult all = separate_convolutions(cc.graph, {.rank = 1, .tolerance = 1e-6});
  EXPECT_EQ(all.graph, validated(cc.graph));
  EXPECT_EQ(all.report.notes.size(), 1u);
}

TEST(SeparateConv, NonConvRejected) {
  Graph g;
  const TensorId x = add_input(g, "x", {2});
  add_output(g, emit1(g, OpKind::kRelu, {x}), "y");
  EXPECT_THROW(separate_conv2d(g, g.nodes[0].id), Error);
}

TEST(SeparateConv, PointwiseConvSkippedWithoutSavings) {
  Rng rng(15);
  const ConvCase cc = conv_graph(random_values(rng, 4), 1, 1, 2, 2);
  const SeparateConvResult r = separate_convolutions(cc.graph);
  EXPECT_EQ(r.graph, validated(cc.graph));
  ASSERT_EQ(r.report.notes.size(), 1u);
}

}  // namespace
}  // namespace noptc
