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

#ifndef NOPTC_OPS_OPT_H_
#define NOPTC_OPS_OPT_H_

#include <cstdint>
#include <span>
#include <vector>

#include "noptc/graph.h"
#include "noptc/report.h"

namespace noptc {

// Sum over terms r of outer(vertical[r], horizontal[r]) (times channel[r]
// along the third axis when present). Vertical factors are scaled so their
// largest-magnitude entry is +1; the magnitude lives in the last factor.
struct SeparationResult {
  int64_t rows = 0;      // A
  int64_t cols = 0;      // B
  int64_t channels = 1;  // C
  int64_t rank = 0;
  std::vector<std::vector<double>> vertical;    // rank x A
  std::vector<std::vector<double>> horizontal;  // rank x B
  std::vector<std::vector<double>> channel;     // rank x C, empty for 2-D input
  std::vector<double> singular_values;          // 2-D input only, all of them
  double frobenius_error = 0.0;
  double max_abs_error = 0.0;

  // Row-major A x B (x C) reconstruction.
  std::vector<double> reconstruct() const;
};

// Best rank-n approximation of a row-major A x B filter. Throws
// InvalidArgument unless 1 <= n <= min(A, B); ConvergenceFailure from the SVD.
SeparationResult separate_filter(std::span<const double> filter, int64_t rows, int64_t cols,
                                 int64_t rank);

// Rank-n sum of u (x) v (x) p for a row-major A x B x C kernel. Starts from a
// channel-unfolding SVD and refines with alternating least squares; exact for
// kernels built from n such terms in the common case.
SeparationResult separate_kernel(std::span<const double> kernel, int64_t rows, int64_t cols,
                                 int64_t channels, int64_t rank);

struct SeparateOptions {
  int64_t rank = 1;
  // Largest tolerated elementwise filter error, relative to max |filter|.
  double tolerance = 1e-3;
};

struct SeparateConvResult {
  Graph graph;
  PassReport report;
};

// Replaces one Conv2D with, per rank term, a 1x1 channel mix, an Ax1 and a
// 1xB depthwise convolution; terms are summed with AddN and the bias, if any,
// is re-applied with BiasAdd. Throws RankTooLow when the filter error exceeds
// the tolerance and InvalidArgument when the node is not a Conv2D with a float
// constant filter.
SeparateConvResult separate_conv2d(const Graph& graph, NodeId conv,
                                   const SeparateOptions& options = {});

// separate_conv2d on every Conv2D where it fits the tolerance and lowers the
// multiplication count; the rest are noted in the report and left alone.
SeparateConvResult separate_convolutions(const Graph& graph, const SeparateOptions& options = {});

struct Savings {
  int64_t before = 0;  // C*A*B
  int64_t after = 0;   // n*(C+A+B)
  double ratio = 0.0;  // before / after
};

// Multiplications per output element. Throws InvalidArgument unless all >= 1.
Savings estimate_savings(int64_t channels, int64_t rows, int64_t cols, int64_t rank);

}  // namespace noptc

#endif  // NOPTC_OPS_OPT_H_
