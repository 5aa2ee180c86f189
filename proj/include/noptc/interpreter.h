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

// Reference executor. Slow and exact-by-construction; it is the yardstick
// every rewrite is measured against.
//
// Numerics: F32 tensors are carried in double precision without rounding;
// F16 results are rounded to binary16 after every node; I8 tensors hold
// integer codes and are dequantized on use by float operators. Conv2D,
// DepthwiseConv2D, FusedConvBnBias and MatMul with int8 data and weights
// accumulate in checked 32-bit integer arithmetic and rescale once.

#ifndef NOPTC_INTERPRETER_H_
#define NOPTC_INTERPRETER_H_

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "noptc/graph.h"

namespace noptc {

struct TensorValue {
  Shape shape;
  DType dtype = DType::kF32;
  // Element values; integer codes for I8/I32, 0/1 for BOOL.
  std::vector<double> data;
  std::optional<QuantParams> quant;

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  // Real-valued view (codes dequantized).
  std::vector<double> real() const;

  static TensorValue from(Shape shape, std::vector<double> data,
                          DType dtype = DType::kF32);
};

using TensorMap = std::map<std::string, TensorValue>;

struct NodeStats {
  NodeId node = 0;
  OpKind op = OpKind::kIdentity;
  int64_t output_elements = 0;
  // Multiplications needed per output element (C*A*B for a convolution).
  int64_t mults_per_element = 0;
  int64_t multiplications = 0;
  int64_t additions = 0;
  int64_t macs = 0;
};

struct ExecStats {
  std::vector<NodeStats> per_node;
  int64_t multiplications = 0;
  int64_t additions = 0;
  int64_t macs = 0;

  void add(const NodeStats& s, int64_t repeat = 1);
  // Sum of mults_per_element over nodes (used for decomposition chains).
  int64_t mults_per_element_sum() const;
};

struct RunResult {
  TensorMap outputs;
  ExecStats stats;
};

// Evaluates the graph. Inputs and outputs are keyed by tensor name ("t<id>"
// for unnamed tensors). Throws kMissingInput, kShapeMismatch,
// kNumericOverflow, kAccumulatorOverflow, kUnsupportedOp.
RunResult run(const Graph& graph, const TensorMap& inputs);

// Like run() but insists that every Conv2D/DepthwiseConv2D/FusedConvBnBias
// and MatMul reads int8 data and weights, so the integer path is taken.
RunResult run_quantized(const Graph& graph, const TensorMap& inputs);

// Values of every top-level tensor (inputs, constants, intermediates).
std::unordered_map<TensorId, TensorValue> trace(const Graph& graph,
                                                const TensorMap& inputs);

// Static operation counts from tensor shapes alone.
ExecStats count_multiplications(const Graph& graph);
NodeStats node_stats(const Node& node, const Graph& graph);

// Signed Q-bit fixed-point rounding with scale 2^-(Q-1), clipped to the code
// range: the forward function of a FakeQuant node on [-1, 1).
double fixed_point_round(double value, int bits);

// |a-b| <= rel * max(|a|,|b|) or |a-b| <= abs_floor, elementwise; shapes and
// dtypes must match.
bool values_close(const TensorValue& a, const TensorValue& b, double rel,
                  double abs_floor = 1e-12);
bool outputs_close(const TensorMap& a, const TensorMap& b, double rel,
                   double abs_floor = 1e-12);

}  // namespace noptc

#endif  // NOPTC_INTERPRETER_H_
