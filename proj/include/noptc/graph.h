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

// Computation-graph data model shared by every pass.
//
// A Graph is a plain value: tensors, constant payloads, operator nodes and
// loop-body subgraphs. Tensors are row-major; 4-D activations are NHWC and
// convolution filters are HWIO ([kh, kw, in, out]). Passes take a graph and
// return a new one; nothing here holds shared mutable state.

#ifndef NOPTC_GRAPH_H_
#define NOPTC_GRAPH_H_

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "noptc/status.h"

namespace noptc {

using TensorId = int32_t;
using NodeId = int32_t;
using Shape = std::vector<int64_t>;

inline constexpr int kMaxRank = 4;

enum class DType : uint8_t { kF32 = 0, kF16 = 1, kI8 = 2, kI32 = 3, kBool = 4 };

std::string_view dtype_name(DType dtype);
std::optional<DType> dtype_from_name(std::string_view name);
size_t dtype_width(DType dtype);
inline bool is_float(DType dtype) {
  return dtype == DType::kF32 || dtype == DType::kF16;
}

enum class QuantScheme : uint8_t { kSymmetric = 0, kAsymmetric = 1 };

// Quantization descriptor of an integer tensor. `axis` < 0 means one scale
// for the whole tensor; otherwise there is one scale per index along `axis`.
// Real value = (code - zero_point) * scale. Symmetric parameters always have
// zero points of 0; the fixed-point Q-bit format uses scale 2^-(Q-1).
struct QuantParams {
  int bit_width = 8;
  QuantScheme scheme = QuantScheme::kAsymmetric;
  int axis = -1;
  std::vector<float> scales;
  std::vector<int32_t> zero_points;

  bool per_channel() const { return axis >= 0; }
  int64_t code_min() const;
  int64_t code_max() const;
  float scale_for(size_t channel) const {
    return scales[per_channel() ? channel : 0];
  }
  int32_t zero_point_for(size_t channel) const {
    return zero_points[per_channel() ? channel : 0];
  }

  bool operator==(const QuantParams&) const = default;
};

struct TensorSpec {
  TensorId id = 0;
  Shape shape;
  DType dtype = DType::kF32;
  std::optional<QuantParams> quant;
  // Graph inputs and outputs are addressed by name; interior tensors
  // usually have none.
  std::string name;
  // False only for intermediate tensors whose shape is left to inference.
  bool shape_known = true;

  bool operator==(const TensorSpec&) const = default;
};

struct ConstData {
  TensorId tensor_id = 0;
  // Little-endian element encoding of the tensor's dtype, row-major.
  std::vector<uint8_t> payload;

  bool operator==(const ConstData&) const = default;
};

enum class OpKind : uint16_t {
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kAddN,
  kExp,
  kSin,
  kConcat,
  kSplit,
  kTranspose,
  kReshape,
  kReverse,
  kShuffle,
  kSqueeze,
  kPad,
  kTile,
  kSlice,
  kConv2D,
  kDepthwiseConv2D,
  kFusedConvBnBias,
  kMatMul,
  kBiasAdd,
  kFusedBatchNorm,
  kRelu,
  kMaxPool,
  kAvgPool,
  kSoftmax,
  kIdentity,
  kNoOp,
  kStopGradient,
  kFakeQuant,
  kGreater,
  kLessEqual,
  kNot,
  kLoop,
  kQuantize,
  kDequantize,
};

inline constexpr int kNumOpKinds = static_cast<int>(OpKind::kDequantize) + 1;

std::string_view op_name(OpKind op);
std::optional<OpKind> op_from_name(std::string_view name);

bool is_elementwise_unary(OpKind op);
bool is_elementwise_binary(OpKind op);
bool is_conv_like(OpKind op);

using AttrValue = std::variant<int64_t, double, std::string,
                               std::vector<int64_t>, std::vector<double>>;
using Attrs = std::map<std::string, AttrValue>;

struct Node {
  NodeId id = 0;
  OpKind op = OpKind::kIdentity;
  std::vector<TensorId> inputs;
  std::vector<TensorId> outputs;
  Attrs attrs;
  // Sorted, duplicate free.
  std::vector<NodeId> control_deps;

  bool has_attr(const std::string& key) const { return attrs.count(key) > 0; }
  int64_t attr_int(const std::string& key, int64_t fallback = 0) const;
  double attr_float(const std::string& key, double fallback = 0.0) const;
  std::string attr_str(const std::string& key,
                       const std::string& fallback = "") const;
  std::vector<int64_t> attr_ints(const std::string& key) const;
  bool preserved() const { return attr_int("preserve", 0) != 0; }

  bool operator==(const Node&) const = default;
};

struct Graph {
  std::vector<TensorSpec> tensors;
  std::vector<ConstData> constants;
  std::vector<Node> nodes;
  std::vector<TensorId> inputs;
  std::vector<TensorId> outputs;
  // Loop bodies, referenced from Loop nodes by index ("body" attribute).
  std::vector<Graph> subgraphs;
  // Ids are handed out monotonically and never reused.
  TensorId next_tensor_id = 0;
  NodeId next_node_id = 0;

  const TensorSpec* find_tensor(TensorId id) const;
  TensorSpec* find_tensor(TensorId id);
  const Node* find_node(NodeId id) const;
  Node* find_node(NodeId id);
  const ConstData* find_constant(TensorId id) const;
  bool is_input(TensorId id) const;
  bool is_output(TensorId id) const;

  bool operator==(const Graph& other) const;
};

int64_t element_count(const Shape& shape);
std::string shape_to_string(const Shape& shape);
std::string tensor_display_name(const TensorSpec& spec);

// Right-aligned broadcast: extents must match or one of them is 1.
std::optional<Shape> broadcast_shapes(const Shape& a, const Shape& b);

std::vector<uint8_t> encode_payload(DType dtype, std::span<const double> values);
std::vector<double> decode_payload(DType dtype, std::span<const uint8_t> bytes);

// ---------------------------------------------------------------------------
// Validation and traversal.

enum class ViolationKind {
  kCycleDetected,
  kDanglingTensor,
  kShapeMismatch,
  kDTypeMismatch,
  kInvalidNode,
};

struct Violation {
  ViolationKind kind;
  std::string message;
  std::optional<NodeId> node;
  std::optional<TensorId> tensor;
};

struct ValidationResult {
  std::vector<Violation> violations;
  // The input graph with every unknown intermediate shape inferred. Only
  // meaningful when ok().
  Graph graph;

  bool ok() const { return violations.empty(); }
  bool has(ViolationKind kind) const;
  std::string summary() const;
};

ValidationResult validate(const Graph& graph);

// Throws Error with the first violation's code when the graph is invalid and
// returns the shape-completed graph otherwise.
Graph validated(const Graph& graph);

// Producers (data and control) before consumers, ties broken by ascending
// node id. Throws kCycleDetected.
std::vector<NodeId> topo_sort(const Graph& graph);

// Drops tensor specs and constants that no node, graph input or graph output
// references. Nodes are untouched.
Graph garbage_collect(const Graph& graph);

}  // namespace noptc

#endif  // NOPTC_GRAPH_H_
