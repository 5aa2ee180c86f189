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

#include "noptc/graph.h"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <functional>
#include <queue>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "noptc/half.h"
#include "noptc/shape_inference.h"

namespace noptc {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kCycleDetected: return "CycleDetected";
    case ErrorCode::kDanglingTensor: return "DanglingTensor";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kDTypeMismatch: return "DTypeMismatch";
    case ErrorCode::kInvalidNode: return "InvalidNode";
    case ErrorCode::kMissingInput: return "MissingInput";
    case ErrorCode::kNumericOverflow: return "NumericOverflow";
    case ErrorCode::kUnsupportedOp: return "UnsupportedOp";
    case ErrorCode::kAccumulatorOverflow: return "AccumulatorOverflow";
    case ErrorCode::kIterationLimit: return "IterationLimit";
    case ErrorCode::kNotFusable: return "NotFusable";
    case ErrorCode::kRankTooLow: return "RankTooLow";
    case ErrorCode::kConvergenceFailure: return "ConvergenceFailure";
    case ErrorCode::kCodeOutOfRange: return "CodeOutOfRange";
    case ErrorCode::kNonFiniteWeight: return "NonFiniteWeight";
    case ErrorCode::kUnsupportedOpForInt8: return "UnsupportedOpForInt8";
    case ErrorCode::kMissingCalibration: return "MissingCalibration";
    case ErrorCode::kUnsupportedLayerForTraining: return "UnsupportedLayerForTraining";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kUnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::kTruncatedSection: return "TruncatedSection";
    case ErrorCode::kOffsetOutOfBounds: return "OffsetOutOfBounds";
    case ErrorCode::kUnknownSection: return "UnknownSection";
    case ErrorCode::kMalformedRecord: return "MalformedRecord";
    case ErrorCode::kInvalidIdentifier: return "InvalidIdentifier";
    case ErrorCode::kInvalidPresetName: return "InvalidPresetName";
    case ErrorCode::kSignatureMismatch: return "SignatureMismatch";
    case ErrorCode::kInvalidSpec: return "InvalidSpec";
    case ErrorCode::kUnknownRule: return "UnknownRule";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

namespace {

constexpr std::array<std::string_view, kNumOpKinds> kOpNames = {
    "Add",        "Sub",          "Mul",
    "Div",        "Neg",          "AddN",
    "Exp",        "Sin",          "Concat",
    "Split",      "Transpose",    "Reshape",
    "Reverse",    "Shuffle",      "Squeeze",
    "Pad",        "Tile",         "Slice",
    "Conv2D",     "DepthwiseConv2D", "FusedConvBnBias",
    "MatMul",     "BiasAdd",      "FusedBatchNorm",
    "Relu",       "MaxPool",      "AvgPool",
    "Softmax",    "Identity",     "NoOp",
    "StopGradient", "FakeQuant",  "Greater",
    "LessEqual",  "Not",          "Loop",
    "Quantize",   "Dequantize",
};

}  // namespace

std::string_view dtype_name(DType dtype) {
  switch (dtype) {
    case DType::kF32: return "F32";
    case DType::kF16: return "F16";
    case DType::kI8: return "I8";
    case DType::kI32: return "I32";
    case DType::kBool: return "BOOL";
  }
  return "?";
}

std::optional<DType> dtype_from_name(std::string_view name) {
  for (DType d : {DType::kF32, DType::kF16, DType::kI8, DType::kI32, DType::kBool}) {
    if (dtype_name(d) == name) return d;
  }
  return std::nullopt;
}

size_t dtype_width(DType dtype) {
  switch (dtype) {
    case DType::kF32: return 4;
    case DType::kF16: return 2;
    case DType::kI8: return 1;
    case DType::kI32: return 4;
    case DType::kBool: return 1;
  }
  return 0;
}

int64_t QuantParams::code_min() const {
  return -(int64_t{1} << (bit_width - 1));
}

int64_t QuantParams::code_max() const {
  return (int64_t{1} << (bit_width - 1)) - 1;
}

std::string_view op_name(OpKind op) {
  return kOpNames[static_cast<size_t>(op)];
}

std::optional<OpKind> op_from_name(std::string_view name) {
  for (size_t i = 0; i < kOpNames.size(); ++i) {
    if (kOpNames[i] == name) return static_cast<OpKind>(i);
  }
  return std::nullopt;
}

bool is_elementwise_unary(OpKind op) {
  switch (op) {
    case OpKind::kNeg:
    case OpKind::kExp:
    case OpKind::kSin:
    case OpKind::kRelu:
    case OpKind::kNot:
      return true;
    default:
      return false;
  }
}

bool is_elementwise_binary(OpKind op) {
  switch (op) {
    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMul:
    case OpKind::kDiv:
    case OpKind::kGreater:
    case OpKind::kLessEqual:
      return true;
    default:
      return false;
  }
}

bool is_conv_like(OpKind op) {
  return op == OpKind::kConv2D || op == OpKind::kDepthwiseConv2D ||
         op == OpKind::kFusedConvBnBias;
}

// ---------------------------------------------------------------------------
// Node attributes.

int64_t Node::attr_int(const std::string& key, int64_t fallback) const {
  auto it = attrs.find(key);
  if (it == attrs.end()) return fallback;
  if (auto* v = std::get_if<int64_t>(&it->second)) return *v;
  if (auto* v = std::get_if<double>(&it->second)) return static_cast<int64_t>(*v);
  throw Error(ErrorCode::kInvalidNode,
              "attribute '" + key + "' of node " + std::to_string(id) +
                  " is not an integer");
}

double Node::attr_float(const std::string& key, double fallback) const {
  auto it = attrs.find(key);
  if (it == attrs.end()) return fallback;
  if (auto* v = std::get_if<double>(&it->second)) return *v;
  if (auto* v = std::get_if<int64_t>(&it->second)) return static_cast<double>(*v);
  throw Error(ErrorCode::kInvalidNode,
              "attribute '" + key + "' of node " + std::to_string(id) +
                  " is not a number");
}

std::string Node::attr_str(const std::string& key,
                           const std::string& fallback) const {
  auto it = attrs.find(key);
  if (it == attrs.end()) return fallback;
  if (auto* v = std::get_if<std::string>(&it->second)) return *v;
  throw Error(ErrorCode::kInvalidNode,
              "attribute '" + key + "' of node " + std::to_string(id) +
                  " is not a string");
}

std::vector<int64_t> Node::attr_ints(const std::string& key) const {
  auto it = attrs.find(key);
  if (it == attrs.end()) return {};
  if (auto* v = std::get_if<std::vector<int64_t>>(&it->second)) return *v;
  if (auto* v = std::get_if<int64_t>(&it->second)) return {*v};
  throw Error(ErrorCode::kInvalidNode,
              "attribute '" + key + "' of node " + std::to_string(id) +
                  " is not an integer list");
}

// ---------------------------------------------------------------------------
// Graph lookups.

const TensorSpec* Graph::find_tensor(TensorId id) const {
  for (const auto& t : tensors) {
    if (t.id == id) return &t;
  }
  return nullptr;
}

TensorSpec* Graph::find_tensor(TensorId id) {
  for (auto& t : tensors) {
    if (t.id == id) return &t;
  }
  return nullptr;
}

const Node* Graph::find_node(NodeId id) const {
  for (const auto& n : nodes) {
    if (n.id == id) return &n;
  }
  return nullptr;
}

Node* Graph::find_node(NodeId id) {
  for (auto& n : nodes) {
    if (n.id == id) return &n;
  }
  return nullptr;
}

const ConstData* Graph::find_constant(TensorId id) const {
  for (const auto& c : constants) {
    if (c.tensor_id == id) return &c;
  }
  return nullptr;
}

bool Graph::is_input(TensorId id) const {
  return std::find(inputs.begin(), inputs.end(), id) != inputs.end();
}

bool Graph::is_output(TensorId id) const {
  return std::find(outputs.begin(), outputs.end(), id) != outputs.end();
}

bool Graph::operator==(const Graph& other) const {
  return tensors == other.tensors && constants == other.constants &&
         nodes == other.nodes && inputs == other.inputs &&
         outputs == other.outputs && subgraphs == other.subgraphs &&
         next_tensor_id == other.next_tensor_id &&
         next_node_id == other.next_node_id;
}

int64_t element_count(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::string tensor_display_name(const TensorSpec& spec) {
  return spec.name.empty() ? "t" + std::to_string(spec.id) : spec.name;
}

std::optional<Shape> broadcast_shapes(const Shape& a, const Shape& b) {
  const size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (size_t i = 0; i < rank; ++i) {
    const int64_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const int64_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da == db || db == 1) {
      out[i] = da;
    } else if (da == 1) {
      out[i] = db;
    } else {
      return std::nullopt;
    }
  }
  return out;
}

std::vector<uint8_t> encode_payload(DType dtype, std::span<const double> values) {
  std::vector<uint8_t> bytes(values.size() * dtype_width(dtype));
  uint8_t* out = bytes.data();
  for (double v : values) {
    switch (dtype) {
      case DType::kF32: {
        const uint32_t bits = std::bit_cast<uint32_t>(static_cast<float>(v));
        for (int k = 0; k < 4; ++k) *out++ = static_cast<uint8_t>(bits >> (8 * k));
        break;
      }
      case DType::kF16: {
        const uint16_t bits = float_to_half_bits(static_cast<float>(v));
        *out++ = static_cast<uint8_t>(bits);
        *out++ = static_cast<uint8_t>(bits >> 8);
        break;
      }
      case DType::kI8: {
        if (v < -128.0 || v > 127.0 || v != std::nearbyint(v)) {
          throw Error(ErrorCode::kCodeOutOfRange,
                      "value " + std::to_string(v) + " is not an int8 code");
        }
        *out++ = static_cast<uint8_t>(static_cast<int8_t>(v));
        break;
      }
      case DType::kI32: {
        if (v < -2147483648.0 || v > 2147483647.0 || v != std::nearbyint(v)) {
          throw Error(ErrorCode::kNumericOverflow,
                      "value " + std::to_string(v) + " does not fit int32");
        }
        const uint32_t bits = static_cast<uint32_t>(static_cast<int32_t>(v));
        for (int k = 0; k < 4; ++k) *out++ = static_cast<uint8_t>(bits >> (8 * k));
        break;
      }
      case DType::kBool:
        *out++ = v != 0.0 ? 1 : 0;
        break;
    }
  }
  return bytes;
}

std::vector<double> decode_payload(DType dtype, std::span<const uint8_t> bytes) {
  const size_t width = dtype_width(dtype);
  const size_t n = bytes.size() / width;
  std::vector<double> values(n);
  const uint8_t* in = bytes.data();
  for (size_t i = 0; i < n; ++i, in += width) {
    switch (dtype) {
      case DType::kF32: {
        uint32_t bits = 0;
        for (int k = 0; k < 4; ++k) bits |= uint32_t{in[k]} << (8 * k);
        values[i] = std::bit_cast<float>(bits);
        break;
      }
      case DType::kF16:
        values[i] = half_bits_to_float(static_cast<uint16_t>(in[0] | (in[1] << 8)));
        break;
      case DType::kI8:
        values[i] = static_cast<int8_t>(in[0]);
        break;
      case DType::kI32: {
        uint32_t bits = 0;
        for (int k = 0; k < 4; ++k) bits |= uint32_t{in[k]} << (8 * k);
        values[i] = static_cast<int32_t>(bits);
        break;
      }
      case DType::kBool:
        values[i] = in[0] != 0 ? 1.0 : 0.0;
        break;
    }
  }
  return values;
}

// ---------------------------------------------------------------------------
// Validation.

namespace {

ErrorCode to_error_code(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::kCycleDetected: return ErrorCode::kCycleDetected;
    case ViolationKind::kDanglingTensor: return ErrorCode::kDanglingTensor;
    case ViolationKind::kShapeMismatch: return ErrorCode::kShapeMismatch;
    case ViolationKind::kDTypeMismatch: return ErrorCode::kDTypeMismatch;
    case ViolationKind::kInvalidNode: return ErrorCode::kInvalidNode;
  }
  return ErrorCode::kInvalidNode;
}

ViolationKind to_violation(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShapeMismatch: return ViolationKind::kShapeMismatch;
    case ErrorCode::kDTypeMismatch: return ViolationKind::kDTypeMismatch;
    case ErrorCode::kDanglingTensor: return ViolationKind::kDanglingTensor;
    case ErrorCode::kCycleDetected: return ViolationKind::kCycleDetected;
    default: return ViolationKind::kInvalidNode;
  }
}

// Kahn's algorithm over data and control edges. Returns the order and the
// ids of nodes left over (non-empty only when a cycle exists).
std::pair<std::vector<NodeId>, std::vector<NodeId>> kahn_order(const Graph& g) {
  std::unordered_map<TensorId, NodeId> producer;
  for (const auto& n : g.nodes) {
    for (TensorId t : n.outputs) producer.emplace(t, n.id);
  }
  std::unordered_set<NodeId> known;
  for (const auto& n : g.nodes) known.insert(n.id);

  std::unordered_map<NodeId, std::vector<NodeId>> succ;
  std::unordered_map<NodeId, int> indegree;
  for (const auto& n : g.nodes) indegree[n.id] = 0;
  for (const auto& n : g.nodes) {
    std::set<NodeId> preds;
    for (TensorId t : n.inputs) {
      auto it = producer.find(t);
      if (it != producer.end()) preds.insert(it->second);
    }
    for (NodeId c : n.control_deps) {
      if (known.count(c)) preds.insert(c);
    }
    for (NodeId p : preds) {
      succ[p].push_back(n.id);
      ++indegree[n.id];
    }
  }
  std::priority_queue<NodeId, std::vector<NodeId>, std::greater<>> ready;
  for (const auto& [id, deg] : indegree) {
    if (deg == 0) ready.push(id);
  }
  std::vector<NodeId> order;
  order.reserve(g.nodes.size());
  while (!ready.empty()) {
    const NodeId id = ready.top();
    ready.pop();
    order.push_back(id);
    for (NodeId s : succ[id]) {
      if (--indegree[s] == 0) ready.push(s);
    }
  }
  std::vector<NodeId> remaining;
  for (const auto& [id, deg] : indegree) {
    if (deg > 0) remaining.push_back(id);
  }
  std::sort(remaining.begin(), remaining.end());
  return {order, remaining};
}

void validate_into(const Graph& input, Graph& g, std::vector<Violation>& out,
                   const std::string& scope) {
  auto add = [&](ViolationKind kind, const std::string& msg,
                 std::optional<NodeId> node = std::nullopt,
                 std::optional<TensorId> tensor = std::nullopt) {
    out.push_back({kind, scope + msg, node, tensor});
  };
  g = input;

  std::unordered_map<TensorId, size_t> spec_index;
  for (size_t i = 0; i < g.tensors.size(); ++i) {
    const auto& t = g.tensors[i];
    if (!spec_index.emplace(t.id, i).second) {
      add(ViolationKind::kInvalidNode, "duplicate tensor id " + std::to_string(t.id),
          std::nullopt, t.id);
    }
    if (t.id >= g.next_tensor_id) {
      add(ViolationKind::kInvalidNode,
          "tensor id " + std::to_string(t.id) + " not below next_tensor_id",
          std::nullopt, t.id);
    }
    if (t.shape_known) {
      if (t.shape.size() > kMaxRank) {
        add(ViolationKind::kShapeMismatch,
            "tensor " + std::to_string(t.id) + " has rank > 4", std::nullopt, t.id);
      }
      for (int64_t d : t.shape) {
        if (d < 1) {
          add(ViolationKind::kShapeMismatch,
              "tensor " + std::to_string(t.id) + " has extent < 1", std::nullopt,
              t.id);
          break;
        }
      }
    }
    if (t.dtype == DType::kI8 && !t.quant) {
      add(ViolationKind::kDTypeMismatch,
          "I8 tensor " + std::to_string(t.id) + " lacks quantization parameters",
          std::nullopt, t.id);
    }
    if ((is_float(t.dtype) || t.dtype == DType::kBool) && t.quant) {
      add(ViolationKind::kDTypeMismatch,
          std::string(dtype_name(t.dtype)) + " tensor " + std::to_string(t.id) +
              " carries quantization parameters",
          std::nullopt, t.id);
    }
    if (t.quant) {
      const auto& q = *t.quant;
      const bool bad_width = q.bit_width < 2 || q.bit_width > 32;
      size_t expected = 1;
      if (q.per_channel()) {
        if (!t.shape_known || q.axis >= static_cast<int>(t.shape.size())) {
          expected = 0;
        } else {
          expected = static_cast<size_t>(t.shape[q.axis]);
        }
      }
      bool bad = bad_width || expected == 0 || q.scales.size() != expected ||
                 q.zero_points.size() != expected;
      if (!bad) {
        for (size_t c = 0; c < expected; ++c) {
          if (!(q.scales[c] > 0.0f) || !std::isfinite(q.scales[c])) bad = true;
          if (q.zero_points[c] < q.code_min() || q.zero_points[c] > q.code_max()) bad = true;
          if (q.scheme == QuantScheme::kSymmetric && q.zero_points[c] != 0) bad = true;
        }
      }
      if (bad) {
        add(ViolationKind::kDTypeMismatch,
            "tensor " + std::to_string(t.id) + " has inconsistent quantization parameters",
            std::nullopt, t.id);
      }
    }
  }

  std::unordered_map<TensorId, NodeId> producer;
  std::unordered_set<NodeId> node_ids;
  for (const auto& n : g.nodes) {
    if (!node_ids.insert(n.id).second) {
      add(ViolationKind::kInvalidNode, "duplicate node id " + std::to_string(n.id), n.id);
    }
    if (n.id >= g.next_node_id) {
      add(ViolationKind::kInvalidNode,
          "node id " + std::to_string(n.id) + " not below next_node_id", n.id);
    }
    for (TensorId t : n.outputs) {
      if (!spec_index.count(t)) {
        add(ViolationKind::kDanglingTensor,
            "node " + std::to_string(n.id) + " produces unknown tensor " + std::to_string(t),
            n.id, t);
        continue;
      }
      if (!producer.emplace(t, n.id).second) {
        add(ViolationKind::kInvalidNode,
            "tensor " + std::to_string(t) + " has more than one producer", n.id, t);
      }
    }
  }

  std::unordered_set<TensorId> constant_ids;
  for (const auto& c : g.constants) {
    if (!constant_ids.insert(c.tensor_id).second) {
      add(ViolationKind::kInvalidNode,
          "duplicate constant for tensor " + std::to_string(c.tensor_id), std::nullopt,
          c.tensor_id);
    }
    auto it = spec_index.find(c.tensor_id);
    if (it == spec_index.end()) {
      add(ViolationKind::kDanglingTensor,
          "constant references unknown tensor " + std::to_string(c.tensor_id),
          std::nullopt, c.tensor_id);
      continue;
    }
    const auto& spec = g.tensors[it->second];
    if (producer.count(c.tensor_id)) {
      add(ViolationKind::kInvalidNode,
          "constant tensor " + std::to_string(c.tensor_id) + " is also produced by a node",
          producer[c.tensor_id], c.tensor_id);
    }
    if (!spec.shape_known ||
        c.payload.size() != static_cast<size_t>(element_count(spec.shape)) *
                                dtype_width(spec.dtype)) {
      add(ViolationKind::kShapeMismatch,
          "payload of constant " + std::to_string(c.tensor_id) +
              " does not match its shape and dtype",
          std::nullopt, c.tensor_id);
    }
  }

  std::unordered_set<TensorId> input_ids;
  for (TensorId t : g.inputs) {
    input_ids.insert(t);
    if (!spec_index.count(t)) {
      add(ViolationKind::kDanglingTensor, "unknown graph input " + std::to_string(t),
          std::nullopt, t);
    } else if (producer.count(t) || constant_ids.count(t)) {
      add(ViolationKind::kInvalidNode,
          "graph input " + std::to_string(t) + " is also produced or constant",
          std::nullopt, t);
    } else if (!g.tensors[spec_index[t]].shape_known) {
      add(ViolationKind::kShapeMismatch,
          "graph input " + std::to_string(t) + " has no shape", std::nullopt, t);
    }
  }
  auto defined = [&](TensorId t) {
    return producer.count(t) || constant_ids.count(t) || input_ids.count(t);
  };
  for (TensorId t : g.outputs) {
    if (!spec_index.count(t) || !defined(t)) {
      add(ViolationKind::kDanglingTensor,
          "graph output " + std::to_string(t) + " is never produced", std::nullopt, t);
    }
  }

  bool dangling = false;
  for (const auto& n : g.nodes) {
    for (TensorId t : n.inputs) {
      if (!spec_index.count(t) || !defined(t)) {
        add(ViolationKind::kDanglingTensor,
            "node " + std::to_string(n.id) + " consumes undefined tensor " +
                std::to_string(t),
            n.id, t);
        dangling = true;
      }
    }
    for (NodeId c : n.control_deps) {
      if (!node_ids.count(c) || c == n.id) {
        add(ViolationKind::kDanglingTensor,
            "node " + std::to_string(n.id) + " has invalid control dependency " +
                std::to_string(c),
            n.id);
        dangling = true;
      }
    }
    if (!std::is_sorted(n.control_deps.begin(), n.control_deps.end()) ||
        std::adjacent_find(n.control_deps.begin(), n.control_deps.end()) !=
            n.control_deps.end()) {
      add(ViolationKind::kInvalidNode,
          "node " + std::to_string(n.id) + " control deps are not a sorted set", n.id);
    }
  }

  auto [order, cyclic] = kahn_order(g);
  if (!cyclic.empty()) {
    std::string ids;
    for (NodeId id : cyclic) ids += (ids.empty() ? "" : ",") + std::to_string(id);
    add(ViolationKind::kCycleDetected, "cycle through nodes {" + ids + "}", cyclic.front());
    return;
  }
  if (dangling || !out.empty()) return;

  // Loop bodies are self-contained graphs.
  for (size_t i = 0; i < g.subgraphs.size(); ++i) {
    Graph body;
    validate_into(input.subgraphs[i], body, out,
                  scope + "subgraph " + std::to_string(i) + ": ");
    g.subgraphs[i] = std::move(body);
  }
  if (!out.empty()) return;

  // Shape and dtype inference in topological order.
  std::unordered_map<NodeId, size_t> node_index;
  for (size_t i = 0; i < g.nodes.size(); ++i) node_index[g.nodes[i].id] = i;
  for (NodeId id : order) {
    const Node& n = g.nodes[node_index[id]];
    std::vector<const TensorSpec*> in_specs;
    bool unknown = false;
    for (TensorId t : n.inputs) {
      const TensorSpec* s = &g.tensors[spec_index[t]];
      if (!s->shape_known) unknown = true;
      in_specs.push_back(s);
    }
    if (unknown) continue;  // upstream failure already reported
    std::vector<OutputType> types;
    try {
      types = infer_output_types(n, in_specs, g);
    } catch (const Error& e) {
      add(to_violation(e.code()),
          "node " + std::to_string(n.id) + " (" + std::string(op_name(n.op)) + "): " +
              e.what(),
          n.id);
      continue;
    }
    if (types.size() != n.outputs.size()) {
      add(ViolationKind::kInvalidNode,
          "node " + std::to_string(n.id) + " (" + std::string(op_name(n.op)) + ") has " +
              std::to_string(n.outputs.size()) + " outputs, expected " +
              std::to_string(types.size()),
          n.id);
      continue;
    }
    for (size_t k = 0; k < types.size(); ++k) {
      TensorSpec& s = g.tensors[spec_index[n.outputs[k]]];
      if (!s.shape_known) {
        s.shape = types[k].shape;
        s.shape_known = true;
      } else if (s.shape != types[k].shape) {
        add(ViolationKind::kShapeMismatch,
            "node " + std::to_string(n.id) + " output " + std::to_string(s.id) +
                " declared " + shape_to_string(s.shape) + ", inferred " +
                shape_to_string(types[k].shape),
            n.id, s.id);
      }
      const bool float_result_of_int_kernel =
          types[k].dtype == DType::kI8 && s.dtype == DType::kF32 &&
          (is_conv_like(n.op) || n.op == OpKind::kMatMul);
      if (s.dtype != types[k].dtype && !float_result_of_int_kernel) {
        add(ViolationKind::kDTypeMismatch,
            "node " + std::to_string(n.id) + " output " + std::to_string(s.id) +
                " declared " + std::string(dtype_name(s.dtype)) + ", inferred " +
                std::string(dtype_name(types[k].dtype)),
            n.id, s.id);
      }
    }
  }
  for (const auto& t : g.tensors) {
    if (!t.shape_known && out.empty()) {
      add(ViolationKind::kShapeMismatch,
          "shape of tensor " + std::to_string(t.id) + " could not be inferred",
          std::nullopt, t.id);
    }
  }
}

}  // namespace

bool ValidationResult::has(ViolationKind kind) const {
  return std::any_of(violations.begin(), violations.end(),
                     [&](const Violation& v) { return v.kind == kind; });
}

std::string ValidationResult::summary() const {
  std::string s;
  for (const auto& v : violations) {
    if (!s.empty()) s += "; ";
    s += v.message;
  }
  return s;
}

ValidationResult validate(const Graph& graph) {
  ValidationResult result;
  validate_into(graph, result.graph, result.violations, "");
  return result;
}

Graph validated(const Graph& graph) {
  ValidationResult r = validate(graph);
  if (!r.ok()) {
    const Violation& v = r.violations.front();
    throw Error(to_error_code(v.kind), r.summary());
  }
  return std::move(r.graph);
}

std::vector<NodeId> topo_sort(const Graph& graph) {
  auto [order, cyclic] = kahn_order(graph);
  if (!cyclic.empty()) {
    throw Error(ErrorCode::kCycleDetected,
                "cycle through node " + std::to_string(cyclic.front()));
  }
  return order;
}

Graph garbage_collect(const Graph& graph) {
  std::unordered_set<TensorId> used(graph.inputs.begin(), graph.inputs.end());
  used.insert(graph.outputs.begin(), graph.outputs.end());
  for (const auto& n : graph.nodes) {
    used.insert(n.inputs.begin(), n.inputs.end());
    used.insert(n.outputs.begin(), n.outputs.end());
  }
  Graph out = graph;
  std::erase_if(out.tensors, [&](const TensorSpec& t) { return !used.count(t.id); });
  std::erase_if(out.constants,
                [&](const ConstData& c) { return !used.count(c.tensor_id); });
  return out;
}

}  // namespace noptc
