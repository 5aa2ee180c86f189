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

#include "noptc/quantizer.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "noptc/graph_utils.h"
#include "noptc/quant_math.h"
#include "noptc/shape_inference.h"

namespace noptc {
namespace {

constexpr double kScaleFloor = 1e-8;

void check_finite(std::span<const double> w) {
  for (double v : w) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::kNonFiniteWeight, "weight value " + std::to_string(v));
    }
  }
}

// (scale, zero point) for one asymmetric int8 range.
std::pair<float, int32_t> range_params(double lo, double hi) {
  if (!(hi > lo)) {
    // Constant slice: code 0 maps back to the value itself.
    if (lo == 0.0) return {1.0f, 0};
    return {static_cast<float>(std::abs(lo)), lo > 0 ? -1 : 1};
  }
  // Keep zero representable so the zero point stays inside the code range.
  lo = std::min(lo, 0.0);
  hi = std::max(hi, 0.0);
  const double scale = std::max((hi - lo) / 255.0, kScaleFloor);
  const double zp = round_half_away(-lo * 255.0 / (hi - lo)) - 128.0;
  return {static_cast<float>(scale), static_cast<int32_t>(std::clamp(zp, -128.0, 127.0))};
}

}  // namespace

SymmetricQuantized quantize_symmetric(std::span<const double> w, int bits) {
  if (bits < 2 || bits > 8) {
    throw Error(ErrorCode::kInvalidArgument,
                "symmetric bit width must be in [2,8], got " + std::to_string(bits));
  }
  const double unit = std::ldexp(1.0, bits - 1);
  const int64_t lo = -static_cast<int64_t>(unit), hi = static_cast<int64_t>(unit) - 1;
  SymmetricQuantized out;
  out.codes.reserve(w.size());
  out.values.reserve(w.size());
  for (double v : w) {
    const int64_t code = clamp_code(round_half_away(v * unit), lo, hi);
    out.codes.push_back(code);
    out.values.push_back(static_cast<double>(code) / unit);
  }
  return out;
}

QuantParams symmetric_fixed_point_params(int bits) {
  QuantParams q;
  q.bit_width = bits;
  q.scheme = QuantScheme::kSymmetric;
  q.scales = {static_cast<float>(std::ldexp(1.0, -(bits - 1)))};
  q.zero_points = {0};
  return q;
}

QuantParams asymmetric_params(double lo, double hi) {
  QuantParams q;
  const auto [scale, zp] = range_params(lo, hi);
  q.scales = {scale};
  q.zero_points = {zp};
  return q;
}

std::vector<int64_t> quantize_with(std::span<const double> w, const Shape& shape,
                                   const QuantParams& params) {
  const ChannelIndexer channel(shape, params);
  std::vector<int64_t> codes(w.size());
  for (size_t i = 0; i < w.size(); ++i) codes[i] = quantize_to_code(w[i], params, channel(i));
  return codes;
}

QuantizedTensor quantize_per_channel_asymmetric(std::span<const double> w, const Shape& shape,
                                                int axis) {
  check_finite(w);
  if (axis < 0 || axis >= static_cast<int>(shape.size()) || shape[axis] < 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "quantization axis " + std::to_string(axis) + " invalid for shape " +
                    shape_to_string(shape));
  }
  if (static_cast<int64_t>(w.size()) != element_count(shape)) {
    throw Error(ErrorCode::kShapeMismatch, "weight count does not match shape");
  }
  QuantizedTensor out;
  out.params.axis = axis;
  const ChannelIndexer channel(shape, out.params);
  const int64_t extent = shape[axis];
  std::vector<double> lo(extent, std::numeric_limits<double>::infinity());
  std::vector<double> hi(extent, -std::numeric_limits<double>::infinity());
  for (size_t i = 0; i < w.size(); ++i) {
    const size_t c = channel(i);
    lo[c] = std::min(lo[c], w[i]);
    hi[c] = std::max(hi[c], w[i]);
  }
  for (int64_t c = 0; c < extent; ++c) {
    const auto [scale, zp] = range_params(lo[c], hi[c]);
    out.params.scales.push_back(scale);
    out.params.zero_points.push_back(zp);
  }
  out.codes = quantize_with(w, shape, out.params);
  return out;
}

QuantizedTensor quantize_per_layer_asymmetric(std::span<const double> w) {
  check_finite(w);
  QuantizedTensor out;
  if (w.empty()) {
    out.params = asymmetric_params(0.0, 0.0);
    return out;
  }
  const auto [lo, hi] = std::minmax_element(w.begin(), w.end());
  out.params = asymmetric_params(*lo, *hi);
  out.codes = quantize_with(w, {}, out.params);
  return out;
}

QuantizedTensor quantize_per_layer_symmetric(std::span<const double> w) {
  check_finite(w);
  double peak = 0.0;
  for (double v : w) peak = std::max(peak, std::abs(v));
  QuantizedTensor out;
  out.params.scheme = QuantScheme::kSymmetric;
  out.params.scales = {static_cast<float>(peak > 0.0 ? std::max(peak / 127.0, kScaleFloor) : 1.0)};
  out.params.zero_points = {0};
  out.codes = quantize_with(w, {}, out.params);
  return out;
}

std::vector<double> dequantize(std::span<const int64_t> codes, const QuantParams& params,
                               const Shape& shape) {
  const ChannelIndexer channel(shape, params);
  std::vector<double> out(codes.size());
  for (size_t i = 0; i < codes.size(); ++i) {
    if (codes[i] < params.code_min() || codes[i] > params.code_max()) {
      throw Error(ErrorCode::kCodeOutOfRange,
                  "code " + std::to_string(codes[i]) + " outside [" +
                      std::to_string(params.code_min()) + ", " +
                      std::to_string(params.code_max()) + "]");
    }
    out[i] = dequantize_code(static_cast<double>(codes[i]), params, channel(i));
  }
  return out;
}

std::string_view quant_mode_name(GraphQuantMode mode) {
  switch (mode) {
    case GraphQuantMode::kWeightsOnly: return "weights_only";
    case GraphQuantMode::kInt8FloatFallback: return "int8_float_fallback";
    case GraphQuantMode::kInt8Only: return "int8_only";
    case GraphQuantMode::kFloat16: return "float16";
  }
  return "unknown";
}

namespace {

std::vector<double> as_doubles(const std::vector<int64_t>& codes) {
  return {codes.begin(), codes.end()};
}

bool is_weight_slot(const Node& n, size_t slot) {
  return slot == 1 && (is_conv_like(n.op) || n.op == OpKind::kMatMul);
}

// ---- WEIGHTS_ONLY ----

int quantize_weights(Graph& g, const QuantizeOptions& options) {
  std::unordered_set<TensorId> weights;
  for (const Node& n : g.nodes) {
    for (size_t i = 0; i < n.inputs.size(); ++i) {
      if (is_weight_slot(n, i)) weights.insert(n.inputs[i]);
    }
  }
  int count = 0;
  for (ConstData& c : g.constants) {
    if (!weights.count(c.tensor_id)) continue;
    TensorSpec& spec = *g.find_tensor(c.tensor_id);
    if (spec.dtype != DType::kF32) continue;
    const auto values = decode_payload(spec.dtype, c.payload);
    QuantizedTensor q = options.symmetric_weights ? quantize_per_layer_symmetric(values)
                                                  : quantize_per_layer_asymmetric(values);
    spec.dtype = DType::kI8;
    spec.quant = q.params;
    c.payload = encode_payload(DType::kI8, as_doubles(q.codes));
    ++count;
  }
  for (Graph& sub : g.subgraphs) count += quantize_weights(sub, options);
  return count;
}

// ---- FLOAT16 ----

int convert_to_half(Graph& g) {
  int count = 0;
  for (ConstData& c : g.constants) {
    const TensorSpec& spec = *g.find_tensor(c.tensor_id);
    if (spec.dtype != DType::kF32) continue;
    c.payload = encode_payload(DType::kF16, decode_payload(DType::kF32, c.payload));
  }
  for (TensorSpec& t : g.tensors) {
    if (t.dtype == DType::kF32) {
      t.dtype = DType::kF16;
      ++count;
    }
  }
  for (Graph& sub : g.subgraphs) count += convert_to_half(sub);
  return count;
}

// ---- INT8 ----

bool int8_capable(OpKind op) {
  switch (op) {
    case OpKind::kConv2D:
    case OpKind::kDepthwiseConv2D:
    case OpKind::kFusedConvBnBias:
    case OpKind::kMatMul:
    case OpKind::kBiasAdd:
    case OpKind::kRelu:
    case OpKind::kMaxPool:
    case OpKind::kAvgPool:
    case OpKind::kReshape:
    case OpKind::kSqueeze:
    case OpKind::kIdentity:
    case OpKind::kStopGradient:
    case OpKind::kConcat:
    case OpKind::kTranspose:
    case OpKind::kPad:
    case OpKind::kSlice:
    case OpKind::kTile:
    case OpKind::kReverse:
    case OpKind::kShuffle:
    case OpKind::kSplit:
    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMul:
    case OpKind::kAddN:
    case OpKind::kNeg:
      return true;
    default:
      return false;
  }
}

// Ops whose int8 output can reuse the input's parameters unchanged.
bool keeps_input_range(OpKind op) {
  switch (op) {
    case OpKind::kReshape:
    case OpKind::kSqueeze:
    case OpKind::kIdentity:
    case OpKind::kStopGradient:
    case OpKind::kTranspose:
    case OpKind::kSlice:
    case OpKind::kTile:
    case OpKind::kReverse:
    case OpKind::kShuffle:
    case OpKind::kSplit:
    case OpKind::kMaxPool:
      return true;
    default:
      return false;
  }
}

bool touches_float(const Graph& g, const Node& n) {
  for (TensorId t : n.inputs) {
    if (is_float(g.find_tensor(t)->dtype)) return true;
  }
  for (TensorId t : n.outputs) {
    if (is_float(g.find_tensor(t)->dtype)) return true;
  }
  return false;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
};

class Int8Lowering {
 public:
  Int8Lowering(Graph& g, GraphQuantMode mode, const QuantizeOptions& options,
               PassReport& report)
      : g_(g), mode_(mode), options_(options), report_(report) {}

  void run(const std::vector<TensorMap>& calibration) {
    calibrate(calibration);
    const std::vector<NodeId> order = topo_sort(g_);
    std::unordered_set<NodeId> int8_nodes;
    for (NodeId id : order) {
      const Node& n = *g_.find_node(id);
      if (eligible(n)) {
        int8_nodes.insert(id);
      } else if (mode_ == GraphQuantMode::kInt8Only && touches_float(g_, n) &&
                 !(options_.keep_terminal_softmax_float && terminal_softmax(n))) {
        throw Error(ErrorCode::kUnsupportedOpForInt8,
                    std::string(op_name(n.op)) + " node " + std::to_string(n.id) +
                        " has no int8 kernel");
      }
    }
    for (NodeId id : order) {
      if (int8_nodes.count(id)) {
        lower_node(id);
      } else {
        feed_float_node(id);
      }
    }
    for (TensorId& out : g_.outputs) {
      TensorSpec& spec = *g_.find_tensor(out);
      if (spec.dtype != DType::kI8 || !int8_outputs_.count(out)) continue;
      const TensorId d = dequantized(out);
      TensorSpec& dspec = *g_.find_tensor(d);
      TensorSpec& ospec = *g_.find_tensor(out);
      dspec.name = ospec.name;
      ospec.name.clear();
      out = d;
    }
    report_.notes.push_back("int8 nodes: " + std::to_string(int8_nodes.size()));
    report_.notes.push_back("float nodes: " + std::to_string(order.size() - int8_nodes.size()));
    report_.notes.push_back("quantize inserted: " + std::to_string(quantized_.size()));
    report_.notes.push_back("dequantize inserted: " + std::to_string(dequantized_.size()));
  }

 private:
  void calibrate(const std::vector<TensorMap>& calibration) {
    for (const TensorMap& sample : calibration) {
      for (const auto& [id, value] : trace(g_, sample)) {
        if (value.dtype != DType::kF32) continue;
        Range& r = ranges_[id];
        for (double v : value.data) {
          if (!std::isfinite(v)) continue;
          r.lo = std::min(r.lo, v);
          r.hi = std::max(r.hi, v);
        }
      }
    }
  }

  QuantParams activation_params(TensorId t) const {
    double lo = 0.0, hi = 0.0;
    if (auto it = ranges_.find(t); it != ranges_.end() && it->second.lo <= it->second.hi) {
      lo = std::min(lo, it->second.lo);
      hi = std::max(hi, it->second.hi);
    }
    return asymmetric_params(lo, hi);
  }

  bool terminal_softmax(const Node& n) const {
    if (n.op != OpKind::kSoftmax) return false;
    return std::all_of(n.outputs.begin(), n.outputs.end(),
                       [&](TensorId t) { return g_.is_output(t); });
  }

  bool eligible(const Node& n) const {
    if (!int8_capable(n.op)) return false;
    if (mode_ == GraphQuantMode::kInt8FloatFallback && options_.fallback_ops.count(n.op)) {
      return false;
    }
    for (TensorId t : n.outputs) {
      if (g_.find_tensor(t)->dtype != DType::kF32) return false;
    }
    for (TensorId t : n.inputs) {
      if (g_.find_tensor(t)->dtype != DType::kF32) return false;
    }
    // The integer convolution needs a constant bias to fold into its accumulator.
    if (is_conv_like(n.op) && n.inputs.size() > 2 && !is_constant(g_, n.inputs[2])) {
      return false;
    }
    return true;
  }

  TensorId quantized(TensorId t) {
    if (auto it = quantized_.find(t); it != quantized_.end()) return it->second;
    const TensorSpec spec = *g_.find_tensor(t);
    const TensorId q = add_tensor(g_, spec.shape, DType::kI8, "", activation_params(t));
    add_node(g_, OpKind::kQuantize, {t}, {q});
    quantized_[t] = q;
    return q;
  }

  TensorId dequantized(TensorId t) {
    if (auto it = dequantized_.find(t); it != dequantized_.end()) return it->second;
    const TensorSpec spec = *g_.find_tensor(t);
    const TensorId d = add_tensor(g_, spec.shape, DType::kF32);
    add_node(g_, OpKind::kDequantize, {t}, {d});
    dequantized_[t] = d;
    return d;
  }

  TensorId add_quantized_constant(const Shape& shape, const QuantizedTensor& q) {
    return add_constant(g_, shape, DType::kI8, as_doubles(q.codes), q.params);
  }

  // Int8 (or int32 bias) version of constant input `slot` of node `id`.
  TensorId constant_operand(NodeId id, size_t slot) {
    const Node n = *g_.find_node(id);
    const TensorId t = n.inputs[slot];
    const TensorSpec spec = *g_.find_tensor(t);
    const std::vector<double> values = *constant_real_values(g_, t);

    if (is_conv_like(n.op) && slot == 2) return conv_bias(n, values);
    if (n.op == OpKind::kBiasAdd && slot == 1) {
      if (auto b = int32_bias(n, values)) return *b;
    }

    int kind = 0;
    int axis = -1;
    if (is_weight_slot(n, slot) && spec.shape.size() >= 2) {
      kind = 1;
      axis = n.op == OpKind::kMatMul ? 1 : n.op == OpKind::kDepthwiseConv2D ? 2 : 3;
      if (axis >= static_cast<int>(spec.shape.size())) axis = -1;
    }
    const auto key = std::make_pair(t, kind * 8 + axis + 1);
    if (auto it = constant_copies_.find(key); it != constant_copies_.end()) return it->second;
    const QuantizedTensor q = axis >= 0
                                  ? quantize_per_channel_asymmetric(values, spec.shape, axis)
                                  : quantize_per_layer_asymmetric(values);
    const TensorId copy = add_quantized_constant(spec.shape, q);
    constant_copies_[key] = copy;
    return copy;
  }

  // Bias in accumulator units: code[o] = round(b[o] / (sw[o] * sx)).
  TensorId conv_bias(const Node& n, const std::vector<double>& bias) {
    const TensorSpec& x = *g_.find_tensor(n.inputs[0]);
    const TensorSpec& w = *g_.find_tensor(n.inputs[1]);
    const ConvGeometry geo = conv_geometry(n, x.shape, w.shape);
    const double sx = x.quant->scale_for(0);
    QuantParams q;
    q.bit_width = 32;
    q.scheme = QuantScheme::kSymmetric;
    q.axis = 0;
    std::vector<double> codes(geo.out_c);
    for (int64_t o = 0; o < geo.out_c; ++o) {
      size_t c = 0;
      if (w.quant->per_channel()) {
        c = n.op == OpKind::kDepthwiseConv2D
                ? (w.quant->axis == 2 ? o / geo.multiplier : o % geo.multiplier)
                : o;
      }
      const double scale = static_cast<double>(w.quant->scale_for(c)) * sx;
      const double code = round_half_away(bias[o] / scale);
      if (!(std::abs(code) <= 2147483647.0)) {
        throw Error(ErrorCode::kNumericOverflow,
                    "bias of node " + std::to_string(n.id) + " does not fit int32");
      }
      codes[o] = code;
      q.scales.push_back(static_cast<float>(scale));
      q.zero_points.push_back(0);
    }
    return add_constant(g_, {geo.out_c}, DType::kI32, codes, q);
  }

  std::optional<TensorId> int32_bias(const Node& n, const std::vector<double>& bias) {
    const TensorSpec& x = *g_.find_tensor(n.inputs[0]);
    const TensorSpec& b = *g_.find_tensor(n.inputs[1]);
    QuantParams q;
    q.bit_width = 32;
    q.scheme = QuantScheme::kSymmetric;
    q.scales = {x.quant->scales[0]};
    q.zero_points = {0};
    std::vector<double> codes(bias.size());
    for (size_t i = 0; i < bias.size(); ++i) {
      codes[i] = round_half_away(bias[i] / static_cast<double>(q.scales[0]));
      if (!(std::abs(codes[i]) <= 2147483647.0)) return std::nullopt;
    }
    return add_constant(g_, b.shape, DType::kI32, codes, q);
  }

  void lower_node(NodeId id) {
    const size_t arity = g_.find_node(id)->inputs.size();
    for (size_t slot = 0; slot < arity; ++slot) {
      const TensorId t = g_.find_node(id)->inputs[slot];
      TensorId replacement = t;
      if (g_.find_tensor(t)->dtype == DType::kF32) {
        replacement = is_constant(g_, t) ? constant_operand(id, slot) : quantized(t);
      }
      g_.find_node(id)->inputs[slot] = replacement;
    }
    const Node& n = *g_.find_node(id);
    const TensorSpec& first = *g_.find_tensor(n.inputs[0]);
    const bool inherit = keeps_input_range(n.op) && first.dtype == DType::kI8 &&
                         first.quant && !first.quant->per_channel();
    const std::optional<QuantParams> inherited = inherit ? first.quant : std::nullopt;
    for (TensorId out : n.outputs) {
      TensorSpec& spec = *g_.find_tensor(out);
      spec.dtype = DType::kI8;
      spec.quant = inherited ? *inherited : activation_params(out);
      int8_outputs_.insert(out);
    }
  }

  void feed_float_node(NodeId id) {
    const size_t arity = g_.find_node(id)->inputs.size();
    for (size_t slot = 0; slot < arity; ++slot) {
      const TensorId t = g_.find_node(id)->inputs[slot];
      if (int8_outputs_.count(t)) g_.find_node(id)->inputs[slot] = dequantized(t);
    }
  }

  Graph& g_;
  GraphQuantMode mode_;
  const QuantizeOptions& options_;
  PassReport& report_;
  std::unordered_map<TensorId, Range> ranges_;
  std::unordered_map<TensorId, TensorId> quantized_;
  std::unordered_map<TensorId, TensorId> dequantized_;
  std::map<std::pair<TensorId, int>, TensorId> constant_copies_;
  std::unordered_set<TensorId> int8_outputs_;
};

}  // namespace

QuantizeResult quantize_graph(const Graph& graph, GraphQuantMode mode,
                              const std::vector<TensorMap>& calibration,
                              const QuantizeOptions& options) {
  Graph g = validated(graph);
  PassReport report;
  report.name = "quantize:" + std::string(quant_mode_name(mode));
  record_before(report, g);
  switch (mode) {
    case GraphQuantMode::kWeightsOnly:
      report.notes.push_back("weight tensors quantized: " +
                             std::to_string(quantize_weights(g, options)));
      break;
    case GraphQuantMode::kFloat16:
      report.notes.push_back("tensors converted: " + std::to_string(convert_to_half(g)));
      break;
    case GraphQuantMode::kInt8FloatFallback:
    case GraphQuantMode::kInt8Only:
      if (calibration.empty()) {
        throw Error(ErrorCode::kMissingCalibration,
                    "int8 quantization needs at least one calibration sample");
      }
      Int8Lowering(g, mode, options, report).run(calibration);
      break;
  }
  g = validated(garbage_collect(g));
  record_after(report, g);
  return {std::move(g), std::move(report)};
}

}  // namespace noptc
