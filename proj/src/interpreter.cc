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

#include "noptc/interpreter.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "noptc/half.h"
#include "noptc/quant_math.h"
#include "noptc/shape_inference.h"

namespace noptc {

std::vector<double> TensorValue::real() const {
  if (!quant) return data;
  std::vector<double> out(data.size());
  const ChannelIndexer channel(shape, *quant);
  for (size_t i = 0; i < data.size(); ++i) {
    out[i] = dequantize_code(data[i], *quant, channel(i));
  }
  return out;
}

TensorValue TensorValue::from(Shape shape, std::vector<double> data, DType dtype) {
  TensorValue v;
  v.shape = std::move(shape);
  v.data = std::move(data);
  v.dtype = dtype;
  return v;
}

void ExecStats::add(const NodeStats& s, int64_t repeat) {
  NodeStats scaled = s;
  scaled.output_elements *= repeat;
  scaled.multiplications *= repeat;
  scaled.additions *= repeat;
  scaled.macs *= repeat;
  per_node.push_back(scaled);
  multiplications += scaled.multiplications;
  additions += scaled.additions;
  macs += scaled.macs;
}

int64_t ExecStats::mults_per_element_sum() const {
  int64_t sum = 0;
  for (const auto& s : per_node) sum += s.mults_per_element;
  return sum;
}

double fixed_point_round(double value, int bits) {
  const double step = std::ldexp(1.0, bits - 1);
  const double code = clamp_code(round_half_away(value * step),
                                 -(int64_t{1} << (bits - 1)),
                                 (int64_t{1} << (bits - 1)) - 1);
  return code / step;
}

NodeStats node_stats(const Node& node, const Graph& graph) {
  NodeStats s;
  s.node = node.id;
  s.op = node.op;
  for (TensorId t : node.outputs) {
    if (const TensorSpec* spec = graph.find_tensor(t)) {
      s.output_elements += element_count(spec->shape);
    }
  }
  const int64_t out = s.output_elements;
  auto in_shape = [&](size_t i) -> const Shape& {
    return graph.find_tensor(node.inputs[i])->shape;
  };
  switch (node.op) {
    case OpKind::kConv2D:
    case OpKind::kFusedConvBnBias:
    case OpKind::kDepthwiseConv2D: {
      const Shape& w = in_shape(1);
      s.mults_per_element = node.op == OpKind::kDepthwiseConv2D ? w[0] * w[1]
                                                                 : w[0] * w[1] * w[2];
      s.additions = out * (s.mults_per_element - 1) + (node.inputs.size() > 2 ? out : 0);
      break;
    }
    case OpKind::kMatMul:
      s.mults_per_element = in_shape(0)[1];
      s.additions = out * (s.mults_per_element - 1);
      break;
    case OpKind::kMul:
    case OpKind::kDiv:
    case OpKind::kQuantize:
    case OpKind::kDequantize:
      s.mults_per_element = 1;
      break;
    case OpKind::kFakeQuant:
      s.mults_per_element = 2;
      break;
    case OpKind::kFusedBatchNorm:
      s.mults_per_element = 1;
      s.additions = out;
      break;
    case OpKind::kAvgPool: {
      const auto k = node.attr_ints("ksize");
      s.mults_per_element = 1;
      s.additions = out * (k.size() == 2 ? k[0] * k[1] - 1 : 0);
      break;
    }
    case OpKind::kSoftmax:
      s.mults_per_element = 1;
      s.additions = out;
      break;
    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kBiasAdd:
      s.additions = out;
      break;
    case OpKind::kAddN:
      s.additions = out * static_cast<int64_t>(node.inputs.size() - 1);
      break;
    default:
      break;
  }
  s.multiplications = out * s.mults_per_element;
  if (node.op == OpKind::kConv2D || node.op == OpKind::kFusedConvBnBias ||
      node.op == OpKind::kDepthwiseConv2D || node.op == OpKind::kMatMul) {
    s.macs = s.multiplications;
  }
  return s;
}

namespace {

void count_into(const Graph& g, ExecStats& stats, int64_t repeat) {
  for (NodeId id : topo_sort(g)) {
    const Node& n = *g.find_node(id);
    if (n.op == OpKind::kLoop) {
      const Graph& body = g.subgraphs[n.attr_int("body")];
      count_into(body, stats, repeat * n.attr_int("trip_count"));
      continue;
    }
    stats.add(node_stats(n, g), repeat);
  }
}

using Env = std::unordered_map<TensorId, TensorValue>;

// Row-major strides.
std::vector<int64_t> strides_of(const Shape& s) {
  std::vector<int64_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
  return st;
}

// Strides of `in` broadcast into `out` (0 along expanded axes).
std::vector<int64_t> broadcast_strides(const Shape& in, const Shape& out) {
  const auto st = strides_of(in);
  std::vector<int64_t> b(out.size(), 0);
  const size_t off = out.size() - in.size();
  for (size_t i = 0; i < in.size(); ++i) {
    b[off + i] = in[i] == 1 ? 0 : st[i];
  }
  return b;
}

// Calls f(out_index, offset_0, offset_1, ...) for each output element.
template <typename F>
void for_each_broadcast(const Shape& out, const std::vector<std::vector<int64_t>>& strides,
                        F&& f) {
  const int64_t total = element_count(out);
  const size_t rank = out.size();
  std::vector<int64_t> idx(rank, 0);
  std::vector<int64_t> offs(strides.size(), 0);
  for (int64_t i = 0; i < total; ++i) {
    f(i, offs);
    for (int d = static_cast<int>(rank) - 1; d >= 0; --d) {
      if (++idx[d] < out[d]) {
        for (size_t k = 0; k < strides.size(); ++k) offs[k] += strides[k][d];
        break;
      }
      for (size_t k = 0; k < strides.size(); ++k) offs[k] -= strides[k][d] * (out[d] - 1);
      idx[d] = 0;
    }
  }
}

std::vector<double> broadcast_map(const Shape& out, const std::vector<const Shape*>& shapes,
                                  const std::vector<const std::vector<double>*>& values,
                                  double (*combine)(const double*, size_t)) {
  std::vector<std::vector<int64_t>> strides;
  for (const Shape* s : shapes) strides.push_back(broadcast_strides(*s, out));
  std::vector<double> result(element_count(out));
  std::vector<double> args(values.size());
  for_each_broadcast(out, strides, [&](int64_t i, const std::vector<int64_t>& offs) {
    for (size_t k = 0; k < values.size(); ++k) args[k] = (*values[k])[offs[k]];
    result[i] = combine(args.data(), args.size());
  });
  return result;
}

// Gathers `out` from `in` where out index -> in index is given by `map`.
template <typename Map>
std::vector<double> gather(const Shape& out, Map&& map) {
  const int64_t total = element_count(out);
  std::vector<double> result(total);
  std::vector<int64_t> idx(out.size(), 0);
  for (int64_t i = 0; i < total; ++i) {
    result[i] = map(idx);
    for (int d = static_cast<int>(out.size()) - 1; d >= 0; --d) {
      if (++idx[d] < out[d]) break;
      idx[d] = 0;
    }
  }
  return result;
}

int64_t norm_axis(int64_t axis, size_t rank) {
  return axis < 0 ? axis + static_cast<int64_t>(rank) : axis;
}

[[noreturn]] void unsupported(const Node& n, const std::string& why) {
  throw Error(ErrorCode::kUnsupportedOp,
              std::string(op_name(n.op)) + " node " + std::to_string(n.id) + ": " + why);
}

struct Engine {
  bool require_int8 = false;
  ExecStats* stats = nullptr;

  std::vector<TensorValue> run_graph(const Graph& g, const std::vector<TensorValue>& inputs,
                                     Env* capture);

 private:
  std::vector<TensorValue> exec(const Node& n, const Graph& g, const Env& env);
  std::vector<double> conv_float(const Node& n, const ConvGeometry& geo,
                                 const std::vector<double>& x, const std::vector<double>& w,
                                 const std::vector<double>* bias);
  std::vector<double> conv_int8(const Node& n, const Graph& g, const ConvGeometry& geo,
                                const TensorValue& x, const TensorValue& w,
                                const TensorValue* bias);
  std::vector<double> matmul_int8(const Node& n, const TensorValue& x, const TensorValue& w);
};

TensorValue finalize(std::vector<double> real, const TensorSpec& spec) {
  TensorValue v;
  v.shape = spec.shape;
  v.dtype = spec.dtype;
  v.quant = spec.quant;
  switch (spec.dtype) {
    case DType::kF32:
      break;
    case DType::kF16:
      for (double& x : real) x = round_to_half(x);
      break;
    case DType::kBool:
      for (double& x : real) x = x != 0.0 ? 1.0 : 0.0;
      break;
    case DType::kI8: {
      if (!spec.quant) {
        throw Error(ErrorCode::kDTypeMismatch,
                    "I8 tensor " + std::to_string(spec.id) + " lacks quantization");
      }
      const ChannelIndexer channel(spec.shape, *spec.quant);
      for (size_t i = 0; i < real.size(); ++i) {
        real[i] = static_cast<double>(quantize_to_code(real[i], *spec.quant, channel(i)));
      }
      break;
    }
    case DType::kI32: {
      if (spec.quant) {
        const ChannelIndexer channel(spec.shape, *spec.quant);
        for (size_t i = 0; i < real.size(); ++i) {
          real[i] = static_cast<double>(quantize_to_code(real[i], *spec.quant, channel(i)));
        }
      } else {
        for (double& x : real) {
          x = std::trunc(x);
          if (!(x >= -2147483648.0 && x <= 2147483647.0)) {
            throw Error(ErrorCode::kNumericOverflow,
                        "int32 result out of range in tensor " + std::to_string(spec.id));
          }
        }
      }
      break;
    }
  }
  v.data = std::move(real);
  return v;
}

std::vector<TensorValue> Engine::run_graph(const Graph& g,
                                           const std::vector<TensorValue>& inputs,
                                           Env* capture) {
  Env local;
  Env& env = capture ? *capture : local;
  for (size_t i = 0; i < g.inputs.size(); ++i) env[g.inputs[i]] = inputs[i];
  for (const ConstData& c : g.constants) {
    const TensorSpec* spec = g.find_tensor(c.tensor_id);
    TensorValue v;
    v.shape = spec->shape;
    v.dtype = spec->dtype;
    v.quant = spec->quant;
    v.data = decode_payload(spec->dtype, c.payload);
    env[c.tensor_id] = std::move(v);
  }
  for (NodeId id : topo_sort(g)) {
    const Node& n = *g.find_node(id);
    auto outs = exec(n, g, env);
    for (size_t k = 0; k < n.outputs.size(); ++k) env[n.outputs[k]] = std::move(outs[k]);
    if (stats && n.op != OpKind::kLoop) stats->add(node_stats(n, g));
  }
  std::vector<TensorValue> result;
  for (TensorId t : g.outputs) result.push_back(env.at(t));
  return result;
}

std::vector<double> Engine::conv_float(const Node& n, const ConvGeometry& geo,
                                       const std::vector<double>& x,
                                       const std::vector<double>& w,
                                       const std::vector<double>* bias) {
  const bool depthwise = n.op == OpKind::kDepthwiseConv2D;
  const int64_t oc_total = geo.out_c;
  std::vector<double> out(geo.batch * geo.out_h * geo.out_w * oc_total, 0.0);
  std::vector<double> acc(oc_total);
  for (int64_t b = 0; b < geo.batch; ++b) {
    for (int64_t oh = 0; oh < geo.out_h; ++oh) {
      for (int64_t ow = 0; ow < geo.out_w; ++ow) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int64_t kh = 0; kh < geo.k_h; ++kh) {
          const int64_t ih = oh * geo.stride_h - geo.pad_top + kh;
          if (ih < 0 || ih >= geo.in_h) continue;
          for (int64_t kw = 0; kw < geo.k_w; ++kw) {
            const int64_t iw = ow * geo.stride_w - geo.pad_left + kw;
            if (iw < 0 || iw >= geo.in_w) continue;
            const double* xp = &x[((b * geo.in_h + ih) * geo.in_w + iw) * geo.in_c];
            if (depthwise) {
              const int64_t m = geo.multiplier;
              const double* wp = &w[(kh * geo.k_w + kw) * geo.in_c * m];
              for (int64_t c = 0; c < geo.in_c; ++c) {
                for (int64_t j = 0; j < m; ++j) acc[c * m + j] += xp[c] * wp[c * m + j];
              }
            } else {
              const double* wp = &w[(kh * geo.k_w + kw) * geo.in_c * oc_total];
              for (int64_t c = 0; c < geo.in_c; ++c) {
                const double xv = xp[c];
                const double* wr = wp + c * oc_total;
                for (int64_t o = 0; o < oc_total; ++o) acc[o] += xv * wr[o];
              }
            }
          }
        }
        double* op = &out[((b * geo.out_h + oh) * geo.out_w + ow) * oc_total];
        for (int64_t o = 0; o < oc_total; ++o) {
          op[o] = bias ? acc[o] + (*bias)[o] : acc[o];
        }
      }
    }
  }
  return out;
}

// Weight quantization channel feeding output channel `o`.
size_t weight_channel(const Node& n, const QuantParams& q, const ConvGeometry* geo,
                      int64_t o) {
  if (!q.per_channel()) return 0;
  if (n.op == OpKind::kMatMul) {
    if (q.axis == 1) return o;
  } else if (n.op == OpKind::kDepthwiseConv2D) {
    if (q.axis == 2) return o / geo->multiplier;
    if (q.axis == 3) return o % geo->multiplier;
  } else if (q.axis == 3) {
    return o;
  }
  unsupported(n, "weight quantization axis " + std::to_string(q.axis) +
                     " does not index output channels");
}

inline void checked_accumulate(int64_t& acc, int64_t term, const Node& n) {
  acc += term;
  if (acc > std::numeric_limits<int32_t>::max() || acc < std::numeric_limits<int32_t>::min()) {
    throw Error(ErrorCode::kAccumulatorOverflow,
                "int32 accumulator overflow in " + std::string(op_name(n.op)) + " node " +
                    std::to_string(n.id));
  }
}

std::vector<double> Engine::conv_int8(const Node& n, const Graph& g, const ConvGeometry& geo,
                                      const TensorValue& x, const TensorValue& w,
                                      const TensorValue* bias) {
  (void)g;
  const QuantParams& qx = *x.quant;
  const QuantParams& qw = *w.quant;
  if (qx.per_channel()) unsupported(n, "per-channel activation quantization");
  const int64_t zx = qx.zero_points[0];
  const double sx = qx.scales[0];
  const bool depthwise = n.op == OpKind::kDepthwiseConv2D;
  const int64_t oc_total = geo.out_c;
  std::vector<int64_t> zw(oc_total);
  std::vector<double> sw(oc_total);
  for (int64_t o = 0; o < oc_total; ++o) {
    const size_t c = weight_channel(n, qw, &geo, o);
    zw[o] = qw.zero_point_for(c);
    sw[o] = qw.scale_for(c);
  }
  std::vector<double> bias_real;
  const bool int_bias = bias && bias->dtype == DType::kI32;
  if (bias && !int_bias) bias_real = bias->real();

  std::vector<double> out(geo.batch * geo.out_h * geo.out_w * oc_total);
  std::vector<int64_t> acc(oc_total);
  for (int64_t b = 0; b < geo.batch; ++b) {
    for (int64_t oh = 0; oh < geo.out_h; ++oh) {
      for (int64_t ow = 0; ow < geo.out_w; ++ow) {
        for (int64_t o = 0; o < oc_total; ++o) {
          acc[o] = int_bias ? static_cast<int64_t>(bias->data[o]) : 0;
        }
        for (int64_t kh = 0; kh < geo.k_h; ++kh) {
          const int64_t ih = oh * geo.stride_h - geo.pad_top + kh;
          if (ih < 0 || ih >= geo.in_h) continue;
          for (int64_t kw = 0; kw < geo.k_w; ++kw) {
            const int64_t iw = ow * geo.stride_w - geo.pad_left + kw;
            if (iw < 0 || iw >= geo.in_w) continue;
            const double* xp = &x.data[((b * geo.in_h + ih) * geo.in_w + iw) * geo.in_c];
            if (depthwise) {
              const int64_t m = geo.multiplier;
              const double* wp = &w.data[(kh * geo.k_w + kw) * geo.in_c * m];
              for (int64_t c = 0; c < geo.in_c; ++c) {
                const int64_t xv = static_cast<int64_t>(xp[c]) - zx;
                for (int64_t j = 0; j < m; ++j) {
                  const int64_t o = c * m + j;
                  checked_accumulate(acc[o], (static_cast<int64_t>(wp[o]) - zw[o]) * xv, n);
                }
              }
            } else {
              const double* wp = &w.data[(kh * geo.k_w + kw) * geo.in_c * oc_total];
              for (int64_t c = 0; c < geo.in_c; ++c) {
                const int64_t xv = static_cast<int64_t>(xp[c]) - zx;
                const double* wr = wp + c * oc_total;
                for (int64_t o = 0; o < oc_total; ++o) {
                  checked_accumulate(acc[o], (static_cast<int64_t>(wr[o]) - zw[o]) * xv, n);
                }
              }
            }
          }
        }
        double* op = &out[((b * geo.out_h + oh) * geo.out_w + ow) * oc_total];
        for (int64_t o = 0; o < oc_total; ++o) {
          op[o] = static_cast<double>(acc[o]) * sw[o] * sx;
          if (!bias_real.empty()) op[o] += bias_real[o];
        }
      }
    }
  }
  return out;
}

std::vector<double> Engine::matmul_int8(const Node& n, const TensorValue& x,
                                        const TensorValue& w) {
  const QuantParams& qx = *x.quant;
  const QuantParams& qw = *w.quant;
  if (qx.per_channel()) unsupported(n, "per-channel activation quantization");
  const int64_t rows = x.shape[0], inner = x.shape[1], cols = w.shape[1];
  const int64_t zx = qx.zero_points[0];
  const double sx = qx.scales[0];
  std::vector<double> out(rows * cols);
  for (int64_t j = 0; j < cols; ++j) {
    const size_t c = weight_channel(n, qw, nullptr, j);
    const int64_t zw = qw.zero_point_for(c);
    const double sw = qw.scale_for(c);
    for (int64_t i = 0; i < rows; ++i) {
      int64_t acc = 0;
      for (int64_t k = 0; k < inner; ++k) {
        checked_accumulate(acc,
                           (static_cast<int64_t>(w.data[k * cols + j]) - zw) *
                               (static_cast<int64_t>(x.data[i * inner + k]) - zx),
                           n);
      }
      out[i * cols + j] = static_cast<double>(acc) * sw * sx;
    }
  }
  return out;
}

double op_add(const double* a, size_t) { return a[0] + a[1]; }
double op_sub(const double* a, size_t) { return a[0] - a[1]; }
double op_mul(const double* a, size_t) { return a[0] * a[1]; }
double op_div(const double* a, size_t) { return a[0] / a[1]; }
double op_greater(const double* a, size_t) { return a[0] > a[1] ? 1.0 : 0.0; }
double op_less_equal(const double* a, size_t) { return a[0] <= a[1] ? 1.0 : 0.0; }
double op_sum(const double* a, size_t n) {
  double s = a[0];
  for (size_t i = 1; i < n; ++i) s += a[i];
  return s;
}

std::vector<TensorValue> Engine::exec(const Node& n, const Graph& g, const Env& env) {
  std::vector<const TensorValue*> in;
  for (TensorId t : n.inputs) {
    auto it = env.find(t);
    if (it == env.end()) {
      throw Error(ErrorCode::kMissingInput,
                  "value of tensor " + std::to_string(t) + " unavailable at node " +
                      std::to_string(n.id));
    }
    in.push_back(&it->second);
  }
  auto out_spec = [&](size_t k) -> const TensorSpec& { return *g.find_tensor(n.outputs[k]); };
  auto single = [&](std::vector<double> real) {
    return std::vector<TensorValue>{finalize(std::move(real), out_spec(0))};
  };
  auto real_of = [&](size_t i) { return in[i]->real(); };

  const bool conv_like = is_conv_like(n.op);
  if (require_int8 && (conv_like || n.op == OpKind::kMatMul)) {
    if (in[0]->dtype != DType::kI8 || in[1]->dtype != DType::kI8) {
      unsupported(n, "run_quantized requires int8 data and weight operands");
    }
  }

  switch (n.op) {
    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMul:
    case OpKind::kDiv:
    case OpKind::kGreater:
    case OpKind::kLessEqual: {
      const auto a = real_of(0), b = real_of(1);
      double (*f)(const double*, size_t) = nullptr;
      switch (n.op) {
        case OpKind::kAdd: f = op_add; break;
        case OpKind::kSub: f = op_sub; break;
        case OpKind::kMul: f = op_mul; break;
        case OpKind::kDiv: f = op_div; break;
        case OpKind::kGreater: f = op_greater; break;
        default: f = op_less_equal; break;
      }
      if (n.op == OpKind::kDiv && out_spec(0).dtype == DType::kI32) {
        for (double d : b) {
          if (d == 0.0) throw Error(ErrorCode::kNumericOverflow, "integer division by zero");
        }
      }
      return single(broadcast_map(out_spec(0).shape, {&in[0]->shape, &in[1]->shape},
                                  {&a, &b}, f));
    }
    case OpKind::kAddN: {
      std::vector<std::vector<double>> reals;
      for (size_t i = 0; i < in.size(); ++i) reals.push_back(real_of(i));
      std::vector<const Shape*> shapes;
      std::vector<const std::vector<double>*> values;
      for (size_t i = 0; i < in.size(); ++i) {
        shapes.push_back(&in[i]->shape);
        values.push_back(&reals[i]);
      }
      return single(broadcast_map(out_spec(0).shape, shapes, values, op_sum));
    }
    case OpKind::kNeg:
    case OpKind::kExp:
    case OpKind::kSin:
    case OpKind::kRelu:
    case OpKind::kNot: {
      auto v = real_of(0);
      for (double& x : v) {
        switch (n.op) {
          case OpKind::kNeg: x = -x; break;
          case OpKind::kExp: x = std::exp(x); break;
          case OpKind::kSin: x = std::sin(x); break;
          case OpKind::kRelu: x = x > 0.0 ? x : 0.0; break;
          default: x = x != 0.0 ? 0.0 : 1.0; break;
        }
      }
      return single(std::move(v));
    }
    case OpKind::kFakeQuant: {
      const int bits = static_cast<int>(n.attr_int("bits", 8));
      const double lo = n.attr_float("min", -1.0), hi = n.attr_float("max", 1.0);
      const double range = std::max(std::abs(lo), std::abs(hi));
      auto v = real_of(0);
      for (double& x : v) x = range * fixed_point_round(x / range, bits);
      return single(std::move(v));
    }
    case OpKind::kQuantize:
    case OpKind::kDequantize:
    case OpKind::kIdentity:
    case OpKind::kStopGradient:
    case OpKind::kReshape:
    case OpKind::kSqueeze:
      if (in[0]->dtype == out_spec(0).dtype && in[0]->quant == out_spec(0).quant) {
        TensorValue v = *in[0];
        v.shape = out_spec(0).shape;
        if (v.dtype == DType::kF16) {
          for (double& x : v.data) x = round_to_half(x);
        }
        return {v};
      }
      return single(real_of(0));
    case OpKind::kNoOp:
      return {};
    case OpKind::kSoftmax: {
      auto v = real_of(0);
      const int64_t inner = in[0]->shape.back();
      for (int64_t base = 0; base < static_cast<int64_t>(v.size()); base += inner) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int64_t i = 0; i < inner; ++i) mx = std::max(mx, v[base + i]);
        double sum = 0.0;
        for (int64_t i = 0; i < inner; ++i) {
          v[base + i] = std::exp(v[base + i] - mx);
          sum += v[base + i];
        }
        for (int64_t i = 0; i < inner; ++i) v[base + i] /= sum;
      }
      return single(std::move(v));
    }
    case OpKind::kConcat: {
      const Shape& out = out_spec(0).shape;
      const int64_t axis = norm_axis(n.attr_int("axis", 0), out.size());
      int64_t outer = 1, inner = 1;
      for (int64_t d = 0; d < axis; ++d) outer *= out[d];
      for (size_t d = axis + 1; d < out.size(); ++d) inner *= out[d];
      std::vector<double> result;
      result.reserve(element_count(out));
      std::vector<std::vector<double>> reals;
      for (size_t i = 0; i < in.size(); ++i) reals.push_back(real_of(i));
      for (int64_t o = 0; o < outer; ++o) {
        for (size_t i = 0; i < in.size(); ++i) {
          const int64_t chunk = in[i]->shape[axis] * inner;
          result.insert(result.end(), reals[i].begin() + o * chunk,
                        reals[i].begin() + (o + 1) * chunk);
        }
      }
      return single(std::move(result));
    }
    case OpKind::kSplit: {
      const Shape& s = in[0]->shape;
      const int64_t axis = norm_axis(n.attr_int("axis", 0), s.size());
      const int64_t parts = static_cast<int64_t>(n.outputs.size());
      int64_t outer = 1, inner = 1;
      for (int64_t d = 0; d < axis; ++d) outer *= s[d];
      for (size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
      const int64_t chunk = s[axis] / parts * inner;
      const auto v = real_of(0);
      std::vector<TensorValue> outs;
      for (int64_t p = 0; p < parts; ++p) {
        std::vector<double> part;
        part.reserve(outer * chunk);
        for (int64_t o = 0; o < outer; ++o) {
          const auto begin = v.begin() + o * s[axis] * inner + p * chunk;
          part.insert(part.end(), begin, begin + chunk);
        }
        outs.push_back(finalize(std::move(part), out_spec(p)));
      }
      return outs;
    }
    case OpKind::kTranspose: {
      const Shape& s = in[0]->shape;
      auto perm = n.attr_ints("perm");
      if (perm.empty()) {
        perm.resize(s.size());
        std::iota(perm.rbegin(), perm.rend(), 0);
      }
      const auto st = strides_of(s);
      const auto v = real_of(0);
      return single(gather(out_spec(0).shape, [&](const std::vector<int64_t>& idx) {
        int64_t off = 0;
        for (size_t d = 0; d < idx.size(); ++d) off += idx[d] * st[perm[d]];
        return v[off];
      }));
    }
    case OpKind::kReverse: {
      const Shape& s = in[0]->shape;
      std::vector<bool> flip(s.size(), false);
      for (int64_t a : n.attr_ints("axes")) flip[norm_axis(a, s.size())] = true;
      const auto st = strides_of(s);
      const auto v = real_of(0);
      return single(gather(s, [&](const std::vector<int64_t>& idx) {
        int64_t off = 0;
        for (size_t d = 0; d < idx.size(); ++d) {
          off += (flip[d] ? s[d] - 1 - idx[d] : idx[d]) * st[d];
        }
        return v[off];
      }));
    }
    case OpKind::kShuffle: {
      const Shape& s = in[0]->shape;
      auto v = real_of(0);
      if (s.size() < 2) return single(std::move(v));
      const int64_t groups = n.attr_int("groups", 1);
      const int64_t c = s.back();
      const int64_t per = c / groups;
      std::vector<double> out(v.size());
      for (size_t base = 0; base < v.size(); base += c) {
        // Input channel i*per + j goes to output position j*groups + i.
        for (int64_t i = 0; i < groups; ++i) {
          for (int64_t j = 0; j < per; ++j) out[base + j * groups + i] = v[base + i * per + j];
        }
      }
      return single(std::move(out));
    }
    case OpKind::kPad: {
      const Shape& s = in[0]->shape;
      const auto pads = n.attr_ints("paddings");
      const auto st = strides_of(s);
      const auto v = real_of(0);
      return single(gather(out_spec(0).shape, [&](const std::vector<int64_t>& idx) {
        int64_t off = 0;
        for (size_t d = 0; d < idx.size(); ++d) {
          const int64_t i = idx[d] - pads[2 * d];
          if (i < 0 || i >= s[d]) return 0.0;
          off += i * st[d];
        }
        return v[off];
      }));
    }
    case OpKind::kTile: {
      const Shape& s = in[0]->shape;
      const auto st = strides_of(s);
      const auto v = real_of(0);
      return single(gather(out_spec(0).shape, [&](const std::vector<int64_t>& idx) {
        int64_t off = 0;
        for (size_t d = 0; d < idx.size(); ++d) off += (idx[d] % s[d]) * st[d];
        return v[off];
      }));
    }
    case OpKind::kSlice: {
      const Shape& s = in[0]->shape;
      const auto begin = n.attr_ints("begin");
      const auto st = strides_of(s);
      const auto v = real_of(0);
      return single(gather(out_spec(0).shape, [&](const std::vector<int64_t>& idx) {
        int64_t off = 0;
        for (size_t d = 0; d < idx.size(); ++d) off += (idx[d] + begin[d]) * st[d];
        return v[off];
      }));
    }
    case OpKind::kConv2D:
    case OpKind::kDepthwiseConv2D:
    case OpKind::kFusedConvBnBias: {
      const ConvGeometry geo = conv_geometry(n, in[0]->shape, in[1]->shape);
      const TensorValue* bias = in.size() > 2 ? in[2] : nullptr;
      if (in[0]->dtype == DType::kI8 && in[1]->dtype == DType::kI8) {
        return single(conv_int8(n, g, geo, *in[0], *in[1], bias));
      }
      std::vector<double> bias_real;
      if (bias) bias_real = bias->real();
      return single(conv_float(n, geo, real_of(0), real_of(1), bias ? &bias_real : nullptr));
    }
    case OpKind::kMatMul: {
      if (in[0]->dtype == DType::kI8 && in[1]->dtype == DType::kI8) {
        return single(matmul_int8(n, *in[0], *in[1]));
      }
      const auto a = real_of(0), b = real_of(1);
      const int64_t rows = in[0]->shape[0], inner = in[0]->shape[1], cols = in[1]->shape[1];
      std::vector<double> out(rows * cols, 0.0);
      for (int64_t i = 0; i < rows; ++i) {
        double* orow = &out[i * cols];
        for (int64_t k = 0; k < inner; ++k) {
          const double av = a[i * inner + k];
          const double* brow = &b[k * cols];
          for (int64_t j = 0; j < cols; ++j) orow[j] += av * brow[j];
        }
      }
      return single(std::move(out));
    }
    case OpKind::kBiasAdd: {
      auto v = real_of(0);
      const auto bias = real_of(1);
      const size_t c = bias.size();
      for (size_t i = 0; i < v.size(); ++i) v[i] += bias[i % c];
      return single(std::move(v));
    }
    case OpKind::kFusedBatchNorm: {
      auto v = real_of(0);
      const auto gamma = real_of(1), beta = real_of(2), mean = real_of(3), var = real_of(4);
      const double eps = n.attr_float("epsilon", 1e-3);
      const size_t c = gamma.size();
      for (size_t i = 0; i < v.size(); ++i) {
        const size_t k = i % c;
        v[i] = gamma[k] * (v[i] - mean[k]) / std::sqrt(var[k] + eps) + beta[k];
      }
      return single(std::move(v));
    }
    case OpKind::kMaxPool:
    case OpKind::kAvgPool: {
      const ConvGeometry geo = conv_geometry(n, in[0]->shape, {});
      const auto x = real_of(0);
      const bool is_max = n.op == OpKind::kMaxPool;
      std::vector<double> out(geo.batch * geo.out_h * geo.out_w * geo.out_c);
      for (int64_t b = 0; b < geo.batch; ++b) {
        for (int64_t oh = 0; oh < geo.out_h; ++oh) {
          for (int64_t ow = 0; ow < geo.out_w; ++ow) {
            for (int64_t c = 0; c < geo.in_c; ++c) {
              double acc = is_max ? -std::numeric_limits<double>::infinity() : 0.0;
              int64_t count = 0;
              for (int64_t kh = 0; kh < geo.k_h; ++kh) {
                const int64_t ih = oh * geo.stride_h - geo.pad_top + kh;
                if (ih < 0 || ih >= geo.in_h) continue;
                for (int64_t kw = 0; kw < geo.k_w; ++kw) {
                  const int64_t iw = ow * geo.stride_w - geo.pad_left + kw;
                  if (iw < 0 || iw >= geo.in_w) continue;
                  const double xv = x[((b * geo.in_h + ih) * geo.in_w + iw) * geo.in_c + c];
                  acc = is_max ? std::max(acc, xv) : acc + xv;
                  ++count;
                }
              }
              out[((b * geo.out_h + oh) * geo.out_w + ow) * geo.out_c + c] =
                  is_max ? acc : acc / static_cast<double>(count);
            }
          }
        }
      }
      return single(std::move(out));
    }
    case OpKind::kLoop: {
      const int64_t trip = n.attr_int("trip_count");
      const Graph& body = g.subgraphs[n.attr_int("body")];
      const size_t carried = static_cast<size_t>(
          n.attr_int("num_carried", static_cast<int64_t>(in.size())));
      std::vector<TensorValue> state;
      for (const TensorValue* v : in) state.push_back(*v);
      for (int64_t it = 0; it < trip; ++it) {
        auto next = run_graph(body, state, nullptr);
        for (size_t k = 0; k < carried; ++k) state[k] = std::move(next[k]);
      }
      state.resize(carried);
      return state;
    }
  }
  unsupported(n, "no kernel");
}

Graph prepared(const Graph& graph) {
  for (const auto& t : graph.tensors) {
    if (!t.shape_known) return validated(graph);
  }
  for (const auto& sub : graph.subgraphs) {
    for (const auto& t : sub.tensors) {
      if (!t.shape_known) return validated(graph);
    }
  }
  return graph;
}

std::vector<TensorValue> bind_inputs(const Graph& g, const TensorMap& inputs) {
  std::vector<TensorValue> bound;
  for (TensorId id : g.inputs) {
    const TensorSpec& spec = *g.find_tensor(id);
    const std::string name = tensor_display_name(spec);
    auto it = inputs.find(name);
    if (it == inputs.end()) {
      throw Error(ErrorCode::kMissingInput, "no value for graph input '" + name + "'");
    }
    const TensorValue& v = it->second;
    if (v.shape != spec.shape || static_cast<int64_t>(v.data.size()) != element_count(spec.shape)) {
      throw Error(ErrorCode::kShapeMismatch,
                  "input '" + name + "' has shape " + shape_to_string(v.shape) +
                      ", graph expects " + shape_to_string(spec.shape));
    }
    TensorValue b = v;
    if (b.dtype != spec.dtype || b.quant != spec.quant) {
      b = finalize(v.real(), spec);
    } else if (b.dtype == DType::kF16) {
      for (double& x : b.data) x = round_to_half(x);
    }
    bound.push_back(std::move(b));
  }
  return bound;
}

RunResult run_impl(const Graph& graph, const TensorMap& inputs, bool require_int8) {
  const Graph g = prepared(graph);
  RunResult result;
  Engine engine;
  engine.require_int8 = require_int8;
  engine.stats = &result.stats;
  auto outs = engine.run_graph(g, bind_inputs(g, inputs), nullptr);
  for (size_t i = 0; i < g.outputs.size(); ++i) {
    result.outputs[tensor_display_name(*g.find_tensor(g.outputs[i]))] = std::move(outs[i]);
  }
  return result;
}

}  // namespace

RunResult run(const Graph& graph, const TensorMap& inputs) {
  return run_impl(graph, inputs, false);
}

RunResult run_quantized(const Graph& graph, const TensorMap& inputs) {
  return run_impl(graph, inputs, true);
}

std::unordered_map<TensorId, TensorValue> trace(const Graph& graph, const TensorMap& inputs) {
  const Graph g = prepared(graph);
  Engine engine;
  Env env;
  engine.run_graph(g, bind_inputs(g, inputs), &env);
  return env;
}

ExecStats count_multiplications(const Graph& graph) {
  const Graph g = prepared(graph);
  ExecStats stats;
  count_into(g, stats, 1);
  return stats;
}

bool values_close(const TensorValue& a, const TensorValue& b, double rel, double abs_floor) {
  if (a.shape != b.shape || a.data.size() != b.data.size()) return false;
  const auto ra = a.real(), rb = b.real();
  for (size_t i = 0; i < ra.size(); ++i) {
    const double x = ra[i], y = rb[i];
    if (x == y) continue;
    if (std::isnan(x) || std::isnan(y)) {
      if (std::isnan(x) && std::isnan(y)) continue;
      return false;
    }
    const double diff = std::abs(x - y);
    if (diff <= abs_floor) continue;
    if (diff <= rel * std::max(std::abs(x), std::abs(y))) continue;
    return false;
  }
  return true;
}

bool outputs_close(const TensorMap& a, const TensorMap& b, double rel, double abs_floor) {
  if (a.size() != b.size()) return false;
  for (const auto& [name, va] : a) {
    auto it = b.find(name);
    if (it == b.end() || !values_close(va, it->second, rel, abs_floor)) return false;
  }
  return true;
}

}  // namespace noptc
