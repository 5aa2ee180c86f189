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

#include "noptc/shape_inference.h"

#include <algorithm>
#include <numeric>
#include <set>

namespace noptc {
namespace {

[[noreturn]] void shape_error(const std::string& msg) {
  throw Error(ErrorCode::kShapeMismatch, msg);
}

[[noreturn]] void dtype_error(const std::string& msg) {
  throw Error(ErrorCode::kDTypeMismatch, msg);
}

[[noreturn]] void node_error(const std::string& msg) {
  throw Error(ErrorCode::kInvalidNode, msg);
}

void expect_arity(std::span<const TensorSpec* const> in, size_t lo, size_t hi) {
  if (in.size() < lo || in.size() > hi) {
    node_error("expected " + std::to_string(lo) +
               (hi == lo ? "" : ".." + std::to_string(hi)) + " inputs, got " +
               std::to_string(in.size()));
  }
}

void expect_rank(const TensorSpec& t, size_t rank, const char* what) {
  if (t.shape.size() != rank) {
    shape_error(std::string(what) + " must have rank " + std::to_string(rank) +
                ", got " + shape_to_string(t.shape));
  }
}

int64_t normalize_axis(int64_t axis, size_t rank) {
  const int64_t r = static_cast<int64_t>(rank);
  if (axis < -r || axis >= r) {
    shape_error("axis " + std::to_string(axis) + " out of range for rank " +
                std::to_string(rank));
  }
  return axis < 0 ? axis + r : axis;
}

// Result dtype of numeric computation over `in`: float wins over integer
// codes (dequantize on use), I32 bias operands are ignored next to I8.
DType numeric_dtype(std::span<const TensorSpec* const> in) {
  bool f32 = false, f16 = false, i8 = false, i32 = false;
  for (const TensorSpec* t : in) {
    switch (t->dtype) {
      case DType::kF32: f32 = true; break;
      case DType::kF16: f16 = true; break;
      case DType::kI8: i8 = true; break;
      case DType::kI32: i32 = true; break;
      case DType::kBool:
        dtype_error("BOOL operand to a numeric operator (tensor " +
                    std::to_string(t->id) + ")");
    }
  }
  if (f32 && f16) dtype_error("F32 and F16 operands mixed");
  if (f32) return DType::kF32;
  if (f16) return DType::kF16;
  if (i8) return DType::kI8;
  if (i32) return DType::kI32;
  return DType::kF32;
}

// All inputs share one dtype (movement ops over mixed dtypes fall back to the
// numeric rule).
DType passthrough_dtype(std::span<const TensorSpec* const> in) {
  const DType first = in.front()->dtype;
  for (const TensorSpec* t : in) {
    if (t->dtype != first) return numeric_dtype(in);
  }
  return first;
}

Shape broadcast_all(std::span<const TensorSpec* const> in) {
  Shape out = in.front()->shape;
  for (size_t i = 1; i < in.size(); ++i) {
    auto b = broadcast_shapes(out, in[i]->shape);
    if (!b) {
      shape_error("shapes " + shape_to_string(out) + " and " +
                  shape_to_string(in[i]->shape) + " do not broadcast");
    }
    out = *b;
  }
  return out;
}

int64_t window_out(int64_t in, int64_t k, int64_t stride, bool same,
                   int64_t* pad_before) {
  if (stride < 1) shape_error("stride must be >= 1");
  if (k < 1) shape_error("window must be >= 1");
  if (same) {
    const int64_t out = (in + stride - 1) / stride;
    const int64_t total = std::max<int64_t>((out - 1) * stride + k - in, 0);
    *pad_before = total / 2;
    return out;
  }
  if (in < k) {
    shape_error("window " + std::to_string(k) + " larger than input extent " +
                std::to_string(in) + " with VALID padding");
  }
  *pad_before = 0;
  return (in - k) / stride + 1;
}

bool same_padding(const Node& node) {
  const std::string p = node.attr_str("padding", "VALID");
  if (p == "SAME") return true;
  if (p == "VALID") return false;
  node_error("padding must be SAME or VALID, got '" + p + "'");
}

}  // namespace

ConvGeometry conv_geometry(const Node& node, const Shape& input,
                           const Shape& filter) {
  if (input.size() != 4) shape_error("conv/pool input must be NHWC rank 4");
  ConvGeometry g;
  g.batch = input[0];
  g.in_h = input[1];
  g.in_w = input[2];
  g.in_c = input[3];
  auto strides = node.attr_ints("strides");
  if (strides.empty()) strides = {1, 1};
  if (strides.size() != 2) node_error("strides must have two entries");
  g.stride_h = strides[0];
  g.stride_w = strides[1];

  if (node.op == OpKind::kMaxPool || node.op == OpKind::kAvgPool) {
    const auto ksize = node.attr_ints("ksize");
    if (ksize.size() != 2) node_error("pool ksize must have two entries");
    g.k_h = ksize[0];
    g.k_w = ksize[1];
    g.out_c = g.in_c;
  } else {
    if (filter.size() != 4) shape_error("filter must have rank 4");
    g.k_h = filter[0];
    g.k_w = filter[1];
    if (filter[2] != g.in_c) {
      shape_error("filter expects " + std::to_string(filter[2]) +
                  " input channels, input has " + std::to_string(g.in_c));
    }
    if (node.op == OpKind::kDepthwiseConv2D) {
      g.multiplier = filter[3];
      g.out_c = g.in_c * filter[3];
    } else {
      g.out_c = filter[3];
    }
  }
  const bool same = same_padding(node);
  g.out_h = window_out(g.in_h, g.k_h, g.stride_h, same, &g.pad_top);
  g.out_w = window_out(g.in_w, g.k_w, g.stride_w, same, &g.pad_left);
  return g;
}

std::vector<OutputType> infer_output_types(
    const Node& node, std::span<const TensorSpec* const> in,
    const Graph& owner) {
  switch (node.op) {
    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMul:
    case OpKind::kDiv: {
      expect_arity(in, 2, 2);
      return {{broadcast_all(in), numeric_dtype(in)}};
    }
    case OpKind::kGreater:
    case OpKind::kLessEqual: {
      expect_arity(in, 2, 2);
      numeric_dtype(in);
      return {{broadcast_all(in), DType::kBool}};
    }
    case OpKind::kNot: {
      expect_arity(in, 1, 1);
      if (in[0]->dtype != DType::kBool) dtype_error("Not expects a BOOL operand");
      return {{in[0]->shape, DType::kBool}};
    }
    case OpKind::kNeg:
    case OpKind::kExp:
    case OpKind::kSin:
    case OpKind::kRelu:
    case OpKind::kFakeQuant: {
      expect_arity(in, 1, 1);
      if (node.op == OpKind::kFakeQuant) {
        const int64_t bits = node.attr_int("bits", 8);
        if (bits < 2 || bits > 16) node_error("FakeQuant bits must be in [2,16]");
        if (!(node.attr_float("min", -1.0) < node.attr_float("max", 1.0))) {
          node_error("FakeQuant requires min < max");
        }
      }
      return {{in[0]->shape, numeric_dtype(in)}};
    }
    case OpKind::kSoftmax: {
      expect_arity(in, 1, 1);
      if (in[0]->shape.empty()) shape_error("Softmax needs rank >= 1");
      return {{in[0]->shape, numeric_dtype(in)}};
    }
    case OpKind::kAddN: {
      expect_arity(in, 1, 64);
      return {{broadcast_all(in), numeric_dtype(in)}};
    }
    case OpKind::kIdentity:
    case OpKind::kStopGradient: {
      expect_arity(in, 1, 1);
      return {{in[0]->shape, in[0]->dtype}};
    }
    case OpKind::kNoOp:
      return {};
    case OpKind::kQuantize: {
      expect_arity(in, 1, 1);
      if (!is_float(in[0]->dtype)) dtype_error("Quantize expects a float operand");
      return {{in[0]->shape, DType::kI8}};
    }
    case OpKind::kDequantize: {
      expect_arity(in, 1, 1);
      if (in[0]->dtype != DType::kI8 && in[0]->dtype != DType::kI32) {
        dtype_error("Dequantize expects an integer operand");
      }
      return {{in[0]->shape, DType::kF32}};
    }
    case OpKind::kConcat: {
      expect_arity(in, 1, 64);
      const size_t rank = in[0]->shape.size();
      if (rank == 0) shape_error("Concat of scalars");
      const int64_t axis = normalize_axis(node.attr_int("axis", 0), rank);
      Shape out = in[0]->shape;
      for (size_t i = 1; i < in.size(); ++i) {
        const Shape& s = in[i]->shape;
        if (s.size() != rank) shape_error("Concat operands differ in rank");
        for (size_t d = 0; d < rank; ++d) {
          if (static_cast<int64_t>(d) == axis) continue;
          if (s[d] != out[d]) {
            shape_error("Concat operands " + shape_to_string(out) + " and " +
                        shape_to_string(s) + " differ off the axis");
          }
        }
        out[axis] += s[axis];
      }
      return {{out, passthrough_dtype(in)}};
    }
    case OpKind::kSplit: {
      expect_arity(in, 1, 1);
      const Shape& s = in[0]->shape;
      if (s.empty()) shape_error("Split of a scalar");
      const int64_t axis = normalize_axis(node.attr_int("axis", 0), s.size());
      const int64_t parts = node.attr_int("num_splits", 2);
      if (parts < 1 || s[axis] % parts != 0) {
        shape_error("extent " + std::to_string(s[axis]) + " not divisible into " +
                    std::to_string(parts) + " splits");
      }
      Shape part = s;
      part[axis] /= parts;
      return std::vector<OutputType>(parts, OutputType{part, in[0]->dtype});
    }
    case OpKind::kTranspose: {
      expect_arity(in, 1, 1);
      const Shape& s = in[0]->shape;
      auto perm = node.attr_ints("perm");
      if (perm.empty()) {
        perm.resize(s.size());
        std::iota(perm.rbegin(), perm.rend(), 0);
      }
      if (perm.size() != s.size()) shape_error("perm length differs from rank");
      std::vector<int64_t> sorted = perm;
      std::sort(sorted.begin(), sorted.end());
      for (size_t i = 0; i < sorted.size(); ++i) {
        if (sorted[i] != static_cast<int64_t>(i)) node_error("perm is not a permutation");
      }
      Shape out(s.size());
      for (size_t i = 0; i < s.size(); ++i) out[i] = s[perm[i]];
      return {{out, in[0]->dtype}};
    }
    case OpKind::kReshape: {
      expect_arity(in, 1, 1);
      Shape out = node.attr_ints("shape");
      const int64_t total = element_count(in[0]->shape);
      int64_t known = 1;
      int infer_at = -1;
      for (size_t i = 0; i < out.size(); ++i) {
        if (out[i] == -1) {
          if (infer_at >= 0) node_error("Reshape with more than one -1");
          infer_at = static_cast<int>(i);
        } else if (out[i] < 1) {
          shape_error("Reshape extent must be >= 1 or -1");
        } else {
          known *= out[i];
        }
      }
      if (infer_at >= 0) {
        if (total % known != 0) shape_error("Reshape cannot infer -1 extent");
        out[infer_at] = total / known;
      }
      if (element_count(out) != total) {
        shape_error("Reshape " + shape_to_string(in[0]->shape) + " to " +
                    shape_to_string(out) + " changes the element count");
      }
      if (out.size() > kMaxRank) shape_error("Reshape target rank > 4");
      return {{out, in[0]->dtype}};
    }
    case OpKind::kReverse: {
      expect_arity(in, 1, 1);
      for (int64_t a : node.attr_ints("axes")) normalize_axis(a, in[0]->shape.size());
      return {{in[0]->shape, in[0]->dtype}};
    }
    case OpKind::kShuffle: {
      expect_arity(in, 1, 1);
      const Shape& s = in[0]->shape;
      const int64_t groups = node.attr_int("groups", 1);
      if (groups < 1) node_error("Shuffle groups must be >= 1");
      if (s.size() >= 2 && s.back() % groups != 0) {
        shape_error("Shuffle groups do not divide the channel extent");
      }
      return {{s, in[0]->dtype}};
    }
    case OpKind::kSqueeze: {
      expect_arity(in, 1, 1);
      const Shape& s = in[0]->shape;
      std::set<int64_t> axes;
      for (int64_t a : node.attr_ints("axes")) axes.insert(normalize_axis(a, s.size()));
      Shape out;
      for (size_t d = 0; d < s.size(); ++d) {
        const bool listed = axes.count(static_cast<int64_t>(d)) > 0;
        if (listed && s[d] != 1) shape_error("Squeeze of a non-unit axis");
        if (s[d] == 1 && (axes.empty() || listed)) continue;
        out.push_back(s[d]);
      }
      return {{out, in[0]->dtype}};
    }
    case OpKind::kPad: {
      expect_arity(in, 1, 1);
      const Shape& s = in[0]->shape;
      const auto pads = node.attr_ints("paddings");
      if (pads.size() != 2 * s.size()) shape_error("paddings must have 2*rank entries");
      Shape out = s;
      for (size_t d = 0; d < s.size(); ++d) {
        if (pads[2 * d] < 0 || pads[2 * d + 1] < 0) shape_error("negative padding");
        out[d] += pads[2 * d] + pads[2 * d + 1];
      }
      return {{out, in[0]->dtype}};
    }
    case OpKind::kTile: {
      expect_arity(in, 1, 1);
      const Shape& s = in[0]->shape;
      const auto mult = node.attr_ints("multiples");
      if (mult.size() != s.size()) shape_error("multiples must have rank entries");
      Shape out = s;
      for (size_t d = 0; d < s.size(); ++d) {
        if (mult[d] < 1) shape_error("multiples must be >= 1");
        out[d] *= mult[d];
      }
      return {{out, in[0]->dtype}};
    }
    case OpKind::kSlice: {
      expect_arity(in, 1, 1);
      const Shape& s = in[0]->shape;
      const auto begin = node.attr_ints("begin");
      auto size = node.attr_ints("size");
      if (begin.size() != s.size() || size.size() != s.size()) {
        shape_error("Slice begin/size must have rank entries");
      }
      Shape out(s.size());
      for (size_t d = 0; d < s.size(); ++d) {
        const int64_t len = size[d] == -1 ? s[d] - begin[d] : size[d];
        if (begin[d] < 0 || len < 1 || begin[d] + len > s[d]) {
          shape_error("Slice window out of range on axis " + std::to_string(d));
        }
        out[d] = len;
      }
      return {{out, in[0]->dtype}};
    }
    case OpKind::kConv2D:
    case OpKind::kDepthwiseConv2D:
    case OpKind::kFusedConvBnBias: {
      if (node.op == OpKind::kFusedConvBnBias) {
        expect_arity(in, 3, 3);
      } else {
        expect_arity(in, 2, 3);
      }
      expect_rank(*in[0], 4, "conv input");
      expect_rank(*in[1], 4, "conv filter");
      const ConvGeometry g = conv_geometry(node, in[0]->shape, in[1]->shape);
      if (in.size() == 3) {
        if (in[2]->shape != Shape{g.out_c}) {
          shape_error("conv bias must have shape [" + std::to_string(g.out_c) + "]");
        }
      }
      return {{{g.batch, g.out_h, g.out_w, g.out_c}, numeric_dtype(in)}};
    }
    case OpKind::kMatMul: {
      expect_arity(in, 2, 2);
      expect_rank(*in[0], 2, "MatMul lhs");
      expect_rank(*in[1], 2, "MatMul rhs");
      if (in[0]->shape[1] != in[1]->shape[0]) {
        shape_error("MatMul inner extents " + shape_to_string(in[0]->shape) + " x " +
                    shape_to_string(in[1]->shape) + " differ");
      }
      return {{{in[0]->shape[0], in[1]->shape[1]}, numeric_dtype(in)}};
    }
    case OpKind::kBiasAdd: {
      expect_arity(in, 2, 2);
      const Shape& s = in[0]->shape;
      if (s.empty()) shape_error("BiasAdd on a scalar");
      if (in[1]->shape != Shape{s.back()}) {
        shape_error("BiasAdd bias must have shape [" + std::to_string(s.back()) + "]");
      }
      return {{s, numeric_dtype(in)}};
    }
    case OpKind::kFusedBatchNorm: {
      expect_arity(in, 5, 5);
      const Shape& s = in[0]->shape;
      if (s.empty()) shape_error("FusedBatchNorm on a scalar");
      for (size_t i = 1; i < 5; ++i) {
        if (in[i]->shape != Shape{s.back()}) {
          shape_error("batch-norm parameters must have shape [" +
                      std::to_string(s.back()) + "]");
        }
      }
      if (node.attr_float("epsilon", 1e-3) < 0.0) node_error("negative epsilon");
      return {{s, numeric_dtype(in)}};
    }
    case OpKind::kMaxPool:
    case OpKind::kAvgPool: {
      expect_arity(in, 1, 1);
      expect_rank(*in[0], 4, "pool input");
      const ConvGeometry g = conv_geometry(node, in[0]->shape, {});
      return {{{g.batch, g.out_h, g.out_w, g.out_c}, in[0]->dtype}};
    }
    case OpKind::kLoop: {
      const int64_t trip = node.attr_int("trip_count", -1);
      if (trip < 0) node_error("Loop requires trip_count >= 0");
      const int64_t body_index = node.attr_int("body", -1);
      if (body_index < 0 || body_index >= static_cast<int64_t>(owner.subgraphs.size())) {
        node_error("Loop references missing body subgraph " + std::to_string(body_index));
      }
      const Graph& body = owner.subgraphs[body_index];
      const int64_t carried = node.attr_int("num_carried", static_cast<int64_t>(in.size()));
      if (carried < 0 || carried > static_cast<int64_t>(in.size())) {
        node_error("Loop num_carried out of range");
      }
      if (body.inputs.size() != in.size()) {
        node_error("Loop body takes " + std::to_string(body.inputs.size()) +
                   " inputs, node supplies " + std::to_string(in.size()));
      }
      if (body.outputs.size() != static_cast<size_t>(carried)) {
        node_error("Loop body must yield one output per carried value");
      }
      auto body_spec = [&](TensorId id) {
        const TensorSpec* t = body.find_tensor(id);
        if (!t) node_error("Loop body references unknown tensor");
        return t;
      };
      for (size_t i = 0; i < in.size(); ++i) {
        const TensorSpec* b = body_spec(body.inputs[i]);
        if (b->shape != in[i]->shape) shape_error("Loop input shape differs from body");
        if (b->dtype != in[i]->dtype) dtype_error("Loop input dtype differs from body");
      }
      std::vector<OutputType> out;
      for (int64_t i = 0; i < carried; ++i) {
        const TensorSpec* b = body_spec(body.outputs[i]);
        if (b->shape != in[i]->shape) {
          shape_error("Loop carried value changes shape across iterations");
        }
        if (b->dtype != in[i]->dtype) {
          dtype_error("Loop carried value changes dtype across iterations");
        }
        out.push_back({in[i]->shape, in[i]->dtype});
      }
      return out;
    }
  }
  throw Error(ErrorCode::kUnsupportedOp, "no shape rule for op");
}

}  // namespace noptc
