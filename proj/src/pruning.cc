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

#include "noptc/pruning.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_map>

#include "noptc/graph_utils.h"
#include "noptc/status.h"

namespace noptc {
namespace {

bool has_weight_operand(OpKind op) { return is_conv_like(op) || op == OpKind::kMatMul; }

bool is_activation_site(OpKind op) { return has_weight_operand(op) || op == OpKind::kRelu; }

Attrs fake_quant_attrs(int bits, double lo, double hi) {
  if (!(hi > lo)) {
    const double r = std::max({std::abs(lo), std::abs(hi), 1e-8});
    lo = -r;
    hi = r;
  }
  return {{"bits", int64_t{bits}}, {"min", lo}, {"max", hi}};
}

}  // namespace

void SparsitySchedule::check() const {
  const bool ok = s_initial >= 0.0 && s_initial < 1.0 && s_final > 0.0 && s_final <= 1.0 &&
                  s_final >= s_initial && delta_t >= 1 && span_steps >= 0 &&
                  span_steps % delta_t == 0 && t0 >= 0 && exponent > 0.0;
  if (!ok) throw Error(ErrorCode::kInvalidArgument, "inconsistent sparsity schedule");
}

bool SparsitySchedule::is_update_step(int64_t t) const {
  return t >= t0 && t <= last_update_step() && (t - t0) % delta_t == 0;
}

double sparsity_at(const SparsitySchedule& s, int64_t t) {
  if (t <= s.t0) return s.s_initial;
  if (s.span_steps == 0 || t >= s.t0 + s.span_steps) return s.s_final;
  const double frac = 1.0 - static_cast<double>(t - s.t0) / static_cast<double>(s.span_steps);
  const double v = s.s_final + (s.s_initial - s.s_final) * std::pow(frac, s.exponent);
  return std::clamp(v, s.s_initial, s.s_final);
}

double mask_sparsity(std::span<const uint8_t> mask) {
  if (mask.empty()) return 0.0;
  const auto zeros = std::count(mask.begin(), mask.end(), uint8_t{0});
  return static_cast<double>(zeros) / static_cast<double>(mask.size());
}

Mask update_mask(std::span<const double> weights, std::span<const uint8_t> mask, double target) {
  const int64_t n = static_cast<int64_t>(weights.size());
  Mask out(mask.begin(), mask.end());
  if (out.empty()) out.assign(n, 1);
  if (static_cast<int64_t>(out.size()) != n) {
    throw Error(ErrorCode::kShapeMismatch, "mask and weights differ in size");
  }
  // The small epsilon keeps products like 0.3 * 10 from rounding up a whole entry.
  const int64_t want =
      std::clamp<int64_t>(static_cast<int64_t>(std::ceil(std::clamp(target, 0.0, 1.0) * n - 1e-9)),
                          0, n);
  int64_t pruned = std::count(out.begin(), out.end(), uint8_t{0});
  if (pruned >= want) return out;
  std::vector<int64_t> alive;
  for (int64_t i = 0; i < n; ++i) {
    if (out[i]) alive.push_back(i);
  }
  std::stable_sort(alive.begin(), alive.end(), [&](int64_t a, int64_t b) {
    return std::abs(weights[a]) < std::abs(weights[b]);
  });
  for (int64_t i : alive) {
    if (pruned >= want) break;
    out[i] = 0;
    ++pruned;
  }
  return out;
}

std::vector<TensorId> prunable_weights(const Graph& graph) {
  std::vector<TensorId> out;
  for (const Node& n : graph.nodes) {
    if (!has_weight_operand(n.op) || n.inputs.size() < 2) continue;
    const TensorId w = n.inputs[1];
    if (is_constant(graph, w) && is_float(graph.find_tensor(w)->dtype) &&
        std::find(out.begin(), out.end(), w) == out.end()) {
      out.push_back(w);
    }
  }
  return out;
}

MaskSet update_masks(const Graph& graph, const MaskSet& masks, double target) {
  MaskSet out;
  for (TensorId w : prunable_weights(graph)) {
    const auto it = masks.find(w);
    const Mask empty;
    out[w] = update_mask(*constant_real_values(graph, w), it == masks.end() ? empty : it->second,
                         target);
  }
  return out;
}

Graph apply_masks(const Graph& graph, const MaskSet& masks) {
  Graph g = graph;
  for (const auto& [t, mask] : masks) {
    std::vector<double> v = *constant_real_values(g, t);
    if (v.size() != mask.size()) {
      throw Error(ErrorCode::kShapeMismatch, "mask size differs from tensor " + std::to_string(t));
    }
    for (size_t i = 0; i < v.size(); ++i) {
      if (!mask[i]) v[i] = 0.0;
    }
    set_constant_values(g, t, v);
  }
  return g;
}

Graph insert_fake_quant(const Graph& graph, int bits, const std::vector<TensorMap>& calibration) {
  if (bits < 2 || bits > 8) {
    throw Error(ErrorCode::kInvalidArgument, "fake-quant bits must be in [2, 8]");
  }
  Graph g = validated(graph);
  std::unordered_map<TensorId, std::pair<double, double>> ranges;
  for (const TensorMap& sample : calibration) {
    for (const auto& [id, value] : trace(g, sample)) {
      const auto [lo, hi] = std::minmax_element(value.data.begin(), value.data.end());
      if (lo == value.data.end()) continue;
      auto [it, fresh] = ranges.try_emplace(id, *lo, *hi);
      if (!fresh) {
        it->second.first = std::min(it->second.first, *lo);
        it->second.second = std::max(it->second.second, *hi);
      }
    }
  }
  std::unordered_map<TensorId, TensorId> weight_fq;
  for (NodeId id : topo_sort(g)) {
    const Node node = *g.find_node(id);
    if (!is_activation_site(node.op)) continue;
    if (has_weight_operand(node.op) && node.inputs.size() > 1) {
      const TensorId w = node.inputs[1];
      if (is_constant(g, w) && g.find_tensor(w)->dtype == DType::kF32) {
        auto it = weight_fq.find(w);
        if (it == weight_fq.end()) {
          const auto v = *constant_values(g, w);
          const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
          it = weight_fq
                   .emplace(w, emit1(g, OpKind::kFakeQuant, {w}, fake_quant_attrs(bits, *lo, *hi)))
                   .first;
        }
        g.find_node(id)->inputs[1] = it->second;
      }
    }
    const TensorId out = node.outputs[0];
    if (g.find_tensor(out)->dtype != DType::kF32) continue;
    const auto r = ranges.find(out);
    const double lo = r == ranges.end() ? -1.0 : r->second.first;
    const double hi = r == ranges.end() ? 1.0 : r->second.second;
    // Emit against a placeholder input, then retarget readers of `out`.
    const TensorId fq = emit1(g, OpKind::kFakeQuant, {out}, fake_quant_attrs(bits, lo, hi));
    const NodeId fq_node = g.nodes.back().id;
    for (Node& m : g.nodes) {
      if (m.id == fq_node) continue;
      for (TensorId& t : m.inputs) {
        if (t == out) t = fq;
      }
    }
    for (TensorId& t : g.outputs) {
      if (t != out) continue;
      t = fq;
      TensorSpec& src = *g.find_tensor(out);
      g.find_tensor(fq)->name = src.name;
      src.name.clear();
    }
  }
  return validated(g);
}

}  // namespace noptc
