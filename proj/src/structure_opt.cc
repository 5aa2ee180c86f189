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

#include "noptc/structure_opt.h"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "noptc/arith_simplify.h"
#include "noptc/graph_utils.h"

namespace noptc {
namespace {

// Gives every node listing `id` as a control dependency the deps of `id`
// instead.
void splice_control(Graph& g, NodeId id) {
  const std::vector<NodeId> deps = g.find_node(id)->control_deps;
  for (Node& m : g.nodes) {
    auto it = std::find(m.control_deps.begin(), m.control_deps.end(), id);
    if (it == m.control_deps.end()) continue;
    m.control_deps.erase(it);
    for (NodeId d : deps) {
      if (d != m.id) m.control_deps.push_back(d);
    }
    normalize_control_deps(m.control_deps);
  }
}

// Drops subgraphs no Loop refers to and renumbers the rest.
void compact_subgraphs(Graph& g) {
  std::vector<int64_t> remap(g.subgraphs.size(), -1);
  std::vector<Graph> kept;
  for (const Node& n : g.nodes) {
    if (n.op != OpKind::kLoop) continue;
    const int64_t b = n.attr_int("body", -1);
    if (b >= 0 && b < static_cast<int64_t>(remap.size()) && remap[b] < 0) {
      remap[b] = static_cast<int64_t>(kept.size());
      kept.push_back(std::move(g.subgraphs[b]));
    }
  }
  for (Node& n : g.nodes) {
    if (n.op == OpKind::kLoop) n.attrs["body"] = remap[n.attr_int("body")];
  }
  g.subgraphs = std::move(kept);
}

void dead_branches_in_place(Graph& g) {
  const GraphIndex index(g);
  std::unordered_set<NodeId> live;
  std::vector<NodeId> stack;
  auto mark = [&](NodeId id) {
    if (live.insert(id).second) stack.push_back(id);
  };
  for (TensorId t : g.outputs) {
    if (auto p = index.producer_of(t)) mark(*p);
  }
  for (const Node& n : g.nodes) {
    if (n.preserved()) mark(n.id);
  }
  while (!stack.empty()) {
    const Node& n = *g.find_node(stack.back());
    stack.pop_back();
    for (TensorId t : n.inputs) {
      if (auto p = index.producer_of(t)) mark(*p);
    }
    for (NodeId d : n.control_deps) mark(d);
  }
  std::erase_if(g.nodes, [&](const Node& n) { return !live.count(n.id); });
  for (Graph& sub : g.subgraphs) dead_branches_in_place(sub);
  g = garbage_collect(g);
}

void drop_zero_trip(Graph& g, const Node& loop) {
  for (size_t k = 0; k < loop.outputs.size(); ++k) {
    replace_uses(g, loop.outputs[k], loop.inputs[k]);
  }
  splice_control(g, loop.id);
  remove_node(g, loop.id);
}

void inline_single_trip(Graph& g, const Node& loop) {
  const Graph body = g.subgraphs[loop.attr_int("body")];
  std::unordered_map<TensorId, TensorId> tmap;
  for (size_t i = 0; i < body.inputs.size(); ++i) tmap[body.inputs[i]] = loop.inputs[i];
  for (const ConstData& c : body.constants) {
    const TensorSpec& s = *body.find_tensor(c.tensor_id);
    const TensorId t = add_tensor(g, s.shape, s.dtype, "", s.quant);
    g.constants.push_back({t, c.payload});
    tmap[c.tensor_id] = t;
  }
  const int64_t offset = static_cast<int64_t>(g.subgraphs.size());
  for (const Graph& sub : body.subgraphs) g.subgraphs.push_back(sub);
  std::unordered_map<NodeId, NodeId> nmap;
  std::vector<NodeId> inlined;
  for (NodeId id : topo_sort(body)) {
    const Node& bn = *body.find_node(id);
    std::vector<TensorId> ins, outs;
    for (TensorId t : bn.inputs) ins.push_back(tmap.at(t));
    for (TensorId t : bn.outputs) {
      const TensorSpec& s = *body.find_tensor(t);
      tmap[t] = add_tensor(g, s.shape, s.dtype, "", s.quant);
      outs.push_back(tmap[t]);
    }
    Attrs attrs = bn.attrs;
    if (bn.op == OpKind::kLoop) attrs["body"] = bn.attr_int("body") + offset;
    const NodeId nid = add_node(g, bn.op, ins, outs, attrs);
    nmap[id] = nid;
    inlined.push_back(nid);
  }
  for (const Node& bn : body.nodes) {
    Node& n = *g.find_node(nmap.at(bn.id));
    for (NodeId d : bn.control_deps) n.control_deps.push_back(nmap.at(d));
    for (NodeId d : loop.control_deps) n.control_deps.push_back(d);
    normalize_control_deps(n.control_deps);
  }
  for (Node& m : g.nodes) {
    auto it = std::find(m.control_deps.begin(), m.control_deps.end(), loop.id);
    if (it == m.control_deps.end()) continue;
    m.control_deps.erase(it);
    m.control_deps.insert(m.control_deps.end(), inlined.begin(), inlined.end());
    normalize_control_deps(m.control_deps);
  }
  for (size_t k = 0; k < loop.outputs.size(); ++k) {
    replace_uses(g, loop.outputs[k], tmap.at(body.outputs[k]));
  }
  remove_node(g, loop.id);
}

void identity_noop_in_place(Graph& g, const StructureOptions& options) {
  for (Graph& sub : g.subgraphs) identity_noop_in_place(sub, options);
  bool changed = true;
  while (changed) {
    changed = false;
    const GraphIndex index(g);
    for (const Node& n : g.nodes) {
      if (n.preserved()) continue;
      if (n.op != OpKind::kIdentity && n.op != OpKind::kStopGradient &&
          n.op != OpKind::kNoOp) {
        continue;
      }
      const auto dependents = index.control_dependents.find(n.id);
      const int64_t ctrl_out =
          dependents == index.control_dependents.end() ? 0 : dependents->second.size();
      const int64_t ctrl_in = static_cast<int64_t>(n.control_deps.size());
      const NodeId id = n.id;
      if (n.op == OpKind::kNoOp) {
        if (ctrl_in * ctrl_out > ctrl_in + ctrl_out) continue;
        splice_control(g, id);
        remove_node(g, id);
        changed = true;
        break;
      }
      const TensorId in = n.inputs[0], out = n.outputs[0];
      if (n.op == OpKind::kIdentity) {
        int64_t fan_in = 1, fan_out = static_cast<int64_t>(index.use_count(out)) + g.is_output(out);
        if (options.count_control_edges) {
          fan_in += ctrl_in;
          fan_out += ctrl_out;
        }
        if (fan_in * fan_out > fan_in + fan_out) continue;
      }
      if (g.is_output(out) && (g.is_input(in) || g.is_output(in))) {
        // The output needs its own tensor; a StopGradient degrades to Identity.
        if (n.op == OpKind::kStopGradient) {
          g.find_node(id)->op = OpKind::kIdentity;
          changed = true;
          break;
        }
        continue;
      }
      splice_control(g, id);
      replace_uses(g, out, in);
      remove_node(g, id);
      changed = true;
      break;
    }
  }
  g = garbage_collect(g);
}

// Bit-set transitive closure over data and control edges.
void reduce_controls_in_place(Graph& g) {
  for (Graph& sub : g.subgraphs) reduce_controls_in_place(sub);
  const GraphIndex index(g);
  const std::vector<NodeId> order = topo_sort(g);
  const size_t n = order.size();
  std::unordered_map<NodeId, size_t> pos;
  for (size_t i = 0; i < n; ++i) pos[order[i]] = i;
  std::vector<std::vector<size_t>> succ(n);
  std::vector<std::unordered_set<size_t>> data_succ(n);
  for (const Node& node : g.nodes) {
    for (TensorId t : node.inputs) {
      if (auto p = index.producer_of(t)) {
        succ[pos[*p]].push_back(pos[node.id]);
        data_succ[pos[*p]].insert(pos[node.id]);
      }
    }
    for (NodeId d : node.control_deps) succ[pos[d]].push_back(pos[node.id]);
  }
  std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
  for (size_t i = n; i-- > 0;) {
    for (size_t s : succ[i]) {
      reach[i][s] = true;
      for (size_t k = 0; k < n; ++k) {
        if (reach[s][k]) reach[i][k] = true;
      }
    }
  }
  for (Node& node : g.nodes) {
    const size_t c = pos[node.id];
    std::erase_if(node.control_deps, [&](NodeId d) {
      const size_t a = pos[d];
      if (data_succ[a].count(c)) return true;
      for (size_t s : succ[a]) {
        if (s != c && reach[s][c]) return true;
      }
      return false;
    });
  }
}

struct ChainParts {
  const Node* conv = nullptr;
  const Node* bn = nullptr;
  const Node* bias_add = nullptr;
  bool bias_first = false;
};

[[noreturn]] void not_fusable(NodeId conv, const std::string& why) {
  throw Error(ErrorCode::kNotFusable, "conv node " + std::to_string(conv) + ": " + why);
}

std::vector<double> constant_f32(const Graph& g, TensorId t, NodeId conv, const char* what) {
  if (!is_constant(g, t) || g.find_tensor(t)->dtype != DType::kF32) {
    not_fusable(conv, std::string(what) + " is not a float constant");
  }
  return *constant_values(g, t);
}

}  // namespace

Graph remove_dead_branches(const Graph& graph) {
  Graph g = validated(graph);
  dead_branches_in_place(g);
  return g;
}

Graph optimize_loops(const Graph& graph) {
  Graph g = validated(graph);
  bool changed = true;
  while (changed) {
    changed = false;
    for (NodeId id : topo_sort(g)) {
      const Node loop = *g.find_node(id);
      if (loop.op != OpKind::kLoop || loop.preserved()) continue;
      const int64_t trip = loop.attr_int("trip_count");
      if (trip == 0) {
        drop_zero_trip(g, loop);
      } else if (trip == 1) {
        inline_single_trip(g, loop);
      } else {
        continue;
      }
      changed = true;
      break;
    }
  }
  compact_subgraphs(g);
  g = validated(garbage_collect(g));
  return hoist_loop_invariants(g);
}

Graph remove_identity_noop(const Graph& graph, const StructureOptions& options) {
  Graph g = validated(graph);
  identity_noop_in_place(g, options);
  return validated(g);
}

Graph transitive_reduce_controls(const Graph& graph) {
  Graph g = validated(graph);
  reduce_controls_in_place(g);
  return g;
}

Graph fuse_conv_bn_bias_at(const Graph& graph, NodeId conv_id) {
  Graph g = validated(graph);
  const GraphIndex index(g);
  const Node* conv = g.find_node(conv_id);
  if (!conv || conv->op != OpKind::kConv2D) not_fusable(conv_id, "not a Conv2D");
  auto blocked = [&](const Node& n) { return n.preserved() || index.has_control_edges(n.id, g); };
  auto next = [&](TensorId t) -> const Node* {
    if (index.use_count(t) != 1 || g.is_output(t)) return nullptr;
    return g.find_node(index.consumers.at(t).front());
  };
  ChainParts parts;
  parts.conv = conv;
  const Node* first = next(conv->outputs[0]);
  if (!first) not_fusable(conv_id, "conv output has other consumers or is a graph output");
  if (first->op == OpKind::kFusedBatchNorm) {
    parts.bn = first;
    const Node* second = next(first->outputs[0]);
    if (second && second->op == OpKind::kBiasAdd && !blocked(*second) &&
        is_constant(g, second->inputs[1])) {
      parts.bias_add = second;
    }
  } else if (first->op == OpKind::kBiasAdd) {
    parts.bias_add = first;
    parts.bias_first = true;
    const Node* second = next(first->outputs[0]);
    if (!second || second->op != OpKind::kFusedBatchNorm) {
      not_fusable(conv_id, "BiasAdd is not followed by a private FusedBatchNorm");
    }
    parts.bn = second;
  } else {
    not_fusable(conv_id, "conv is not followed by batch normalization");
  }
  for (const Node* n : {parts.conv, parts.bn, parts.bias_add}) {
    if (n && blocked(*n)) not_fusable(conv_id, "chain carries control edges or is preserved");
  }
  const TensorSpec& wspec = *g.find_tensor(conv->inputs[1]);
  const std::vector<double> w = constant_f32(g, conv->inputs[1], conv_id, "filter");
  const int64_t out_c = wspec.shape[3];
  std::vector<double> b0(out_c, 0.0);
  if (conv->inputs.size() > 2) b0 = constant_f32(g, conv->inputs[2], conv_id, "conv bias");
  const auto gamma = constant_f32(g, parts.bn->inputs[1], conv_id, "scale");
  const auto beta = constant_f32(g, parts.bn->inputs[2], conv_id, "offset");
  const auto mean = constant_f32(g, parts.bn->inputs[3], conv_id, "mean");
  const auto var = constant_f32(g, parts.bn->inputs[4], conv_id, "variance");
  std::vector<double> bias(out_c, 0.0);
  if (parts.bias_add) bias = constant_f32(g, parts.bias_add->inputs[1], conv_id, "bias");
  const double eps = parts.bn->attr_float("epsilon", 1e-3);

  std::vector<double> scale(out_c), fused_bias(out_c);
  for (int64_t o = 0; o < out_c; ++o) {
    scale[o] = gamma[o] / std::sqrt(var[o] + eps);
    if (parts.bias_first) {
      fused_bias[o] = scale[o] * (b0[o] + bias[o] - mean[o]) + beta[o];
    } else {
      fused_bias[o] = scale[o] * (b0[o] - mean[o]) + beta[o] + bias[o];
    }
  }
  std::vector<double> fused_w(w.size());
  for (size_t i = 0; i < w.size(); ++i) fused_w[i] = w[i] * scale[i % out_c];

  const Node conv_copy = *parts.conv;
  const NodeId bn_id = parts.bn->id;
  const bool has_bias_add = parts.bias_add != nullptr;
  const NodeId ba_id = has_bias_add ? parts.bias_add->id : bn_id;
  const TensorId last_out = parts.bias_first || !parts.bias_add ? parts.bn->outputs[0]
                                                                : parts.bias_add->outputs[0];
  const TensorId wt = add_constant(g, wspec.shape, DType::kF32, fused_w);
  const TensorId bt = add_constant(g, {out_c}, DType::kF32, fused_bias);
  const TensorId y = emit1(g, OpKind::kFusedConvBnBias, {conv_copy.inputs[0], wt, bt},
                           conv_copy.attrs);
  replace_uses(g, last_out, y);
  if (has_bias_add) remove_node(g, ba_id);
  remove_node(g, bn_id);
  remove_node(g, conv_copy.id);
  return validated(garbage_collect(g));
}

Graph fuse_conv_bn_bias(const Graph& graph) {
  Graph g = validated(graph);
  for (NodeId id : topo_sort(g)) {
    const Node* n = g.find_node(id);
    if (!n || n->op != OpKind::kConv2D) continue;
    try {
      g = fuse_conv_bn_bias_at(g, id);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNotFusable) throw;
    }
  }
  return g;
}

const std::vector<std::string>& structure_pass_names() {
  static const std::vector<std::string> names = {"dead", "loops", "identity", "ctrl-reduce",
                                                 "fuse"};
  return names;
}

StructureResult run_structure_passes(const Graph& graph, const std::vector<std::string>& names,
                                     const StructureOptions& options) {
  StructureResult result;
  Graph g = validated(graph);
  for (const std::string& name : names) {
    PassReport report;
    report.name = name;
    record_before(report, g);
    if (name == "dead") {
      g = remove_dead_branches(g);
    } else if (name == "loops") {
      g = optimize_loops(g);
    } else if (name == "identity") {
      g = remove_identity_noop(g, options);
    } else if (name == "ctrl-reduce") {
      g = transitive_reduce_controls(g);
    } else if (name == "fuse") {
      g = fuse_conv_bn_bias(g);
    } else {
      throw Error(ErrorCode::kUnknownRule, "unknown structural pass '" + name + "'");
    }
    record_after(report, g);
    result.reports.push_back(std::move(report));
  }
  result.graph = std::move(g);
  return result;
}

}  // namespace noptc
