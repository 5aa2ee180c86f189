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

#include "noptc/arith_simplify.h"

#include <algorithm>
#include <map>
#include <unordered_set>

#include "noptc/graph_utils.h"
#include "noptc/interpreter.h"

namespace noptc {
namespace {

constexpr int64_t kMaxFoldElements = 1 << 16;

bool arith_dtype(DType d) {
  return d == DType::kF32 || d == DType::kF16 || d == DType::kI32;
}

// Runs `node` (whose inputs are constants of `g`) in isolation.
std::vector<TensorValue> evaluate_node(const Graph& g, const Node& node) {
  Graph m;
  m.next_tensor_id = g.next_tensor_id;
  m.next_node_id = g.next_node_id;
  if (node.op == OpKind::kLoop) m.subgraphs = g.subgraphs;
  std::unordered_set<TensorId> seen;
  for (TensorId t : node.inputs) {
    if (!seen.insert(t).second) continue;
    TensorSpec spec = *g.find_tensor(t);
    spec.name.clear();
    m.tensors.push_back(spec);
    m.constants.push_back(*g.find_constant(t));
  }
  for (size_t k = 0; k < node.outputs.size(); ++k) {
    TensorSpec spec = *g.find_tensor(node.outputs[k]);
    spec.name = "o" + std::to_string(k);
    m.tensors.push_back(spec);
    m.outputs.push_back(spec.id);
  }
  Node copy = node;
  copy.control_deps.clear();
  m.nodes.push_back(copy);
  const RunResult r = run(m, {});
  std::vector<TensorValue> out;
  for (size_t k = 0; k < node.outputs.size(); ++k) {
    out.push_back(r.outputs.at("o" + std::to_string(k)));
  }
  return out;
}

TensorId constant_from(Graph& g, const TensorSpec& spec, const TensorValue& v) {
  return add_constant(g, spec.shape, spec.dtype, v.data, spec.quant);
}

// Deletes seed nodes whose outputs are unused, then their newly dead producers.
void remove_dead_from(Graph& g, std::vector<NodeId> seeds) {
  while (!seeds.empty()) {
    const NodeId id = seeds.back();
    seeds.pop_back();
    const Node* n = g.find_node(id);
    if (!n || n->outputs.empty()) continue;
    if (!std::all_of(n->outputs.begin(), n->outputs.end(),
                     [&](TensorId t) { return is_unused(g, t); })) {
      continue;
    }
    const bool has_dependents = std::any_of(g.nodes.begin(), g.nodes.end(), [&](const Node& m) {
      return std::find(m.control_deps.begin(), m.control_deps.end(), id) != m.control_deps.end();
    });
    if (has_dependents) continue;
    const GraphIndex index(g);
    for (TensorId t : n->inputs) {
      if (auto p = index.producer_of(t)) seeds.push_back(*p);
    }
    remove_node(g, id);
  }
}

void replace_output(Graph& g, NodeId anchor, TensorId old_out, TensorId new_t) {
  replace_uses(g, old_out, new_t);
  remove_dead_from(g, {anchor});
}

struct Ctx {
  Graph& g;
  GraphIndex index;
  const std::set<NodeId>& skip;

  Ctx(Graph& graph, const std::set<NodeId>& s) : g(graph), index(graph), skip(s) {}

  const TensorSpec& spec(TensorId t) const { return *g.find_tensor(t); }
  const Node* producer(TensorId t) const {
    auto p = index.producer_of(t);
    return p ? g.find_node(*p) : nullptr;
  }
  bool rewritable(const Node& n) const {
    return !n.preserved() && !index.has_control_edges(n.id, g);
  }
  bool anchor_ok(const Node& n) const { return !skip.count(n.id) && rewritable(n); }
  // Exactly one consumer and not a graph output.
  bool private_use(TensorId t) const { return index.use_count(t) == 1 && !g.is_output(t); }
  // Produced by a rewritable node of kind `op` and used once.
  const Node* inner(TensorId t, OpKind op) const {
    const Node* p = producer(t);
    if (!p || p->op != op || !rewritable(*p) || !private_use(t)) return nullptr;
    return p;
  }
  const Node* sole_consumer(TensorId t) const {
    if (!private_use(t)) return nullptr;
    return g.find_node(index.consumers.at(t).front());
  }
  bool constant(TensorId t) const { return is_constant(g, t); }
  std::vector<NodeId> order() const { return topo_sort(g); }
};

// ---- fold ----

bool fold_all_constant(Ctx& c, const Node& n) {
  if (n.inputs.empty() || n.outputs.empty()) return false;
  for (TensorId t : n.inputs) {
    if (!c.constant(t)) return false;
  }
  int64_t elements = 0;
  for (TensorId t : n.outputs) elements += element_count(c.spec(t).shape);
  if (elements > kMaxFoldElements) return false;
  const std::vector<TensorValue> values = evaluate_node(c.g, n);
  const Node copy = n;
  std::vector<TensorId> consts;
  for (size_t k = 0; k < copy.outputs.size(); ++k) {
    consts.push_back(constant_from(c.g, *c.g.find_tensor(copy.outputs[k]), values[k]));
  }
  for (size_t k = 0; k < copy.outputs.size(); ++k) replace_uses(c.g, copy.outputs[k], consts[k]);
  remove_dead_from(c.g, {copy.id});
  // Outputs nobody reads any more still belong to the folded node.
  if (c.g.find_node(copy.id)) remove_node(c.g, copy.id);
  return true;
}

// Sub(c0, Sub(x, c1)) -> Sub(c0 + c1, x).
bool fold_nested_sub(Ctx& c, const Node& n) {
  if (n.op != OpKind::kSub || !c.constant(n.inputs[0])) return false;
  const Node* in = c.inner(n.inputs[1], OpKind::kSub);
  if (!in || c.constant(in->inputs[0]) || !c.constant(in->inputs[1])) return false;
  const TensorId c0 = n.inputs[0], x = in->inputs[0], c1 = in->inputs[1];
  const DType d = c.spec(x).dtype;
  if (!arith_dtype(d) || c.spec(c0).dtype != d || c.spec(c1).dtype != d) return false;
  const Node copy = n;
  const TensorId sum = fold_to_constant(c.g, OpKind::kAdd, {c0, c1});
  replace_output(c.g, copy.id, copy.outputs[0], emit1(c.g, OpKind::kSub, {sum, x}));
  return true;
}

// Conv(c * x, K) -> Conv(x, c * K) for a scalar c.
bool fold_conv_scale(Ctx& c, const Node& n) {
  if (!is_conv_like(n.op) && n.op != OpKind::kMatMul) return false;
  const TensorId k = n.inputs[1];
  if (!c.constant(k) || c.spec(k).dtype != DType::kF32) return false;
  const Node* mul = c.inner(n.inputs[0], OpKind::kMul);
  if (!mul) return false;
  for (int side = 0; side < 2; ++side) {
    const TensorId s = mul->inputs[side], x = mul->inputs[1 - side];
    if (!c.constant(s) || c.constant(x)) continue;
    const TensorSpec& ss = c.spec(s);
    if (element_count(ss.shape) != 1 || ss.shape.size() > c.spec(k).shape.size()) continue;
    if (ss.dtype != DType::kF32 || c.spec(x).dtype != DType::kF32) continue;
    if (c.spec(x).shape != c.spec(mul->outputs[0]).shape) continue;
    const NodeId mul_id = mul->id, id = n.id;
    const TensorId scaled = fold_to_constant(c.g, OpKind::kMul, {s, k});
    Node& target = *c.g.find_node(id);
    target.inputs[0] = x;
    target.inputs[1] = scaled;
    remove_dead_from(c.g, {mul_id});
    return true;
  }
  return false;
}

// Adjacent constant Concat operands are merged into one constant.
bool fold_concat_constants(Ctx& c, const Node& n) {
  if (n.op != OpKind::kConcat) return false;
  const auto& in = n.inputs;
  for (size_t i = 0; i + 1 < in.size(); ++i) {
    if (!c.constant(in[i]) || !c.constant(in[i + 1])) continue;
    size_t j = i + 1;
    while (j + 1 < in.size() && c.constant(in[j + 1])) ++j;
    if (i == 0 && j + 1 == in.size()) return false;  // all constant: plain folding
    const Node copy = n;
    std::vector<TensorId> run(copy.inputs.begin() + i, copy.inputs.begin() + j + 1);
    const TensorId merged = fold_to_constant(c.g, OpKind::kConcat, run, copy.attrs);
    Node& target = *c.g.find_node(copy.id);
    target.inputs.erase(target.inputs.begin() + i, target.inputs.begin() + j + 1);
    target.inputs.insert(target.inputs.begin() + i, merged);
    return true;
  }
  return false;
}

std::optional<NodeId> rule_fold(Graph& g, const std::set<NodeId>& skip) {
  Ctx c(g, skip);
  for (NodeId id : c.order()) {
    const Node n = *g.find_node(id);
    if (!c.anchor_ok(n) || n.op == OpKind::kNoOp) continue;
    if (fold_all_constant(c, n) || fold_nested_sub(c, n) || fold_conv_scale(c, n) ||
        fold_concat_constants(c, n)) {
      return id;
    }
  }
  return std::nullopt;
}

// ---- trivial ----

bool is_noop_movement(const Ctx& c, const Node& n) {
  if (n.inputs.size() != 1 || n.outputs.size() != 1) return false;
  const Shape& s = c.spec(n.inputs[0]).shape;
  if (c.spec(n.outputs[0]).shape != s) return false;
  switch (n.op) {
    case OpKind::kTranspose: {
      const auto perm = n.attr_ints("perm");
      for (size_t d = 0; d < perm.size(); ++d) {
        if (perm[d] != static_cast<int64_t>(d)) return s.size() <= 1;
      }
      return true;
    }
    case OpKind::kReshape:
    case OpKind::kSqueeze:
      return true;
    case OpKind::kReverse: {
      for (int64_t a : n.attr_ints("axes")) {
        if (s[a < 0 ? a + static_cast<int64_t>(s.size()) : a] != 1) return false;
      }
      return true;
    }
    case OpKind::kShuffle: {
      const int64_t groups = n.attr_int("groups", 1);
      return s.size() < 2 || groups == 1 || groups == s.back();
    }
    case OpKind::kPad: {
      const auto p = n.attr_ints("paddings");
      return std::all_of(p.begin(), p.end(), [](int64_t v) { return v == 0; });
    }
    case OpKind::kTile: {
      const auto m = n.attr_ints("multiples");
      return std::all_of(m.begin(), m.end(), [](int64_t v) { return v == 1; });
    }
    case OpKind::kSlice: {
      const auto b = n.attr_ints("begin");
      return std::all_of(b.begin(), b.end(), [](int64_t v) { return v == 0; });
    }
    default:
      return false;
  }
}

std::optional<NodeId> rule_trivial(Graph& g, const std::set<NodeId>& skip) {
  Ctx c(g, skip);
  for (NodeId id : c.order()) {
    const Node n = *g.find_node(id);
    if (!c.anchor_ok(n) || !is_noop_movement(c, n)) continue;
    replace_output(g, id, n.outputs[0], n.inputs[0]);
    if (g.find_node(id)) remove_node(g, id);
    return id;
  }
  return std::nullopt;
}

// ---- shared tree helpers ----

// Root of a maximal single-use tree of binary `op` nodes.
bool is_tree_root(const Ctx& c, const Node& n, OpKind op) {
  if (n.op != op || n.inputs.size() != 2) return false;
  const Node* up = c.sole_consumer(n.outputs[0]);
  return !(up && up->op == op && up->inputs.size() == 2 && c.rewritable(*up) &&
           c.spec(up->outputs[0]).dtype == c.spec(n.outputs[0]).dtype);
}

void collect_leaves(const Ctx& c, TensorId t, OpKind op, DType dtype,
                    std::vector<TensorId>& leaves, int& inner_nodes) {
  const Node* p = c.inner(t, op);
  if (p && p->inputs.size() == 2 && c.spec(t).dtype == dtype) {
    ++inner_nodes;
    for (TensorId in : p->inputs) collect_leaves(c, in, op, dtype, leaves, inner_nodes);
    return;
  }
  leaves.push_back(t);
}

struct Tree {
  std::vector<TensorId> leaves;
  int nodes = 0;
};

Tree tree_of(const Ctx& c, const Node& root) {
  Tree t;
  t.nodes = 1;
  const DType d = c.spec(root.outputs[0]).dtype;
  for (TensorId in : root.inputs) collect_leaves(c, in, root.op, d, t.leaves, t.nodes);
  return t;
}

bool all_same(const std::vector<TensorId>& v) {
  return std::all_of(v.begin(), v.end(), [&](TensorId t) { return t == v.front(); });
}

// Sum of N copies of a -> N * a.
bool repeated_sum_to_mul(Ctx& c, const Node& n, const std::vector<TensorId>& leaves) {
  if (leaves.size() < 2 || !all_same(leaves)) return false;
  const TensorId a = leaves.front();
  const TensorSpec& s = c.spec(a);
  if (!arith_dtype(s.dtype) || s.shape != c.spec(n.outputs[0]).shape) return false;
  const Node copy = n;
  const TensorId count = add_scalar(c.g, static_cast<double>(leaves.size()), s.dtype);
  replace_output(c.g, copy.id, copy.outputs[0], emit1(c.g, OpKind::kMul, {count, a}));
  return true;
}

// ---- flatten ----

std::optional<NodeId> rule_flatten(Graph& g, const std::set<NodeId>& skip) {
  Ctx c(g, skip);
  for (NodeId id : c.order()) {
    const Node n = *g.find_node(id);
    if (!c.anchor_ok(n)) continue;
    if (n.op == OpKind::kAdd && is_tree_root(c, n, OpKind::kAdd) &&
        arith_dtype(c.spec(n.outputs[0]).dtype)) {
      const Tree t = tree_of(c, n);
      if (t.nodes < 2) continue;
      if (repeated_sum_to_mul(c, n, t.leaves)) return id;
      if (t.leaves.size() > 64) continue;
      replace_output(g, id, n.outputs[0], emit1(g, OpKind::kAddN, t.leaves));
      return id;
    }
    if (n.op == OpKind::kAddN) {
      if (n.inputs.size() == 1 && c.spec(n.inputs[0]).shape == c.spec(n.outputs[0]).shape) {
        replace_output(g, id, n.outputs[0], n.inputs[0]);
        if (g.find_node(id)) remove_node(g, id);
        return id;
      }
      if (repeated_sum_to_mul(c, n, n.inputs)) return id;
    }
  }
  return std::nullopt;
}

// ---- reduce ----

// Agg(a*x1, ..., a*xn) -> a * Agg(x1..xn) (op == Mul), or
// Agg(x1/a, ..., xn/a) -> Agg(x1..xn) / a (op == Div).
bool factor_common_operand(Ctx& c, const Node& n, OpKind op) {
  if (n.op != OpKind::kAdd && n.op != OpKind::kAddN) return false;
  if (n.inputs.size() < 2) return false;
  std::vector<const Node*> terms;
  for (TensorId t : n.inputs) {
    const Node* p = c.inner(t, op);
    if (!p) return false;
    if (std::find(terms.begin(), terms.end(), p) != terms.end()) return false;
    terms.push_back(p);
  }
  std::vector<TensorId> candidates;
  if (op == OpKind::kDiv) {
    candidates = {terms[0]->inputs[1]};
  } else {
    candidates = terms[0]->inputs;
  }
  for (TensorId a : candidates) {
    std::vector<TensorId> rest;
    bool ok = true;
    for (const Node* p : terms) {
      if (op == OpKind::kDiv) {
        if (p->inputs[1] != a) { ok = false; break; }
        rest.push_back(p->inputs[0]);
      } else if (p->inputs[0] == a) {
        rest.push_back(p->inputs[1]);
      } else if (p->inputs[1] == a) {
        rest.push_back(p->inputs[0]);
      } else {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    Shape agg = c.spec(rest[0]).shape;
    for (TensorId r : rest) {
      auto b = broadcast_shapes(agg, c.spec(r).shape);
      if (!b) { ok = false; break; }
      agg = *b;
    }
    if (!ok) continue;
    auto full = broadcast_shapes(agg, c.spec(a).shape);
    if (!full || *full != c.spec(n.outputs[0]).shape) continue;
    const Node copy = n;
    const TensorId sum = emit1(c.g, copy.op, rest);
    const TensorId result = op == OpKind::kDiv ? emit1(c.g, OpKind::kDiv, {sum, a})
                                               : emit1(c.g, OpKind::kMul, {a, sum});
    replace_output(c.g, copy.id, copy.outputs[0], result);
    return true;
  }
  return false;
}

std::optional<NodeId> rule_reduce(Graph& g, const std::set<NodeId>& skip) {
  Ctx c(g, skip);
  for (NodeId id : c.order()) {
    const Node n = *g.find_node(id);
    if (!c.anchor_ok(n)) continue;
    if (n.op == OpKind::kNot) {
      const Node* gt = c.inner(n.inputs[0], OpKind::kGreater);
      if (!gt) continue;
      const std::vector<TensorId> operands = gt->inputs;
      replace_output(g, id, n.outputs[0], emit1(g, OpKind::kLessEqual, operands));
      return id;
    }
    if (n.op == OpKind::kAdd && is_tree_root(c, n, OpKind::kAdd) &&
        arith_dtype(c.spec(n.outputs[0]).dtype)) {
      const Tree t = tree_of(c, n);
      if (repeated_sum_to_mul(c, n, t.leaves)) return id;
    }
    if (n.op == OpKind::kAddN && repeated_sum_to_mul(c, n, n.inputs)) return id;
    if (factor_common_operand(c, n, OpKind::kMul) || factor_common_operand(c, n, OpKind::kDiv)) {
      return id;
    }
  }
  return std::nullopt;
}

// ---- hoist ----

struct UnaryStep {
  OpKind op;
  Attrs attrs;
  NodeId node;
  bool operator==(const UnaryStep& o) const { return op == o.op && attrs == o.attrs; }
};

// Unary chain hanging below `t` through single-use tensors.
std::vector<UnaryStep> chain_below(const Ctx& c, TensorId t) {
  std::vector<UnaryStep> steps;
  for (;;) {
    const Node* n = c.sole_consumer(t);
    if (!n || !is_elementwise_unary(n->op) || !c.rewritable(*n)) break;
    steps.push_back({n->op, n->attrs, n->id});
    t = n->outputs[0];
  }
  return steps;
}

// Unary chain above `t`, nearest producer first.
std::vector<UnaryStep> chain_above(const Ctx& c, TensorId t, std::vector<TensorId>* bases) {
  std::vector<UnaryStep> steps;
  bases->push_back(t);
  for (;;) {
    const Node* n = c.producer(t);
    if (!n || !is_elementwise_unary(n->op) || !c.rewritable(*n) || !c.private_use(t)) break;
    steps.push_back({n->op, n->attrs, n->id});
    t = n->inputs[0];
    bases->push_back(t);
  }
  return steps;
}

size_t common_prefix(const std::vector<std::vector<UnaryStep>>& chains) {
  size_t m = chains.front().size();
  for (const auto& ch : chains) {
    size_t k = 0;
    while (k < m && k < ch.size() && ch[k] == chains.front()[k]) ++k;
    m = k;
  }
  return m;
}

// Split(b) -> U(parts) becomes Split(U(b)).
bool hoist_through_split(Ctx& c, const Node& n) {
  if (n.op != OpKind::kSplit || n.outputs.size() < 2) return false;
  std::vector<std::vector<UnaryStep>> chains;
  for (TensorId t : n.outputs) chains.push_back(chain_below(c, t));
  const size_t m = common_prefix(chains);
  if (m == 0) return false;
  const Node copy = n;
  TensorId t = copy.inputs[0];
  for (size_t k = 0; k < m; ++k) t = emit1(c.g, chains[0][k].op, {t}, chains[0][k].attrs);
  const std::vector<TensorId> parts = emit(c.g, OpKind::kSplit, {t}, copy.attrs);
  std::vector<NodeId> seeds;
  for (size_t i = 0; i < chains.size(); ++i) {
    const Node& last = *c.g.find_node(chains[i][m - 1].node);
    const TensorId end = last.outputs[0];
    seeds.push_back(last.id);
    replace_uses(c.g, end, parts[i]);
  }
  remove_dead_from(c.g, seeds);
  return true;
}

// Concat(U(a), U(b), ...) -> U(Concat(a, b, ...)).
bool hoist_through_concat(Ctx& c, const Node& n) {
  if (n.op != OpKind::kConcat || n.inputs.size() < 2) return false;
  std::vector<std::vector<UnaryStep>> chains;
  std::vector<std::vector<TensorId>> bases(n.inputs.size());
  std::unordered_set<NodeId> seen;
  for (size_t i = 0; i < n.inputs.size(); ++i) {
    chains.push_back(chain_above(c, n.inputs[i], &bases[i]));
    if (!chains.back().empty() && !seen.insert(chains.back().front().node).second) return false;
  }
  const size_t m = common_prefix(chains);
  if (m == 0) return false;
  const Node copy = n;
  std::vector<TensorId> roots;
  for (const auto& b : bases) roots.push_back(b[m]);
  TensorId t = emit1(c.g, OpKind::kConcat, roots, copy.attrs);
  for (size_t k = m; k-- > 0;) t = emit1(c.g, chains[0][k].op, {t}, chains[0][k].attrs);
  replace_output(c.g, copy.id, copy.outputs[0], t);
  return true;
}

bool body_shared(const Graph& g, const Node& loop) {
  const int64_t body = loop.attr_int("body", -1);
  for (const Node& n : g.nodes) {
    if (n.op == OpKind::kLoop && n.id != loop.id && n.attr_int("body", -1) == body) return true;
  }
  return false;
}

// Moves one loop-invariant body node in front of the Loop.
bool hoist_loop_invariant(Ctx& c, const Node& loop) {
  if (loop.op != OpKind::kLoop || body_shared(c.g, loop)) return false;
  const size_t body_index = static_cast<size_t>(loop.attr_int("body"));
  const size_t carried = static_cast<size_t>(
      loop.attr_int("num_carried", static_cast<int64_t>(loop.inputs.size())));
  Graph& body = c.g.subgraphs[body_index];
  const GraphIndex bindex(body);
  std::unordered_map<TensorId, TensorId> invariant;  // body input -> outer tensor
  for (size_t i = carried; i < body.inputs.size() && i < loop.inputs.size(); ++i) {
    invariant[body.inputs[i]] = loop.inputs[i];
  }
  for (NodeId bid : topo_sort(body)) {
    const Node m = *body.find_node(bid);
    if (m.inputs.empty() || m.outputs.empty() || m.op == OpKind::kLoop || m.preserved() ||
        CostModel().weight(m.op) == 0 || bindex.has_control_edges(m.id, body)) {
      continue;
    }
    const bool hoistable = std::all_of(m.inputs.begin(), m.inputs.end(), [&](TensorId t) {
      return invariant.count(t) || is_constant(body, t);
    });
    if (!hoistable) continue;
    if (std::any_of(m.outputs.begin(), m.outputs.end(),
                    [&](TensorId t) { return body.is_output(t); })) {
      continue;
    }
    const NodeId loop_id = loop.id;
    std::vector<TensorId> outer_inputs;
    for (TensorId t : m.inputs) {
      if (invariant.count(t)) {
        outer_inputs.push_back(invariant.at(t));
      } else {
        const TensorSpec& s = *body.find_tensor(t);
        const TensorId k = add_tensor(c.g, s.shape, s.dtype, "", s.quant);
        c.g.constants.push_back({k, body.find_constant(t)->payload});
        outer_inputs.push_back(k);
      }
    }
    std::vector<TensorId> outer_outputs;
    for (TensorId t : m.outputs) {
      const TensorSpec s = *body.find_tensor(t);
      outer_outputs.push_back(add_tensor(c.g, s.shape, s.dtype, "", s.quant));
      const TensorId fresh = add_tensor(body, s.shape, s.dtype, "", s.quant);
      body.inputs.push_back(fresh);
      for (Node& bn : body.nodes) {
        for (TensorId& in : bn.inputs) {
          if (in == t) in = fresh;
        }
      }
    }
    remove_node(body, m.id);
    body = garbage_collect(body);
    add_node(c.g, m.op, outer_inputs, outer_outputs, m.attrs);
    Node& l = *c.g.find_node(loop_id);
    l.inputs.insert(l.inputs.end(), outer_outputs.begin(), outer_outputs.end());
    if (!l.has_attr("num_carried")) l.attrs["num_carried"] = static_cast<int64_t>(carried);
    return true;
  }
  return false;
}

std::optional<NodeId> rule_hoist(Graph& g, const std::set<NodeId>& skip) {
  Ctx c(g, skip);
  for (NodeId id : c.order()) {
    const Node n = *g.find_node(id);
    if (!c.anchor_ok(n)) continue;
    if (factor_common_operand(c, n, OpKind::kMul) || hoist_through_split(c, n) ||
        hoist_through_concat(c, n) || hoist_loop_invariant(c, n)) {
      return id;
    }
  }
  return std::nullopt;
}

std::optional<NodeId> rule_loop_invariant(Graph& g, const std::set<NodeId>& skip) {
  Ctx c(g, skip);
  for (NodeId id : c.order()) {
    const Node n = *g.find_node(id);
    if (c.anchor_ok(n) && hoist_loop_invariant(c, n)) return id;
  }
  return std::nullopt;
}

// ---- broadcast ----

// Regroups an Add or Mul tree: constants are folded into one operand, the
// remaining operands are combined within each shape class first, classes in
// increasing size, and the folded constant last.
bool regroup_by_shape(Ctx& c, const Node& n) {
  if ((n.op != OpKind::kAdd && n.op != OpKind::kMul) || !is_tree_root(c, n, n.op)) return false;
  if (!arith_dtype(c.spec(n.outputs[0]).dtype)) return false;
  const Tree t = tree_of(c, n);
  std::vector<TensorId> consts, vars;
  for (TensorId l : t.leaves) (c.constant(l) ? consts : vars).push_back(l);
  if (consts.size() < 2 || vars.empty()) return false;
  const Node copy = n;
  TensorId folded = consts[0];
  for (size_t i = 1; i < consts.size(); ++i) {
    folded = fold_to_constant(c.g, copy.op, {folded, consts[i]});
  }
  std::map<std::pair<int64_t, Shape>, std::vector<TensorId>> classes;
  for (TensorId v : vars) {
    const Shape& s = c.spec(v).shape;
    classes[{element_count(s), s}].push_back(v);
  }
  std::optional<TensorId> acc;
  for (const auto& [key, members] : classes) {
    TensorId part = members[0];
    for (size_t i = 1; i < members.size(); ++i) part = emit1(c.g, copy.op, {part, members[i]});
    acc = acc ? emit1(c.g, copy.op, {*acc, part}) : part;
  }
  replace_output(c.g, copy.id, copy.outputs[0], emit1(c.g, copy.op, {*acc, folded}));
  return true;
}

std::optional<NodeId> rule_broadcast(Graph& g, const std::set<NodeId>& skip) {
  Ctx c(g, skip);
  for (NodeId id : c.order()) {
    const Node n = *g.find_node(id);
    if (!c.anchor_ok(n)) continue;
    if (n.op == OpKind::kReshape && is_noop_movement(c, n)) {
      replace_output(g, id, n.outputs[0], n.inputs[0]);
      if (g.find_node(id)) remove_node(g, id);
      return id;
    }
    if (regroup_by_shape(c, n)) return id;
  }
  return std::nullopt;
}

}  // namespace

TensorId fold_to_constant(Graph& g, OpKind op, const std::vector<TensorId>& inputs,
                          const Attrs& attrs, size_t index) {
  Graph scratch;
  scratch.next_tensor_id = g.next_tensor_id;
  std::unordered_set<TensorId> seen;
  for (TensorId t : inputs) {
    if (!seen.insert(t).second) continue;
    TensorSpec spec = *g.find_tensor(t);
    spec.name.clear();
    scratch.tensors.push_back(spec);
    scratch.constants.push_back(*g.find_constant(t));
  }
  const std::vector<TensorId> outs = emit(scratch, op, inputs, attrs);
  const TensorSpec spec = *scratch.find_tensor(outs.at(index));
  const Node node = scratch.nodes.back();
  const std::vector<TensorValue> values = evaluate_node(scratch, node);
  return constant_from(g, spec, values.at(index));
}

const std::vector<std::string>& default_rule_order() {
  static const std::vector<std::string> order = {"fold",   "trivial", "flatten",
                                                 "reduce", "hoist",   "broadcast"};
  return order;
}

RewriteRule builtin_rule(std::string_view name) {
  if (name == "fold") return {"fold", rule_fold};
  if (name == "trivial") return {"trivial", rule_trivial};
  if (name == "flatten") return {"flatten", rule_flatten};
  if (name == "reduce") return {"reduce", rule_reduce};
  if (name == "hoist") return {"hoist", rule_hoist};
  if (name == "broadcast") return {"broadcast", rule_broadcast};
  throw Error(ErrorCode::kUnknownRule, "unknown rewrite rule '" + std::string(name) + "'");
}

std::vector<RewriteRule> builtin_rules(const std::vector<std::string>& names) {
  std::vector<RewriteRule> rules;
  for (const std::string& n : names) rules.push_back(builtin_rule(n));
  return rules;
}

SimplifyResult simplify_to_fixpoint(const Graph& graph, const std::vector<RewriteRule>& rules,
                                    const SimplifyOptions& options) {
  if (options.max_iters < 1) {
    throw Error(ErrorCode::kInvalidArgument, "max_iters must be >= 1");
  }
  SimplifyResult result;
  Graph g = validated(graph);
  PassReport& report = result.report;
  report.name = "arith";
  record_before(report, g);
  GraphMeasure current = measure(g, options.cost_model);
  bool converged = false;
  for (int sweep = 1; sweep <= options.max_iters; ++sweep) {
    result.sweeps = sweep;
    bool committed = false;
    for (const RewriteRule& rule : rules) {
      std::set<NodeId> skip;
      for (;;) {
        Graph candidate = g;
        std::optional<NodeId> site;
        try {
          site = rule.apply(candidate, skip);
        } catch (const Error& e) {
          report.notes.push_back(rule.name + " failed: " + e.what());
          break;
        }
        if (!site || skip.count(*site)) break;
        std::optional<GraphMeasure> m;
        try {
          candidate = validated(candidate);
          m = measure(candidate, options.cost_model);
        } catch (const Error& e) {
          report.notes.push_back(rule.name + " produced an invalid graph at node " +
                                 std::to_string(*site) + ": " + e.what());
        }
        if (m && *m < current) {
          report.rule_fires.push_back({rule.name, sweep, *site, current.cost, m->cost});
          g = std::move(candidate);
          current = *m;
          committed = true;
        } else {
          skip.insert(*site);
        }
      }
    }
    if (!committed) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    report.iteration_limit = true;
    report.notes.push_back("iteration limit of " + std::to_string(options.max_iters) +
                           " sweeps reached");
  }
  g = garbage_collect(g);
  record_after(report, g);
  result.graph = std::move(g);
  return result;
}

SimplifyResult simplify_to_fixpoint(const Graph& graph, const std::vector<std::string>& names,
                                    const SimplifyOptions& options) {
  return simplify_to_fixpoint(graph, builtin_rules(names), options);
}

Graph hoist_loop_invariants(const Graph& graph) {
  return simplify_to_fixpoint(graph, {RewriteRule{"hoist", rule_loop_invariant}}).graph;
}

Graph apply_rule(const Graph& graph, std::string_view name) {
  return simplify_to_fixpoint(graph, {builtin_rule(name)}).graph;
}

}  // namespace noptc
