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

#include "noptc/corpus.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <set>

#include "noptc/arith_simplify.h"
#include "noptc/graph_utils.h"
#include "noptc/models.h"
#include "noptc/random.h"
#include "noptc/serdes.h"
#include "noptc/structure_opt.h"

namespace noptc {
namespace {

using Ints = std::vector<int64_t>;

class Gen {
 public:
  Gen(const GraphGenSpec& spec, bool integer) : rng_(spec.seed), spec_(spec) {
    dtype_ = integer ? DType::kI32 : DType::kF32;
    static const std::vector<Shape> shapes = {{4}, {2, 3}, {3, 4}, {2, 2, 3}};
    shape_ = shapes[rng_.integer(0, static_cast<int64_t>(shapes.size()) - 1)];
    const int64_t inputs = rng_.integer(1, 3);
    for (int64_t i = 0; i < inputs; ++i) {
      pool_.push_back(add_input(g_, "x" + std::to_string(i), shape_, dtype_));
    }
    distractors_ = static_cast<int>(rng_.integer(spec.min_distractors, spec.max_distractors));
  }

  Rng& rng() { return rng_; }
  Graph& graph() { return g_; }
  bool integer() const { return dtype_ == DType::kI32; }
  DType dtype() const { return dtype_; }
  const Shape& shape() const { return shape_; }

  TensorId pick() { return pool_[rng_.integer(0, static_cast<int64_t>(pool_.size()) - 1)]; }
  void push(TensorId t) { pool_.push_back(t); }

  std::vector<double> values(int64_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) {
      // Multiples of 1/64 keep folded constant expressions exact in float32.
      x = integer() ? static_cast<double>(rng_.integer(-4, 4))
                    : std::round(rng_.uniform(lo, hi) * 64.0) / 64.0;
    }
    return v;
  }
  TensorId constant(const Shape& s) {
    return add_constant(g_, s, dtype_, values(element_count(s)));
  }
  TensorId constant() { return constant(shape_); }

  TensorId node(OpKind op, std::vector<TensorId> in, Attrs attrs = {}) {
    const TensorId t = emit1(g_, op, std::move(in), std::move(attrs));
    made_.push_back(g_.nodes.back().id);
    return t;
  }

  OpKind unary_op() {
    if (integer()) return OpKind::kNeg;
    static const OpKind ops[] = {OpKind::kNeg, OpKind::kRelu, OpKind::kSin};
    return ops[rng_.integer(0, 2)];
  }

  // One random elementwise node over the pool; its output joins the pool.
  TensorId distractor(std::optional<TensorId> first = std::nullopt) {
    static const OpKind float_ops[] = {OpKind::kAdd, OpKind::kSub, OpKind::kMul,
                                       OpKind::kNeg, OpKind::kRelu, OpKind::kSin};
    static const OpKind int_ops[] = {OpKind::kAdd, OpKind::kSub, OpKind::kNeg};
    const OpKind op = integer() ? int_ops[rng_.integer(0, 2)] : float_ops[rng_.integer(0, 5)];
    const TensorId a = first.value_or(pick());
    TensorId t;
    if (is_elementwise_unary(op)) {
      t = node(op, {a});
    } else {
      std::vector<TensorId> in = {a, pick()};
      if (rng_.coin()) std::swap(in[0], in[1]);
      t = node(op, in);
    }
    for (NodeId dep : pending_control_) g_.nodes.back().control_deps.push_back(dep);
    normalize_control_deps(g_.nodes.back().control_deps);
    pending_control_.clear();
    push(t);
    return t;
  }

  void before() {
    const int n = distractors_ / 2;
    for (int i = 0; i < n; ++i) distractor();
  }
  // Remaining distractors; the first consumes `anchor` when given.
  void after(std::optional<TensorId> anchor) {
    const int n = std::max(distractors_ - distractors_ / 2, anchor ? 1 : 0);
    for (int i = 0; i < n; ++i) distractor(i == 0 ? anchor : std::nullopt);
  }

  // Nodes that later distractors must depend on through control edges.
  void control_before_next(NodeId n) { pending_control_.push_back(n); }
  const std::vector<NodeId>& made() const { return made_; }
  void keep_dead(TensorId t) { dead_.insert(t); }

  // Every unconsumed node output becomes a graph output.
  Graph finish() {
    if (!pending_control_.empty()) distractor();
    const GraphIndex index(g_);
    int k = 0;
    for (const Node& n : g_.nodes) {
      for (TensorId t : n.outputs) {
        if (index.use_count(t) == 0 && !dead_.count(t) && !g_.is_output(t)) {
          add_output(g_, t, "o" + std::to_string(k++));
        }
      }
    }
    return validated(g_);
  }

 private:
  Rng rng_;
  GraphGenSpec spec_;
  Graph g_;
  DType dtype_;
  Shape shape_;
  std::vector<TensorId> pool_;
  std::vector<NodeId> made_;
  std::vector<NodeId> pending_control_;
  std::set<TensorId> dead_;
  int distractors_ = 0;
};

Ints identity_perm(size_t rank) {
  Ints p(rank);
  for (size_t i = 0; i < rank; ++i) p[i] = static_cast<int64_t>(i);
  return p;
}

// ---- arithmetic patterns ----

TensorId pattern_fold(Gen& x) {
  switch (x.rng().integer(0, 3)) {
    case 0:
      return x.node(OpKind::kMul, {x.pick(), x.node(OpKind::kAdd, {x.constant(), x.constant()})});
    case 1:
      return x.node(OpKind::kSub, {x.constant(), x.node(OpKind::kSub, {x.pick(), x.constant()})});
    case 2: {
      const TensorId cat =
          x.node(OpKind::kConcat, {x.pick(), x.constant(), x.constant(), x.pick()},
                 {{"axis", int64_t{0}}});
      x.node(x.unary_op(), {cat});
      return x.pick();
    }
    default: {
      const TensorId k = x.node(OpKind::kNeg, {x.node(OpKind::kAdd, {x.constant(), x.constant()})});
      return x.node(OpKind::kAdd, {x.pick(), k});
    }
  }
}

TensorId pattern_trivial(Gen& x) {
  TensorId t = x.pick();
  const Shape& s = x.shape();
  const int64_t count = x.rng().integer(1, 3);
  for (int64_t i = 0; i < count; ++i) {
    switch (x.rng().integer(0, 4)) {
      case 0:
        t = x.node(OpKind::kTranspose, {t}, {{"perm", identity_perm(s.size())}});
        break;
      case 1:
        t = x.node(OpKind::kReshape, {t}, {{"shape", Ints(s)}});
        break;
      case 2:
        t = x.node(OpKind::kPad, {t}, {{"paddings", Ints(2 * s.size(), 0)}});
        break;
      case 3:
        t = x.node(OpKind::kTile, {t}, {{"multiples", Ints(s.size(), 1)}});
        break;
      default:
        t = x.node(OpKind::kSlice, {t}, {{"begin", Ints(s.size(), 0)}, {"size", Ints(s)}});
        break;
    }
  }
  return x.node(x.unary_op(), {t});
}

TensorId pattern_flatten(Gen& x) {
  const int64_t depth = x.rng().integer(3, 5);
  TensorId t = x.node(OpKind::kAdd, {x.pick(), x.pick()});
  for (int64_t d = 1; d < depth; ++d) {
    t = x.rng().coin() ? x.node(OpKind::kAdd, {t, x.pick()}) : x.node(OpKind::kAdd, {x.pick(), t});
  }
  return t;
}

TensorId pattern_reduce(Gen& x) {
  const int64_t variant = x.integer() ? std::array<int64_t, 3>{0, 2, 3}[x.rng().integer(0, 2)]
                                      : x.rng().integer(0, 3);
  switch (variant) {
    case 0: {
      const TensorId a = x.rng().coin() ? x.pick() : x.constant();
      const int64_t k = x.rng().integer(2, 4);
      std::vector<TensorId> terms;
      for (int64_t i = 0; i < k; ++i) {
        std::vector<TensorId> in = {a, x.pick()};
        if (x.rng().coin()) std::swap(in[0], in[1]);
        terms.push_back(x.node(OpKind::kMul, in));
      }
      return x.node(k == 2 ? OpKind::kAdd : OpKind::kAddN, terms);
    }
    case 1: {
      std::vector<double> v = x.values(element_count(x.shape()), 0.5, 2.0);
      for (double& e : v) e = x.rng().coin() ? e : -e;
      const TensorId a = add_constant(x.graph(), x.shape(), x.dtype(), v);
      return x.node(OpKind::kAdd, {x.node(OpKind::kDiv, {x.pick(), a}),
                                   x.node(OpKind::kDiv, {x.pick(), a})});
    }
    case 2:
      // Boolean result; becomes an output of its own.
      x.node(OpKind::kNot, {x.node(OpKind::kGreater, {x.pick(), x.pick()})});
      return x.pick();
    default: {
      // Wrapped so a following Add cannot join the tree.
      const TensorId p = x.pick();
      return x.node(x.unary_op(), {x.node(OpKind::kAdd, {x.node(OpKind::kAdd, {p, p}), p})});
    }
  }
}

TensorId pattern_hoist(Gen& x) {
  const Shape& s = x.shape();
  switch (x.rng().integer(0, 2)) {
    case 0: {
      const int64_t k = x.rng().integer(2, 3), m = x.rng().integer(1, 2);
      std::vector<OpKind> chain;
      for (int64_t j = 0; j < m; ++j) chain.push_back(x.unary_op());
      std::vector<TensorId> parts;
      for (int64_t i = 0; i < k; ++i) {
        TensorId t = x.pick();
        for (OpKind op : chain) t = x.node(op, {t});
        parts.push_back(t);
      }
      x.node(OpKind::kConcat, parts, {{"axis", int64_t{0}}});
      return x.pick();
    }
    case 1: {
      const OpKind op = x.unary_op();
      const std::vector<TensorId> parts =
          emit(x.graph(), OpKind::kSplit, {x.pick()}, {{"num_splits", s[0]}});
      for (TensorId p : parts) x.node(op, {p});
      return x.pick();
    }
    default: {
      Graph body;
      const TensorId acc = add_input(body, "acc", s, x.dtype());
      const TensorId c0 = add_input(body, "c0", s, x.dtype());
      const TensorId c1 = add_input(body, "c1", s, x.dtype());
      const OpKind combine = x.integer() ? OpKind::kAdd : OpKind::kMul;
      add_output(body, emit1(body, OpKind::kAdd, {acc, emit1(body, combine, {c0, c1})}));
      Graph& g = x.graph();
      g.subgraphs.push_back(body);
      return x.node(OpKind::kLoop, {x.pick(), x.pick(), x.constant()},
                    {{"trip_count", x.rng().integer(2, 4)},
                     {"body", static_cast<int64_t>(g.subgraphs.size() - 1)},
                     {"num_carried", int64_t{1}}});
    }
  }
}

TensorId pattern_broadcast(Gen& x) {
  std::vector<TensorId> leaves = {x.pick(), x.constant(Shape{1}), x.constant()};
  if (x.rng().coin()) leaves.push_back(x.pick());
  if (x.rng().coin()) leaves.push_back(x.constant(Shape{x.shape().back()}));
  for (size_t i = leaves.size(); i > 1; --i) {
    std::swap(leaves[i - 1], leaves[x.rng().integer(0, static_cast<int64_t>(i) - 1)]);
  }
  const OpKind op = x.rng().coin() ? OpKind::kAdd : OpKind::kMul;
  TensorId t = x.node(op, {leaves[0], leaves[1]});
  for (size_t i = 2; i < leaves.size(); ++i) t = x.node(op, {t, leaves[i]});
  if (x.rng().coin()) t = x.node(OpKind::kReshape, {t}, {{"shape", Ints(x.shape())}});
  return t;
}

// ---- structural patterns ----

TensorId pattern_dead(Gen& x) {
  TensorId t = x.pick();
  const int64_t n = x.rng().integer(1, 3);
  for (int64_t i = 0; i < n; ++i) {
    t = x.node(x.unary_op(), {t});
    x.keep_dead(t);
  }
  return x.pick();
}

TensorId pattern_loops(Gen& x) {
  const Shape& s = x.shape();
  const int64_t trip = x.rng().integer(0, 3);
  const bool invariant = trip >= 2 || x.rng().coin();
  Graph body;
  const TensorId acc = add_input(body, "acc", s, x.dtype());
  std::vector<TensorId> loop_in = {x.pick()};
  TensorId step;
  if (invariant) {
    const TensorId c0 = add_input(body, "c0", s, x.dtype());
    const TensorId c1 = add_input(body, "c1", s, x.dtype());
    step = emit1(body, x.integer() ? OpKind::kSub : OpKind::kMul, {c0, c1});
    loop_in.push_back(x.pick());
    loop_in.push_back(x.constant());
  } else {
    step = add_constant(body, s, x.dtype(), x.values(element_count(s)));
  }
  add_output(body, emit1(body, OpKind::kAdd, {acc, step}));
  Graph& g = x.graph();
  g.subgraphs.push_back(body);
  Attrs attrs = {{"trip_count", trip}, {"body", static_cast<int64_t>(g.subgraphs.size() - 1)}};
  if (invariant) attrs["num_carried"] = int64_t{1};
  return x.node(OpKind::kLoop, loop_in, attrs);
}

TensorId pattern_identity(Gen& x) {
  TensorId last = x.pick();
  const int64_t count = x.rng().integer(1, 3);
  for (int64_t i = 0; i < count; ++i) {
    switch (x.rng().integer(0, 2)) {
      case 0:
        last = x.node(OpKind::kIdentity, {x.pick()});
        if (x.rng().coin()) last = x.node(OpKind::kIdentity, {last});
        x.push(last);
        break;
      case 1:
        last = x.node(OpKind::kStopGradient, {x.pick()});
        x.push(last);
        break;
      default: {
        Graph& g = x.graph();
        const NodeId noop = add_node(g, OpKind::kNoOp, {}, {});
        std::vector<NodeId> deps;
        const auto& made = x.made();
        const int64_t nd = std::min<int64_t>(x.rng().integer(1, 2), made.size());
        for (int64_t j = 0; j < nd; ++j) {
          deps.push_back(made[x.rng().integer(0, static_cast<int64_t>(made.size()) - 1)]);
        }
        normalize_control_deps(deps);
        g.find_node(noop)->control_deps = deps;
        x.control_before_next(noop);
        break;
      }
    }
  }
  return last;
}

TensorId pattern_ctrl(Gen& x) {
  const TensorId a = x.node(x.unary_op(), {x.pick()});
  const NodeId na = x.graph().nodes.back().id;
  const TensorId b = x.node(OpKind::kAdd, {a, x.pick()});
  const NodeId nb = x.graph().nodes.back().id;
  const TensorId c = x.node(x.unary_op(), {b});
  Node& nc = x.graph().nodes.back();
  nc.control_deps = {na};
  if (x.rng().coin()) nc.control_deps.push_back(nb);
  normalize_control_deps(nc.control_deps);
  if (x.rng().coin()) x.graph().find_node(nb)->control_deps = {na};
  x.push(a);
  x.push(b);
  // Extra random control edges between earlier distractors.
  auto& g = x.graph();
  const auto& made = x.made();
  for (size_t i = 1; i < made.size(); ++i) {
    if (!x.rng().coin(0.3)) continue;
    const NodeId from = made[x.rng().integer(0, static_cast<int64_t>(i) - 1)];
    Node* n = g.find_node(made[i]);
    n->control_deps.push_back(from);
    normalize_control_deps(n->control_deps);
  }
  return c;
}

void pattern_fuse(Gen& x) {
  Rng& rng = x.rng();
  Graph& g = x.graph();
  const int64_t h = rng.integer(3, 6), w = rng.integer(3, 6), c = rng.integer(1, 3),
                o = rng.integer(1, 4), k = rng.integer(1, 3);
  const TensorId img = add_input(g, "img", {1, h, w, c});
  const double eps = 1e-3;
  auto vals = [&](int64_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (double& e : v) e = rng.uniform(lo, hi);
    return v;
  };
  const TensorId filter = add_constant(g, {k, k, c, o}, DType::kF32, vals(k * k * c * o, -1, 1));
  const std::string padding = rng.coin() ? "SAME" : "VALID";
  TensorId t = x.node(OpKind::kConv2D, {img, filter}, {{"padding", padding}});
  auto bn = [&](TensorId in) {
    return x.node(OpKind::kFusedBatchNorm,
                  {in, add_constant(g, {o}, DType::kF32, vals(o, 0.5, 1.5)),
                   add_constant(g, {o}, DType::kF32, vals(o, -1, 1)),
                   add_constant(g, {o}, DType::kF32, vals(o, -1, 1)),
                   add_constant(g, {o}, DType::kF32, vals(o, 0.2, 2.0))},
                  {{"epsilon", eps}});
  };
  auto bias = [&](TensorId in) {
    return x.node(OpKind::kBiasAdd, {in, add_constant(g, {o}, DType::kF32, vals(o, -1, 1))});
  };
  switch (rng.integer(0, 2)) {
    case 0:
      t = bias(bn(t));
      break;
    case 1:
      t = bn(bias(t));
      break;
    default:
      t = bn(t);
      break;
  }
  x.node(OpKind::kRelu, {t});
}

using Pattern = std::function<std::optional<TensorId>(Gen&)>;

struct RuleInfo {
  const char* name;
  bool allows_int;
  Pattern pattern;
};

const std::vector<RuleInfo>& rules() {
  static const std::vector<RuleInfo> table = {
      {"fold", true, [](Gen& x) { return std::optional(pattern_fold(x)); }},
      {"trivial", true, [](Gen& x) { return std::optional(pattern_trivial(x)); }},
      {"flatten", true, [](Gen& x) { return std::optional(pattern_flatten(x)); }},
      {"reduce", true, [](Gen& x) { return std::optional(pattern_reduce(x)); }},
      {"hoist", true, [](Gen& x) { return std::optional(pattern_hoist(x)); }},
      {"broadcast", true, [](Gen& x) { return std::optional(pattern_broadcast(x)); }},
      {"dead", true, [](Gen& x) { return std::optional(pattern_dead(x)); }},
      {"loops", true, [](Gen& x) { return std::optional(pattern_loops(x)); }},
      {"identity", true, [](Gen& x) { return std::optional(pattern_identity(x)); }},
      {"ctrl-reduce", true, [](Gen& x) { return std::optional(pattern_ctrl(x)); }},
      {"fuse", false,
       [](Gen& x) {
         pattern_fuse(x);
         return std::optional<TensorId>();
       }},
  };
  return table;
}

const RuleInfo& rule_info(std::string_view name) {
  for (const RuleInfo& r : rules()) {
    if (name == r.name) return r;
  }
  throw Error(ErrorCode::kUnknownRule, "no generator for rule '" + std::string(name) + "'");
}

int add_depth(const Graph& g, const GraphIndex& index, TensorId t) {
  const auto p = index.producer_of(t);
  if (!p) return 0;
  const Node& n = *g.find_node(*p);
  if (n.op != OpKind::kAdd) return 0;
  int d = 0;
  for (TensorId in : n.inputs) {
    d = std::max(d, index.use_count(in) == 1 ? add_depth(g, index, in) : 0);
  }
  return d + 1;
}

}  // namespace

const std::vector<std::string>& corpus_rule_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const RuleInfo& r : rules()) n.push_back(r.name);
    return n;
  }();
  return names;
}

bool is_structural_pass(std::string_view rule) {
  const auto& s = structure_pass_names();
  return std::find(s.begin(), s.end(), rule) != s.end();
}

Graph gen_for_rule(const GraphGenSpec& spec) {
  const RuleInfo& info = rule_info(spec.rule);
  if (spec.min_distractors < 0 || spec.max_distractors < spec.min_distractors ||
      spec.max_distractors > 1000 || !(spec.int_fraction >= 0.0 && spec.int_fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidSpec, "bad distractor bounds or int fraction");
  }
  // The dtype draw uses its own stream so it does not shift the graph's.
  Rng pick(spec.seed ^ 0x9e3779b97f4a7c15ull);
  const bool integer = info.allows_int && pick.coin(spec.int_fraction);
  Gen x(spec, integer);
  x.before();
  const std::optional<TensorId> anchor = info.pattern(x);
  x.after(anchor);
  return x.finish();
}

TargetResult apply_target(const Graph& graph, std::string_view rule) {
  rule_info(rule);
  TargetResult r;
  if (is_structural_pass(rule)) {
    r.graph = run_structure_passes(graph, {std::string(rule)}).graph;
    r.fires = r.graph == validated(graph) ? 0 : 1;
  } else {
    SimplifyResult s = simplify_to_fixpoint(graph, std::vector<std::string>{std::string(rule)});
    r.graph = std::move(s.graph);
    r.fires = static_cast<int>(s.report.rule_fires.size());
  }
  return r;
}

int max_add_tree_depth(const Graph& graph) {
  const GraphIndex index(graph);
  int best = 0;
  for (const Node& n : graph.nodes) {
    if (n.op == OpKind::kAdd) best = std::max(best, add_depth(graph, index, n.outputs[0]));
  }
  return best;
}

double max_normwise_error(const TensorMap& a, const TensorMap& b) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  if (a.size() != b.size()) return kInf;
  double worst = 0.0;
  for (const auto& [name, va] : a) {
    auto it = b.find(name);
    if (it == b.end() || it->second.shape != va.shape) return kInf;
    const std::vector<double> x = va.quant ? va.real() : va.data;
    const std::vector<double> y = it->second.quant ? it->second.real() : it->second.data;
    double diff = 0.0, scale = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
      if (std::isnan(x[i]) != std::isnan(y[i])) return kInf;
      if (std::isnan(x[i])) continue;
      scale = std::max(scale, std::abs(x[i]));
      if (x[i] != y[i]) diff = std::max(diff, std::abs(x[i] - y[i]));
    }
    if (diff > 0) worst = std::max(worst, scale > 0 ? diff / scale : kInf);
  }
  return worst;
}

std::vector<CorpusEntry> build_corpus(int per_rule, uint64_t base_seed) {
  std::vector<CorpusEntry> out;
  for (const std::string& rule : corpus_rule_names()) {
    for (int i = 0; i < per_rule; ++i) {
      GraphGenSpec spec;
      spec.rule = rule;
      spec.seed = base_seed + static_cast<uint64_t>(i);
      out.push_back({rule, spec.seed, gen_for_rule(spec)});
    }
  }
  return out;
}

std::vector<std::string> write_corpus(const std::string& dir, int per_rule, uint64_t base_seed) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create " + dir + ": " + ec.message());
  std::vector<std::string> paths;
  auto put = [&](const std::string& name, const Graph& g) {
    const std::string path = (std::filesystem::path(dir) / name).string();
    write_file(path, serialize(g).bytes);
    paths.push_back(path);
  };
  for (const CorpusEntry& e : build_corpus(per_rule, base_seed)) {
    put(e.rule + "_" + std::to_string(e.seed) + ".topt", e.graph);
  }
  put("reference_cnn.topt", generate_model(reference_cnn_spec(base_seed)));
  put("mlp_2_8_2.topt", make_mlp({2, 8, 2}, base_seed));
  return paths;
}

}  // namespace noptc
