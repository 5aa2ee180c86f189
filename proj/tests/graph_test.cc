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

#include <gtest/gtest.h>

#include <algorithm>
#include <deque>
#include <set>

#include "noptc/graph.h"
#include "noptc/graph_utils.h"
#include "noptc/half.h"
#include "noptc/shape_inference.h"
#include "test_util.h"

namespace noptc {
namespace {

TEST(Validate, EmptyGraphIsOk) {
  Graph g;
  EXPECT_TRUE(validate(g).ok());
  EXPECT_TRUE(topo_sort(g).empty());
}

TEST(Validate, MutualDependencyIsCycle) {
  Graph g;
  const TensorId a = add_tensor(g, {2}, DType::kF32);
  const TensorId b = add_tensor(g, {2}, DType::kF32);
  const NodeId na = add_node(g, OpKind::kNeg, {b}, {a});
  const NodeId nb = add_node(g, OpKind::kNeg, {a}, {b});
  add_output(g, a, "y");
  const auto r = validate(g);
  ASSERT_TRUE(r.has(ViolationKind::kCycleDetected));
  EXPECT_NE(r.summary().find(std::to_string(na)), std::string::npos);
  EXPECT_NE(r.summary().find(std::to_string(nb)), std::string::npos);
  EXPECT_THROW(topo_sort(g), Error);
}

TEST(Validate, ControlDependencyCycle) {
  Graph g;
  const TensorId x = add_input(g, "x", {1});
  const TensorId y = emit1(g, OpKind::kNeg, {x});
  const TensorId z = emit1(g, OpKind::kNeg, {y});
  add_output(g, z, "z");
  g.nodes[0].control_deps = {g.nodes[1].id};
  EXPECT_TRUE(validate(g).has(ViolationKind::kCycleDetected));
}

// Right-aligned broadcast compatibility, written independently of the
// library helper.
bool broadcastable(Shape a, Shape b) {
  while (a.size() < b.size()) a.insert(a.begin(), 1);
  while (b.size() < a.size()) b.insert(b.begin(), 1);
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i] && a[i] != 1 && b[i] != 1) return false;
  }
  return true;
}

TEST(Validate, AddShapeMismatchFollowsBroadcastRule) {
  const std::vector<std::pair<Shape, Shape>> cases = {
      {{2, 3}, {4}}, {{2, 3}, {3}}, {{2, 3}, {2, 1}}, {{4, 1}, {1, 5}},
      {{2, 3}, {3, 2}}, {{}, {7}}, {{1}, {2, 2}}, {{3, 1, 2}, {4, 2}}};
  for (const auto& [sa, sb] : cases) {
    Graph g;
    const TensorId a = add_input(g, "a", sa);
    const TensorId b = add_input(g, "b", sb);
    const TensorId c = add_tensor(g, {}, DType::kF32);
    g.find_tensor(c)->shape_known = false;
    const NodeId n = add_node(g, OpKind::kAdd, {a, b}, {c});
    add_output(g, c, "c");
    const auto r = validate(g);
    if (broadcastable(sa, sb)) {
      EXPECT_TRUE(r.ok()) << shape_to_string(sa) << " + " << shape_to_string(sb);
    } else {
      ASSERT_TRUE(r.has(ViolationKind::kShapeMismatch))
          << shape_to_string(sa) << " + " << shape_to_string(sb);
      EXPECT_EQ(r.violations.front().node, n);
    }
  }
}

TEST(Validate, InfersIntermediateShapes) {
  Graph g;
  const TensorId x = add_input(g, "x", {1, 6, 6, 2});
  const TensorId w = add_constant(g, {3, 3, 2, 4}, DType::kF32, std::vector<double>(72, 0.1));
  const TensorId y = add_tensor(g, {}, DType::kF32);
  g.find_tensor(y)->shape_known = false;
  add_node(g, OpKind::kConv2D, {x, w}, {y},
           {{"strides", std::vector<int64_t>{2, 2}}, {"padding", std::string("SAME")}});
  add_output(g, y, "y");
  const auto r1 = validate(g);
  ASSERT_TRUE(r1.ok()) << r1.summary();
  EXPECT_EQ(r1.graph.find_tensor(y)->shape, (Shape{1, 3, 3, 4}));
  // Pure function of the input.
  const auto r2 = validate(g);
  EXPECT_EQ(r1.graph, r2.graph);
}

TEST(Validate, DeclaredShapeDisagreement) {
  Graph g;
  const TensorId x = add_input(g, "x", {2, 3});
  const TensorId y = add_tensor(g, {3, 2}, DType::kF32);
  add_node(g, OpKind::kRelu, {x}, {y});
  add_output(g, y, "y");
  EXPECT_TRUE(validate(g).has(ViolationKind::kShapeMismatch));
}

TEST(Validate, Int8RequiresQuantParams) {
  Graph g;
  const TensorId x = add_input(g, "x", {2}, DType::kI8);
  add_output(g, x);
  EXPECT_TRUE(validate(g).has(ViolationKind::kDTypeMismatch));
  QuantParams q;
  q.scales = {0.5f};
  q.zero_points = {0};
  g.find_tensor(x)->quant = q;
  EXPECT_TRUE(validate(g).ok());
  Graph h;
  const TensorId f = add_input(h, "f", {2});
  h.find_tensor(f)->quant = q;
  add_output(h, f);
  EXPECT_TRUE(validate(h).has(ViolationKind::kDTypeMismatch));
}

TEST(Validate, DanglingInputNamesTensor) {
  Graph g;
  const TensorId y = add_tensor(g, {2}, DType::kF32);
  add_node(g, OpKind::kNeg, {42}, {y});
  add_output(g, y);
  const auto r = validate(g);
  ASSERT_TRUE(r.has(ViolationKind::kDanglingTensor));
  EXPECT_NE(r.summary().find("42"), std::string::npos);
}

TEST(Validate, BoolOperandToArithmetic) {
  Graph g;
  const TensorId a = add_input(g, "a", {2}, DType::kBool);
  const TensorId b = add_input(g, "b", {2});
  const TensorId c = add_tensor(g, {2}, DType::kF32);
  add_node(g, OpKind::kAdd, {a, b}, {c});
  add_output(g, c);
  EXPECT_TRUE(validate(g).has(ViolationKind::kDTypeMismatch));
}

TEST(Validate, NoOpAndIdentityArity) {
  Graph g;
  const TensorId x = add_input(g, "x", {2});
  const TensorId y = add_tensor(g, {2}, DType::kF32);
  add_node(g, OpKind::kNoOp, {x}, {y});
  add_output(g, x);
  EXPECT_TRUE(validate(g).has(ViolationKind::kInvalidNode));

  Graph h;
  const TensorId a = add_input(h, "a", {2});
  const TensorId b = add_input(h, "b", {2});
  const TensorId c = add_tensor(h, {2}, DType::kF32);
  add_node(h, OpKind::kIdentity, {a, b}, {c});
  add_output(h, c);
  EXPECT_TRUE(validate(h).has(ViolationKind::kInvalidNode));
}

Graph counter_loop(int64_t trip) {
  Graph body;
  const TensorId bx = add_input(body, "x", {1});
  const TensorId one = add_scalar(body, 1.0);
  add_output(body, emit1(body, OpKind::kAdd, {bx, one}));
  Graph g;
  g.subgraphs.push_back(body);
  const TensorId x = add_input(g, "x", {1});
  const auto outs = emit(g, OpKind::kLoop, {x}, {{"trip_count", trip}, {"body", int64_t{0}}});
  add_output(g, outs[0], "y");
  return g;
}

TEST(Validate, LoopContract) {
  EXPECT_TRUE(validate(counter_loop(3)).ok());
  Graph bad = counter_loop(3);
  bad.nodes[0].attrs["trip_count"] = int64_t{-1};
  EXPECT_TRUE(validate(bad).has(ViolationKind::kInvalidNode));
  Graph missing = counter_loop(3);
  missing.nodes[0].attrs["body"] = int64_t{4};
  EXPECT_TRUE(validate(missing).has(ViolationKind::kInvalidNode));
}

TEST(TopoSort, SingleAndChain) {
  Graph g;
  const TensorId x = add_input(g, "x", {1});
  const TensorId a = emit1(g, OpKind::kNeg, {x});
  EXPECT_EQ(topo_sort(g), (std::vector<NodeId>{0}));
  const TensorId b = emit1(g, OpKind::kExp, {a});
  emit1(g, OpKind::kSin, {b});
  EXPECT_EQ(topo_sort(g), (std::vector<NodeId>{0, 1, 2}));
}

// Lexicographically smallest valid order among all permutations.
std::vector<NodeId> brute_force_min_order(const Graph& g) {
  std::vector<NodeId> ids;
  for (const Node& n : g.nodes) ids.push_back(n.id);
  std::sort(ids.begin(), ids.end());
  GraphIndex index(g);
  do {
    std::map<NodeId, size_t> pos;
    for (size_t i = 0; i < ids.size(); ++i) pos[ids[i]] = i;
    bool ok = true;
    for (const Node& n : g.nodes) {
      for (TensorId t : n.inputs) {
        if (auto p = index.producer_of(t); p && pos[*p] > pos[n.id]) ok = false;
      }
      for (NodeId c : n.control_deps) {
        if (pos[c] > pos[n.id]) ok = false;
      }
    }
    if (ok) return ids;
  } while (std::next_permutation(ids.begin(), ids.end()));
  return {};
}

TEST(TopoSort, DiamondMatchesBruteForce) {
  Graph g;
  const TensorId x = add_input(g, "x", {1});
  // Insert D first so node ids and insertion order differ.
  const TensorId a_out = add_tensor(g, {1}, DType::kF32);
  const TensorId b_out = add_tensor(g, {1}, DType::kF32);
  const TensorId c_out = add_tensor(g, {1}, DType::kF32);
  const TensorId d_out = add_tensor(g, {1}, DType::kF32);
  add_node(g, OpKind::kAdd, {b_out, c_out}, {d_out});  // id 0 = D
  add_node(g, OpKind::kNeg, {x}, {a_out});             // id 1 = A
  add_node(g, OpKind::kExp, {a_out}, {b_out});         // id 2 = B
  add_node(g, OpKind::kSin, {a_out}, {c_out});         // id 3 = C
  add_output(g, d_out);
  ASSERT_TRUE(validate(g).ok());
  const auto order = topo_sort(g);
  EXPECT_EQ(order, (std::vector<NodeId>{1, 2, 3, 0}));
  EXPECT_EQ(order, brute_force_min_order(g));
}

TEST(TopoSort, RandomDagsMatchBruteForce) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Graph g;
    const TensorId x = add_input(g, "x", {1});
    std::vector<TensorId> avail = {x};
    const int n = 6;
    for (int i = 0; i < n; ++i) {
      const TensorId a = avail[rng.integer(0, avail.size() - 1)];
      const TensorId b = avail[rng.integer(0, avail.size() - 1)];
      avail.push_back(emit1(g, OpKind::kAdd, {a, b}));
    }
    // Random forward control edges.
    for (int i = 1; i < n; ++i) {
      if (rng.coin(0.4)) g.nodes[i].control_deps = {static_cast<NodeId>(rng.integer(0, i - 1))};
    }
    add_output(g, avail.back());
    // Shuffle storage order.
    for (size_t i = g.nodes.size(); i > 1; --i) {
      std::swap(g.nodes[i - 1], g.nodes[rng.integer(0, i - 1)]);
    }
    ASSERT_TRUE(validate(g).ok());
    EXPECT_EQ(topo_sort(g), brute_force_min_order(g));
    EXPECT_EQ(topo_sort(g).size(), g.nodes.size());
  }
}

// Tensors reachable from nodes or graph interface, by BFS from outputs and
// node edges.
std::set<TensorId> referenced(const Graph& g) {
  std::set<TensorId> seen(g.inputs.begin(), g.inputs.end());
  std::deque<TensorId> queue(g.outputs.begin(), g.outputs.end());
  for (const Node& n : g.nodes) {
    queue.insert(queue.end(), n.inputs.begin(), n.inputs.end());
    queue.insert(queue.end(), n.outputs.begin(), n.outputs.end());
  }
  while (!queue.empty()) {
    seen.insert(queue.front());
    queue.pop_front();
  }
  return seen;
}

TEST(GarbageCollect, RemovesUnusedConstant) {
  Graph g;
  const TensorId x = add_input(g, "x", {2});
  const TensorId unused = add_scalar(g, 3.0);
  const TensorId y = emit1(g, OpKind::kNeg, {x});
  add_output(g, y);
  const Graph out = garbage_collect(g);
  EXPECT_EQ(out.find_tensor(unused), nullptr);
  EXPECT_EQ(out.find_constant(unused), nullptr);
  EXPECT_EQ(out.nodes, g.nodes);
}

TEST(GarbageCollect, AllUsedIsIdentity) {
  Graph g;
  const TensorId x = add_input(g, "x", {2});
  const TensorId c = add_constant(g, {2}, DType::kF32, std::vector<double>{1, 2});
  add_output(g, emit1(g, OpKind::kAdd, {x, c}));
  EXPECT_EQ(garbage_collect(g), g);
}

TEST(GarbageCollect, RemovesSeveralAtOnceAndIsIdempotent) {
  Graph g;
  const TensorId x = add_input(g, "x", {2});
  const TensorId c1 = add_scalar(g, 1.0);
  const TensorId c2 = add_scalar(g, 2.0);
  add_tensor(g, {3}, DType::kF32);  // orphan spec
  add_output(g, emit1(g, OpKind::kNeg, {x}));
  const Graph once = garbage_collect(g);
  const auto keep = referenced(g);
  for (const auto& t : g.tensors) {
    EXPECT_EQ(once.find_tensor(t.id) != nullptr, keep.count(t.id) > 0) << t.id;
  }
  EXPECT_EQ(once.find_tensor(c1), nullptr);
  EXPECT_EQ(once.find_tensor(c2), nullptr);
  EXPECT_EQ(garbage_collect(once), once);
}

TEST(Payload, RoundTripsEveryDtype) {
  const std::vector<double> ints = {-128, -1, 0, 1, 127};
  EXPECT_EQ(decode_payload(DType::kI8, encode_payload(DType::kI8, ints)), ints);
  const std::vector<double> big = {-2147483648.0, 0, 2147483647.0};
  EXPECT_EQ(decode_payload(DType::kI32, encode_payload(DType::kI32, big)), big);
  const std::vector<double> halves = {0.5, -2.0, 65504.0, 0.0009765625};
  EXPECT_EQ(decode_payload(DType::kF16, encode_payload(DType::kF16, halves)), halves);
  const std::vector<double> floats = {0.1f, -3.25f, 1e-30f};
  EXPECT_EQ(decode_payload(DType::kF32, encode_payload(DType::kF32, floats)), floats);
  const std::vector<double> out_of_range = {128};
  EXPECT_THROW(encode_payload(DType::kI8, out_of_range), Error);
}

TEST(Half, RoundsToNearestEven) {
  EXPECT_EQ(half_bits_to_float(float_to_half_bits(1.0f)), 1.0f);
  // 1 + 2^-11 is halfway between 1 and 1 + 2^-10: ties to even (1.0).
  EXPECT_EQ(round_to_half(1.0 + std::ldexp(1.0, -11)), 1.0);
  EXPECT_EQ(round_to_half(1.0 + 3 * std::ldexp(1.0, -11)), 1.0 + std::ldexp(1.0, -9));
  EXPECT_TRUE(std::isinf(round_to_half(70000.0)));
  EXPECT_EQ(round_to_half(65504.0), 65504.0);
  // Smallest subnormal.
  EXPECT_EQ(round_to_half(std::ldexp(1.0, -24)), std::ldexp(1.0, -24));
  EXPECT_EQ(round_to_half(std::ldexp(1.0, -26)), 0.0);
  // Exhaustive: every finite half survives float -> half -> float.
  for (uint32_t bits = 0; bits < 0x10000; ++bits) {
    const uint16_t h = static_cast<uint16_t>(bits);
    if ((h & 0x7c00u) == 0x7c00u) continue;
    EXPECT_EQ(float_to_half_bits(half_bits_to_float(h)), h);
  }
}

TEST(ShapeInference, ConvGeometryMatchesWindowFormula) {
  for (int64_t in = 1; in <= 9; ++in) {
    for (int64_t k = 1; k <= 4; ++k) {
      for (int64_t s = 1; s <= 3; ++s) {
        Node n;
        n.op = OpKind::kConv2D;
        n.attrs["strides"] = std::vector<int64_t>{s, s};
        n.attrs["padding"] = std::string("SAME");
        auto g = conv_geometry(n, {1, in, in, 1}, {k, k, 1, 1});
        EXPECT_EQ(g.out_h, (in + s - 1) / s);
        if (in >= k) {
          n.attrs["padding"] = std::string("VALID");
          g = conv_geometry(n, {1, in, in, 1}, {k, k, 1, 1});
          EXPECT_EQ(g.out_h, (in - k) / s + 1);
        }
      }
    }
  }
}

}  // namespace
}  // namespace noptc
