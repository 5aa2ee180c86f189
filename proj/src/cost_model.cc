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

#include "noptc/cost_model.h"

namespace noptc {

CostModel::CostModel() {
  weights.fill(1);
  auto set = [&](OpKind op, int64_t w) { weights[static_cast<size_t>(op)] = w; };
  for (OpKind op : {OpKind::kConv2D, OpKind::kDepthwiseConv2D, OpKind::kFusedConvBnBias,
                    OpKind::kMatMul}) {
    set(op, 8);
  }
  set(OpKind::kMul, 2);
  set(OpKind::kDiv, 2);
  for (OpKind op : {OpKind::kReshape, OpKind::kIdentity, OpKind::kNoOp, OpKind::kStopGradient}) {
    set(op, 0);
  }
}

int64_t CostModel::node_cost(const Node& node, const Graph& graph) const {
  switch (node.op) {
    case OpKind::kAddN:
    case OpKind::kConcat:
      return weight(node.op) * (static_cast<int64_t>(node.inputs.size()) - 1);
    case OpKind::kLoop: {
      const int64_t body = node.attr_int("body", -1);
      if (body < 0 || body >= static_cast<int64_t>(graph.subgraphs.size())) return 0;
      return node.attr_int("trip_count", 0) * cost(graph.subgraphs[body]);
    }
    default:
      return weight(node.op);
  }
}

int64_t CostModel::cost(const Graph& graph) const {
  int64_t total = 0;
  for (const Node& n : graph.nodes) total += node_cost(n, graph);
  return total;
}

GraphMeasure measure(const Graph& graph, const CostModel& model) {
  GraphMeasure m;
  m.cost = model.cost(graph);
  m.nodes = static_cast<int64_t>(graph.nodes.size());
  for (const Node& n : graph.nodes) m.edges += static_cast<int64_t>(n.inputs.size());
  return m;
}

}  // namespace noptc
