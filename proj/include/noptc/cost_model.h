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

#ifndef NOPTC_COST_MODEL_H_
#define NOPTC_COST_MODEL_H_

#include <array>
#include <cstdint>
#include <tuple>

#include "noptc/graph.h"

namespace noptc {

// Per-op weights; AddN and Concat are charged per extra operand and Loop
// nodes cost trip_count times their body.
struct CostModel {
  std::array<int64_t, kNumOpKinds> weights{};

  CostModel();

  int64_t weight(OpKind op) const { return weights[static_cast<size_t>(op)]; }
  int64_t node_cost(const Node& node, const Graph& graph) const;
  int64_t cost(const Graph& graph) const;
};

// Ordering key used to accept rewrites: (cost, node count, data edge count),
// compared lexicographically.
struct GraphMeasure {
  int64_t cost = 0;
  int64_t nodes = 0;
  int64_t edges = 0;

  auto operator<=>(const GraphMeasure&) const = default;
};

GraphMeasure measure(const Graph& graph, const CostModel& model = {});

}  // namespace noptc

#endif  // NOPTC_COST_MODEL_H_
