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

#ifndef NOPTC_ARITH_SIMPLIFY_H_
#define NOPTC_ARITH_SIMPLIFY_H_

#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "noptc/cost_model.h"
#include "noptc/graph.h"
#include "noptc/report.h"

namespace noptc {

// A rule rewrites one match in place and returns the anchor node id, or
// nullopt when nothing outside `skip` matches. Rules leave no dead nodes
// behind (the nodes they replace are deleted).
struct RewriteRule {
  std::string name;
  std::function<std::optional<NodeId>(Graph&, const std::set<NodeId>& skip)> apply;
};

// fold, trivial, flatten, reduce, hoist, broadcast.
const std::vector<std::string>& default_rule_order();

// Throws UnknownRule.
RewriteRule builtin_rule(std::string_view name);
std::vector<RewriteRule> builtin_rules(const std::vector<std::string>& names);

struct SimplifyOptions {
  int max_iters = 50;
  CostModel cost_model;
};

struct SimplifyResult {
  Graph graph;
  PassReport report;
  int sweeps = 0;
};

// Applies the rules in order, each until it stops matching, sweeping until a
// sweep commits nothing. A rewrite is kept only when it strictly lowers
// (cost, node count, edge count). Hitting max_iters sets
// report.iteration_limit and returns the best graph so far.
SimplifyResult simplify_to_fixpoint(const Graph& graph, const std::vector<RewriteRule>& rules,
                                    const SimplifyOptions& options = {});
SimplifyResult simplify_to_fixpoint(const Graph& graph,
                                    const std::vector<std::string>& rule_names =
                                        default_rule_order(),
                                    const SimplifyOptions& options = {});

// One rule run to its own fixpoint under the same acceptance test.
Graph apply_rule(const Graph& graph, std::string_view name);

// Moves loop-invariant body nodes in front of their Loop while that lowers cost.
Graph hoist_loop_invariants(const Graph& graph);

// Evaluates `op` over constant inputs and returns a new constant tensor
// holding output `index`.
TensorId fold_to_constant(Graph& g, OpKind op, const std::vector<TensorId>& inputs,
                          const Attrs& attrs = {}, size_t index = 0);

}  // namespace noptc

#endif  // NOPTC_ARITH_SIMPLIFY_H_
