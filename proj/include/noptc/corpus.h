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

#ifndef NOPTC_CORPUS_H_
#define NOPTC_CORPUS_H_

// Seeded graph generators, one per rewrite rule or structural pass.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "noptc/graph.h"
#include "noptc/interpreter.h"

namespace noptc {

struct GraphGenSpec {
  // An arithmetic rule (fold, trivial, flatten, reduce, hoist, broadcast) or
  // a structural pass (dead, loops, identity, ctrl-reduce, fuse).
  std::string rule;
  // Bounds on the number of random distractor nodes around the pattern.
  int min_distractors = 2;
  int max_distractors = 12;
  // Probability of an int32 graph for rules that apply to integers.
  double int_fraction = 0.25;
  uint64_t seed = 0;
};

// The six arithmetic rules followed by the five structural passes.
const std::vector<std::string>& corpus_rule_names();
bool is_structural_pass(std::string_view rule);

// Deterministic in the spec; the result validates and contains at least one
// match of the target. Throws UnknownRule and InvalidSpec.
Graph gen_for_rule(const GraphGenSpec& spec);

struct TargetResult {
  Graph graph;
  // Committed rewrites (arithmetic rules) or 1 when a structural pass
  // changed the graph.
  int fires = 0;
};

// Runs only the target rule (to its fixpoint) or the target pass.
TargetResult apply_target(const Graph& graph, std::string_view rule);

// Depth of the deepest tree of single-use Add nodes.
int max_add_tree_depth(const Graph& graph);

// Largest max|a - b| / max|a| over the outputs; 0 when identical, infinity
// when shapes or names differ.
double max_normwise_error(const TensorMap& a, const TensorMap& b);

struct CorpusEntry {
  std::string rule;
  uint64_t seed = 0;
  Graph graph;
};

// `per_rule` graphs for every rule and pass, seeds base_seed .. base_seed+per_rule-1.
std::vector<CorpusEntry> build_corpus(int per_rule, uint64_t base_seed = 0);

// Writes <rule>_<seed>.topt per entry plus reference_cnn.topt and
// mlp_2_8_2.topt; returns the paths written. Throws IoError.
std::vector<std::string> write_corpus(const std::string& dir, int per_rule,
                                      uint64_t base_seed = 0);

}  // namespace noptc

#endif  // NOPTC_CORPUS_H_
