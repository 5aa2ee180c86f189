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

#ifndef NOPTC_STRUCTURE_OPT_H_
#define NOPTC_STRUCTURE_OPT_H_

#include <string>
#include <string_view>
#include <vector>

#include "noptc/graph.h"
#include "noptc/report.h"

namespace noptc {

struct StructureOptions {
  // Count control edges next to data edges when deciding whether an
  // Identity/NoOp is cheap enough to remove.
  bool count_control_edges = true;
};

// Deletes nodes that no graph output depends on (through data or control
// edges); preserved nodes are kept.
Graph remove_dead_branches(const Graph& graph);

// Drops zero-trip loops, inlines single-trip loops and hoists loop
// invariants out of the rest.
Graph optimize_loops(const Graph& graph);

// Removes Identity/NoOp nodes with in*out <= in+out (edges counted per
// `options`) and every StopGradient, splicing control edges through.
Graph remove_identity_noop(const Graph& graph, const StructureOptions& options = {});

// Drops control edges implied by other paths.
Graph transitive_reduce_controls(const Graph& graph);

// Replaces Conv2D -> FusedBatchNorm [-> BiasAdd] and Conv2D -> BiasAdd ->
// FusedBatchNorm chains with one FusedConvBnBias node. Chains that cannot be
// fused are left alone.
Graph fuse_conv_bn_bias(const Graph& graph);

// Fuses the chain starting at `conv`; throws NotFusable.
Graph fuse_conv_bn_bias_at(const Graph& graph, NodeId conv);

// dead, loops, identity, ctrl-reduce, fuse.
const std::vector<std::string>& structure_pass_names();

struct StructureResult {
  Graph graph;
  std::vector<PassReport> reports;
};

// Throws UnknownRule for an unknown pass name.
StructureResult run_structure_passes(const Graph& graph, const std::vector<std::string>& names =
                                                              structure_pass_names(),
                                     const StructureOptions& options = {});

}  // namespace noptc

#endif  // NOPTC_STRUCTURE_OPT_H_
