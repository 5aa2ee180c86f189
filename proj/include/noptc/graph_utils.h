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

// Editing helpers used by passes, model generators and tests.

#ifndef NOPTC_GRAPH_UTILS_H_
#define NOPTC_GRAPH_UTILS_H_

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "noptc/graph.h"

namespace noptc {

// Producer / consumer lookup tables. Rebuild after editing the graph.
struct GraphIndex {
  explicit GraphIndex(const Graph& graph);

  std::unordered_map<TensorId, NodeId> producer;
  // Consumer node ids per tensor, one entry per use (a node reading a tensor
  // twice appears twice).
  std::unordered_map<TensorId, std::vector<NodeId>> consumers;
  // Nodes listing a given node in their control deps.
  std::unordered_map<NodeId, std::vector<NodeId>> control_dependents;
  std::unordered_map<NodeId, size_t> position;

  std::optional<NodeId> producer_of(TensorId t) const;
  size_t use_count(TensorId t) const;
  bool has_control_edges(NodeId n, const Graph& graph) const;
};

TensorId add_tensor(Graph& g, Shape shape, DType dtype, std::string name = "",
                    std::optional<QuantParams> quant = std::nullopt);

TensorId add_input(Graph& g, std::string name, Shape shape,
                   DType dtype = DType::kF32);
// Appends `t` to the graph outputs, naming it when `name` is non-empty.
void add_output(Graph& g, TensorId t, std::string name = "");

TensorId add_constant(Graph& g, Shape shape, DType dtype,
                      std::span<const double> values,
                      std::optional<QuantParams> quant = std::nullopt);
TensorId add_scalar(Graph& g, double value, DType dtype = DType::kF32);

NodeId add_node(Graph& g, OpKind op, std::vector<TensorId> inputs,
                std::vector<TensorId> outputs, Attrs attrs = {});

// Appends a node whose output tensors are created from shape inference.
// `dtype` overrides the inferred output dtype (used for quantized outputs).
std::vector<TensorId> emit(Graph& g, OpKind op, std::vector<TensorId> inputs,
                           Attrs attrs = {},
                           std::optional<DType> dtype = std::nullopt);
TensorId emit1(Graph& g, OpKind op, std::vector<TensorId> inputs,
               Attrs attrs = {}, std::optional<DType> dtype = std::nullopt);

void remove_node(Graph& g, NodeId id);

bool is_constant(const Graph& g, TensorId t);
// Raw decoded element values (integer codes for I8/I32).
std::optional<std::vector<double>> constant_values(const Graph& g, TensorId t);
// Real values: integer codes are dequantized with the tensor's parameters.
std::optional<std::vector<double>> constant_real_values(const Graph& g,
                                                        TensorId t);
void set_constant_values(Graph& g, TensorId t, std::span<const double> values);

// Makes every reader of `from` (node inputs and graph outputs) read `to`
// instead. A graph output keeps its name: it moves to `to` when that tensor
// is unnamed and not already an interface tensor; otherwise an Identity node
// keeps `from` alive as the output.
void replace_uses(Graph& g, TensorId from, TensorId to);

// True when `t` is unconsumed by nodes and not a graph output.
bool is_unused(const Graph& g, TensorId t);

// Repeatedly removes nodes that have outputs, none of them used, and no
// control dependents; then garbage-collects. Output-less nodes stay.
void prune_unused(Graph& g);

// Sort and dedupe a control dependency list in place.
void normalize_control_deps(std::vector<NodeId>& deps);

}  // namespace noptc

#endif  // NOPTC_GRAPH_UTILS_H_
