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

#include "noptc/graph_utils.h"

#include <algorithm>

#include "noptc/shape_inference.h"

namespace noptc {

GraphIndex::GraphIndex(const Graph& graph) {
  for (size_t i = 0; i < graph.nodes.size(); ++i) {
    const Node& n = graph.nodes[i];
    position[n.id] = i;
    for (TensorId t : n.outputs) producer[t] = n.id;
    for (TensorId t : n.inputs) consumers[t].push_back(n.id);
    for (NodeId c : n.control_deps) control_dependents[c].push_back(n.id);
  }
}

std::optional<NodeId> GraphIndex::producer_of(TensorId t) const {
  auto it = producer.find(t);
  if (it == producer.end()) return std::nullopt;
  return it->second;
}

size_t GraphIndex::use_count(TensorId t) const {
  auto it = consumers.find(t);
  return it == consumers.end() ? 0 : it->second.size();
}

bool GraphIndex::has_control_edges(NodeId n, const Graph& graph) const {
  const Node* node = graph.find_node(n);
  if (node && !node->control_deps.empty()) return true;
  auto it = control_dependents.find(n);
  return it != control_dependents.end() && !it->second.empty();
}

TensorId add_tensor(Graph& g, Shape shape, DType dtype, std::string name,
                    std::optional<QuantParams> quant) {
  TensorSpec spec;
  spec.id = g.next_tensor_id++;
  spec.shape = std::move(shape);
  spec.dtype = dtype;
  spec.quant = std::move(quant);
  spec.name = std::move(name);
  g.tensors.push_back(std::move(spec));
  return g.tensors.back().id;
}

TensorId add_input(Graph& g, std::string name, Shape shape, DType dtype) {
  const TensorId id = add_tensor(g, std::move(shape), dtype, std::move(name));
  g.inputs.push_back(id);
  return id;
}

void add_output(Graph& g, TensorId t, std::string name) {
  if (!name.empty()) g.find_tensor(t)->name = std::move(name);
  g.outputs.push_back(t);
}

TensorId add_constant(Graph& g, Shape shape, DType dtype,
                      std::span<const double> values,
                      std::optional<QuantParams> quant) {
  if (static_cast<int64_t>(values.size()) != element_count(shape)) {
    throw Error(ErrorCode::kShapeMismatch,
                "constant has " + std::to_string(values.size()) +
                    " values for shape " + shape_to_string(shape));
  }
  const TensorId id = add_tensor(g, std::move(shape), dtype, "", std::move(quant));
  g.constants.push_back({id, encode_payload(dtype, values)});
  return id;
}

TensorId add_scalar(Graph& g, double value, DType dtype) {
  const double v[1] = {value};
  return add_constant(g, {}, dtype, v);
}

NodeId add_node(Graph& g, OpKind op, std::vector<TensorId> inputs,
                std::vector<TensorId> outputs, Attrs attrs) {
  Node n;
  n.id = g.next_node_id++;
  n.op = op;
  n.inputs = std::move(inputs);
  n.outputs = std::move(outputs);
  n.attrs = std::move(attrs);
  g.nodes.push_back(std::move(n));
  return g.nodes.back().id;
}

std::vector<TensorId> emit(Graph& g, OpKind op, std::vector<TensorId> inputs,
                           Attrs attrs, std::optional<DType> dtype) {
  Node probe;
  probe.id = g.next_node_id;
  probe.op = op;
  probe.inputs = inputs;
  probe.attrs = attrs;
  std::vector<const TensorSpec*> specs;
  for (TensorId t : inputs) {
    const TensorSpec* s = g.find_tensor(t);
    if (!s) {
      throw Error(ErrorCode::kDanglingTensor,
                  "emit: unknown input tensor " + std::to_string(t));
    }
    specs.push_back(s);
  }
  const auto types = infer_output_types(probe, specs, g);
  std::vector<TensorId> outs;
  for (const auto& t : types) {
    outs.push_back(add_tensor(g, t.shape, dtype.value_or(t.dtype)));
  }
  add_node(g, op, std::move(inputs), outs, std::move(attrs));
  return outs;
}

TensorId emit1(Graph& g, OpKind op, std::vector<TensorId> inputs, Attrs attrs,
               std::optional<DType> dtype) {
  auto outs = emit(g, op, std::move(inputs), std::move(attrs), dtype);
  if (outs.size() != 1) {
    throw Error(ErrorCode::kInvalidNode,
                std::string(op_name(op)) + " does not have exactly one output");
  }
  return outs.front();
}

void remove_node(Graph& g, NodeId id) {
  std::erase_if(g.nodes, [&](const Node& n) { return n.id == id; });
  for (Node& n : g.nodes) {
    std::erase(n.control_deps, id);
  }
}

bool is_constant(const Graph& g, TensorId t) { return g.find_constant(t) != nullptr; }

std::optional<std::vector<double>> constant_values(const Graph& g, TensorId t) {
  const ConstData* c = g.find_constant(t);
  if (!c) return std::nullopt;
  return decode_payload(g.find_tensor(t)->dtype, c->payload);
}

std::optional<std::vector<double>> constant_real_values(const Graph& g,
                                                        TensorId t) {
  auto values = constant_values(g, t);
  if (!values) return values;
  const TensorSpec* spec = g.find_tensor(t);
  if (!spec->quant) return values;
  const QuantParams& q = *spec->quant;
  // Stride of the quantized axis in row-major order.
  int64_t inner = 1, extent = 1;
  if (q.per_channel()) {
    extent = spec->shape[q.axis];
    for (size_t d = q.axis + 1; d < spec->shape.size(); ++d) inner *= spec->shape[d];
  }
  for (size_t i = 0; i < values->size(); ++i) {
    const size_t c = q.per_channel() ? (i / inner) % extent : 0;
    (*values)[i] = ((*values)[i] - q.zero_point_for(c)) *
                   static_cast<double>(q.scale_for(c));
  }
  return values;
}

void set_constant_values(Graph& g, TensorId t, std::span<const double> values) {
  const TensorSpec* spec = g.find_tensor(t);
  for (ConstData& c : g.constants) {
    if (c.tensor_id == t) {
      c.payload = encode_payload(spec->dtype, values);
      return;
    }
  }
  throw Error(ErrorCode::kInvalidArgument,
              "tensor " + std::to_string(t) + " is not a constant");
}

void replace_uses(Graph& g, TensorId from, TensorId to) {
  if (from == to) return;
  for (Node& n : g.nodes) {
    for (TensorId& t : n.inputs) {
      if (t == from) t = to;
    }
  }
  if (!g.is_output(from)) return;
  TensorSpec* to_spec = g.find_tensor(to);
  TensorSpec* from_spec = g.find_tensor(from);
  const bool to_is_interface = g.is_input(to) || g.is_output(to);
  if (!to_is_interface && to_spec->name.empty()) {
    to_spec->name = from_spec->name;
    from_spec->name.clear();
    std::replace(g.outputs.begin(), g.outputs.end(), from, to);
    return;
  }
  // Keep the named output alive through an Identity. The old producer (if
  // any) is pointed at a fresh orphan tensor so `from` keeps one producer.
  const TensorSpec copy = *from_spec;
  for (Node& n : g.nodes) {
    for (TensorId& t : n.outputs) {
      if (t == from) t = add_tensor(g, copy.shape, copy.dtype, "", copy.quant);
    }
  }
  add_node(g, OpKind::kIdentity, {to}, {from});
}

bool is_unused(const Graph& g, TensorId t) {
  if (g.is_output(t)) return false;
  for (const Node& n : g.nodes) {
    if (std::find(n.inputs.begin(), n.inputs.end(), t) != n.inputs.end()) return false;
  }
  return true;
}

void prune_unused(Graph& g) {
  bool changed = true;
  while (changed) {
    changed = false;
    GraphIndex index(g);
    std::unordered_map<TensorId, bool> is_out;
    for (TensorId t : g.outputs) is_out[t] = true;
    for (const Node& n : g.nodes) {
      if (n.outputs.empty()) continue;
      if (index.control_dependents.count(n.id)) continue;
      bool used = false;
      for (TensorId t : n.outputs) {
        if (index.use_count(t) > 0 || is_out.count(t)) used = true;
      }
      if (!used) {
        remove_node(g, n.id);
        changed = true;
        break;
      }
    }
  }
  g = garbage_collect(g);
}

void normalize_control_deps(std::vector<NodeId>& deps) {
  std::sort(deps.begin(), deps.end());
  deps.erase(std::unique(deps.begin(), deps.end()), deps.end());
}

}  // namespace noptc
