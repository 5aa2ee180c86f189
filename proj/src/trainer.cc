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

#include "noptc/trainer.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "noptc/graph_utils.h"
#include "noptc/interpreter.h"
#include "noptc/random.h"
#include "noptc/status.h"

namespace noptc {
namespace {

[[noreturn]] void unsupported(const std::string& what) {
  throw Error(ErrorCode::kUnsupportedLayerForTraining, what);
}

constexpr double kMinRange = 1e-8;

// Per-layer activations of one forward pass over a batch.
struct Forward {
  std::vector<std::vector<double>> input;   // layer input a (batch x in)
  std::vector<std::vector<double>> w_used;  // weights after simulation
  std::vector<std::vector<double>> mm;      // MatMul output before simulation
  std::vector<std::vector<double>> z;       // after bias
  std::vector<std::vector<double>> relu;    // Relu output before simulation
  std::vector<double> logits;
};

double simulate(double x, double range, int bits, QuantSim mode) {
  switch (mode) {
    case QuantSim::kNone:
      return x;
    case QuantSim::kFakeQuant:
      return fake_quant_value(x, range, bits);
    case QuantSim::kClipSurrogate: {
      const ClipRange c = clip_range(range, bits);
      return std::clamp(x, c.lo, c.hi);
    }
  }
  return x;
}

Forward forward(const Mlp& mlp, const Dataset& data, const QuantState& q) {
  Forward f;
  const int64_t n = data.size();
  std::vector<double> a = data.x;
  for (size_t l = 0; l < mlp.layers.size(); ++l) {
    const DenseLayer& layer = mlp.layers[l];
    std::vector<double> w = layer.w;
    if (q.mode != QuantSim::kNone) {
      for (double& v : w) v = simulate(v, q.weight_range[l], q.bits, q.mode);
    }
    std::vector<double> mm(n * layer.out, 0.0);
    for (int64_t s = 0; s < n; ++s) {
      for (int64_t i = 0; i < layer.in; ++i) {
        const double av = a[s * layer.in + i];
        if (av == 0.0) continue;
        for (int64_t o = 0; o < layer.out; ++o) mm[s * layer.out + o] += av * w[i * layer.out + o];
      }
    }
    std::vector<double> z(mm.size());
    for (int64_t s = 0; s < n; ++s) {
      for (int64_t o = 0; o < layer.out; ++o) {
        const double m = simulate(mm[s * layer.out + o], q.mode == QuantSim::kNone ? 1.0
                                                                                   : q.matmul_range[l],
                                  q.bits, q.mode);
        z[s * layer.out + o] = m + layer.b[o];
      }
    }
    f.input.push_back(a);
    f.w_used.push_back(w);
    f.mm.push_back(mm);
    f.z.push_back(z);
    if (layer.relu) {
      std::vector<double> r(z.size());
      for (size_t i = 0; i < z.size(); ++i) r[i] = std::max(0.0, z[i]);
      f.relu.push_back(r);
      a = r;
      if (q.mode != QuantSim::kNone) {
        for (double& v : a) v = simulate(v, q.relu_range[l], q.bits, q.mode);
      }
    } else {
      f.relu.emplace_back();
      a = z;
    }
  }
  f.logits = a;
  return f;
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return std::max(m, kMinRange);
}

int argmax_row(const std::vector<double>& v, int64_t row, int64_t width) {
  int best = 0;
  for (int64_t k = 1; k < width; ++k) {
    if (v[row * width + k] > v[row * width + best]) best = static_cast<int>(k);
  }
  return best;
}

}  // namespace

DataSplit make_blobs(int64_t train_per_class, int64_t test_per_class, uint64_t seed,
                     double separation, double noise) {
  Rng rng(seed);
  auto fill = [&](Dataset& d, int64_t per_class) {
    d.features = 2;
    for (int64_t i = 0; i < per_class; ++i) {
      for (int cls = 0; cls < 2; ++cls) {
        const double center = (cls == 0 ? -0.5 : 0.5) * separation;
        d.x.push_back(rng.normal(center, noise));
        d.x.push_back(rng.normal(center, noise));
        d.y.push_back(cls);
      }
    }
  };
  DataSplit split;
  fill(split.train, train_per_class);
  fill(split.test, test_per_class);
  return split;
}

Mlp extract_mlp(const Graph& graph) {
  const Graph g = validated(graph);
  if (g.inputs.size() != 1 || g.outputs.size() != 1) {
    unsupported("training needs one graph input and one graph output");
  }
  if (!g.subgraphs.empty()) unsupported("loops are not trainable");
  const GraphIndex index(g);
  Mlp mlp;
  TensorId cur = g.inputs[0];
  if (g.find_tensor(cur)->shape.size() != 2) unsupported("input must be [batch, features]");
  bool ended = false;
  while (!g.is_output(cur)) {
    if (ended) unsupported("Softmax must be the last node");
    if (index.use_count(cur) != 1) unsupported("branching graphs are not trainable");
    const Node& n = *g.find_node(index.consumers.at(cur).front());
    if (!n.control_deps.empty()) unsupported("control edges are not trainable");
    auto constant_f32 = [&](TensorId t) {
      if (!is_constant(g, t) || g.find_tensor(t)->dtype != DType::kF32) {
        unsupported(std::string(op_name(n.op)) + " parameters must be float constants");
      }
      return *constant_values(g, t);
    };
    switch (n.op) {
      case OpKind::kMatMul: {
        if (n.inputs[0] != cur) unsupported("MatMul must read the activation first");
        DenseLayer layer;
        const Shape& ws = g.find_tensor(n.inputs[1])->shape;
        layer.in = ws[0];
        layer.out = ws[1];
        layer.weight = n.inputs[1];
        layer.w = constant_f32(n.inputs[1]);
        layer.b.assign(layer.out, 0.0);
        layer.matmul_out = n.outputs[0];
        mlp.layers.push_back(std::move(layer));
        break;
      }
      case OpKind::kBiasAdd: {
        if (mlp.layers.empty() || mlp.layers.back().bias || mlp.layers.back().relu ||
            n.inputs[0] != cur) {
          unsupported("BiasAdd must directly follow a MatMul");
        }
        mlp.layers.back().bias = n.inputs[1];
        mlp.layers.back().b = constant_f32(n.inputs[1]);
        break;
      }
      case OpKind::kRelu:
        if (mlp.layers.empty() || mlp.layers.back().relu) unsupported("Relu must follow a layer");
        mlp.layers.back().relu = true;
        mlp.layers.back().relu_out = n.outputs[0];
        break;
      case OpKind::kSoftmax:
        ended = true;
        break;
      default:
        unsupported(std::string(op_name(n.op)) + " is not trainable");
    }
    cur = n.outputs[0];
  }
  if (mlp.layers.empty()) unsupported("no MatMul layer found");
  return mlp;
}

Graph store_mlp(const Graph& graph, const Mlp& mlp) {
  Graph g = graph;
  for (const DenseLayer& layer : mlp.layers) {
    set_constant_values(g, layer.weight, layer.w);
    if (layer.bias) set_constant_values(g, *layer.bias, layer.b);
  }
  return g;
}

ClipRange clip_range(double range, int bits) {
  const double r = std::max(range, kMinRange);
  const double half = std::ldexp(1.0, bits - 1);
  return {-r, r * (half - 1.0) / half};
}

double fake_quant_value(double x, double range, int bits) {
  const double r = std::max(range, kMinRange);
  return r * fixed_point_round(x / r, bits);
}

double fake_quant_grad(double x, double range, int bits) {
  const ClipRange c = clip_range(range, bits);
  return x >= c.lo && x <= c.hi ? 1.0 : 0.0;
}

QuantState observe_ranges(const Mlp& mlp, const Dataset& data, QuantSim mode, int bits) {
  const Forward f = forward(mlp, data, {});
  QuantState q;
  q.mode = mode;
  q.bits = bits;
  for (size_t l = 0; l < mlp.layers.size(); ++l) {
    q.weight_range.push_back(max_abs(mlp.layers[l].w));
    q.matmul_range.push_back(max_abs(f.mm[l]));
    q.relu_range.push_back(mlp.layers[l].relu ? max_abs(f.relu[l]) : 1.0);
  }
  return q;
}

LossAndGrad loss_and_gradients(const Mlp& mlp, const Dataset& data, const QuantState& q) {
  const Forward f = forward(mlp, data, q);
  const int64_t n = data.size();
  const int64_t classes = mlp.layers.back().out;
  LossAndGrad out;
  out.dw.resize(mlp.layers.size());
  out.db.resize(mlp.layers.size());
  if (n == 0) return out;
  // d loss / d logits for mean softmax cross-entropy.
  std::vector<double> grad(n * classes);
  for (int64_t s = 0; s < n; ++s) {
    double peak = f.logits[s * classes];
    for (int64_t k = 1; k < classes; ++k) peak = std::max(peak, f.logits[s * classes + k]);
    double sum = 0.0;
    for (int64_t k = 0; k < classes; ++k) sum += std::exp(f.logits[s * classes + k] - peak);
    const int label = data.y[s];
    out.loss += -(f.logits[s * classes + label] - peak - std::log(sum)) / n;
    for (int64_t k = 0; k < classes; ++k) {
      const double p = std::exp(f.logits[s * classes + k] - peak) / sum;
      grad[s * classes + k] = (p - (k == label ? 1.0 : 0.0)) / n;
    }
  }
  const bool sim = q.mode != QuantSim::kNone;
  for (size_t li = mlp.layers.size(); li-- > 0;) {
    const DenseLayer& layer = mlp.layers[li];
    // grad currently holds d loss / d (layer output after simulation).
    if (layer.relu) {
      for (size_t i = 0; i < grad.size(); ++i) {
        if (sim) grad[i] *= fake_quant_grad(f.relu[li][i], q.relu_range[li], q.bits);
        if (f.z[li][i] <= 0.0) grad[i] = 0.0;
      }
    }
    std::vector<double>& db = out.db[li];
    db.assign(layer.out, 0.0);
    for (int64_t s = 0; s < n; ++s) {
      for (int64_t o = 0; o < layer.out; ++o) db[o] += grad[s * layer.out + o];
    }
    if (sim) {
      for (size_t i = 0; i < grad.size(); ++i) {
        grad[i] *= fake_quant_grad(f.mm[li][i], q.matmul_range[li], q.bits);
      }
    }
    std::vector<double>& dw = out.dw[li];
    dw.assign(layer.in * layer.out, 0.0);
    std::vector<double> dx(n * layer.in, 0.0);
    const std::vector<double>& a = f.input[li];
    const std::vector<double>& w = f.w_used[li];
    for (int64_t s = 0; s < n; ++s) {
      for (int64_t i = 0; i < layer.in; ++i) {
        const double av = a[s * layer.in + i];
        double acc = 0.0;
        for (int64_t o = 0; o < layer.out; ++o) {
          const double gv = grad[s * layer.out + o];
          dw[i * layer.out + o] += av * gv;
          acc += w[i * layer.out + o] * gv;
        }
        dx[s * layer.in + i] = acc;
      }
    }
    if (sim) {
      for (size_t i = 0; i < dw.size(); ++i) {
        dw[i] *= fake_quant_grad(layer.w[i], q.weight_range[li], q.bits);
      }
    }
    grad = std::move(dx);
  }
  return out;
}

double accuracy(const Mlp& mlp, const Dataset& data, const QuantState& quant) {
  if (data.size() == 0) return 0.0;
  const Forward f = forward(mlp, data, quant);
  const int64_t classes = mlp.layers.back().out;
  int64_t correct = 0;
  for (int64_t s = 0; s < data.size(); ++s) correct += argmax_row(f.logits, s, classes) == data.y[s];
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult train_toy(const Graph& model, const DataSplit& data, const TrainConfig& config) {
  Mlp mlp = extract_mlp(model);
  if (mlp.layers.front().in != data.train.features) {
    throw Error(ErrorCode::kShapeMismatch, "model input width differs from the dataset features");
  }
  if (config.schedule) config.schedule->check();
  const QuantSim mode = config.fake_quant_bits ? QuantSim::kFakeQuant : QuantSim::kNone;
  const int bits = config.fake_quant_bits.value_or(8);
  if (mode != QuantSim::kNone && (bits < 2 || bits > 8)) {
    throw Error(ErrorCode::kInvalidArgument, "fake-quant bits must be in [2, 8]");
  }
  TrainResult result;
  MaskSet& masks = result.masks;
  auto apply = [&](DenseLayer& layer) {
    const auto it = masks.find(layer.weight);
    if (it == masks.end()) return;
    for (size_t i = 0; i < layer.w.size(); ++i) {
      if (!it->second[i]) layer.w[i] = 0.0;
    }
  };
  auto sparsity = [&] {
    int64_t zeros = 0, total = 0;
    for (const auto& [t, m] : masks) {
      zeros += std::count(m.begin(), m.end(), uint8_t{0});
      total += static_cast<int64_t>(m.size());
    }
    return total ? static_cast<double>(zeros) / total : 0.0;
  };
  QuantState quant;
  quant.mode = QuantSim::kNone;
  for (int64_t t = 0; t < config.steps; ++t) {
    if (config.schedule && config.schedule->is_update_step(t)) {
      const double target = sparsity_at(*config.schedule, t);
      for (DenseLayer& layer : mlp.layers) {
        const auto it = masks.find(layer.weight);
        masks[layer.weight] = update_mask(layer.w, it == masks.end() ? Mask{} : it->second, target);
        apply(layer);
      }
      result.last_mask_update = t;
    }
    if (mode != QuantSim::kNone) quant = observe_ranges(mlp, data.train, mode, bits);
    const LossAndGrad lg = loss_and_gradients(mlp, data.train, quant);
    for (size_t l = 0; l < mlp.layers.size(); ++l) {
      DenseLayer& layer = mlp.layers[l];
      for (size_t i = 0; i < layer.w.size(); ++i) layer.w[i] -= config.learning_rate * lg.dw[l][i];
      for (size_t i = 0; i < layer.b.size(); ++i) layer.b[i] -= config.learning_rate * lg.db[l][i];
      apply(layer);
    }
    if (config.log_every > 0 && (t % config.log_every == 0 || t + 1 == config.steps)) {
      result.history.push_back({t, lg.loss, accuracy(mlp, data.train, quant),
                                accuracy(mlp, data.test, quant), sparsity()});
    }
  }
  if (mode != QuantSim::kNone) quant = observe_ranges(mlp, data.train, mode, bits);
  result.train_accuracy = accuracy(mlp, data.train, quant);
  result.test_accuracy = accuracy(mlp, data.test, quant);
  for (const DenseLayer& layer : mlp.layers) {
    int64_t zeros = std::count(layer.w.begin(), layer.w.end(), 0.0);
    result.layer_sparsity.push_back(static_cast<double>(zeros) / layer.w.size());
  }
  Graph g = store_mlp(validated(model), mlp);
  if (mode != QuantSim::kNone) {
    g = insert_fake_quant(g, bits);
    for (Node& n : g.nodes) {
      if (n.op != OpKind::kFakeQuant) continue;
      for (size_t l = 0; l < mlp.layers.size(); ++l) {
        double r = -1.0;
        if (n.inputs[0] == mlp.layers[l].matmul_out) r = quant.matmul_range[l];
        if (mlp.layers[l].relu_out && n.inputs[0] == *mlp.layers[l].relu_out) {
          r = quant.relu_range[l];
        }
        if (n.inputs[0] == mlp.layers[l].weight) r = quant.weight_range[l];
        if (r > 0.0) {
          n.attrs["min"] = -r;
          n.attrs["max"] = r;
        }
      }
    }
    g = validated(g);
  }
  result.graph = std::move(g);
  return result;
}

}  // namespace noptc
