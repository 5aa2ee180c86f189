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

#ifndef NOPTC_TRAINER_H_
#define NOPTC_TRAINER_H_

#include <cstdint>
#include <optional>
#include <vector>

#include "noptc/graph.h"
#include "noptc/pruning.h"

namespace noptc {

// Row-major samples x features with integer class labels.
struct Dataset {
  int64_t features = 0;
  std::vector<double> x;
  std::vector<int> y;

  int64_t size() const { return static_cast<int64_t>(y.size()); }
};

struct DataSplit {
  Dataset train;
  Dataset test;
};

// Two Gaussian blobs in 2-D with centers at -/+ separation/2 on both axes.
DataSplit make_blobs(int64_t train_per_class, int64_t test_per_class, uint64_t seed,
                     double separation = 4.0, double noise = 1.0);

// One dense layer read from a MatMul [-> BiasAdd] [-> Relu] chain.
struct DenseLayer {
  int64_t in = 0;
  int64_t out = 0;
  TensorId weight = 0;
  std::optional<TensorId> bias;
  bool relu = false;
  TensorId matmul_out = 0;
  std::optional<TensorId> relu_out;
  std::vector<double> w;  // in x out
  std::vector<double> b;  // out (zeros without a bias tensor)
};

struct Mlp {
  std::vector<DenseLayer> layers;
};

// Reads the layers of a single-input, single-output graph made of
// MatMul/BiasAdd/Relu nodes with an optional trailing Softmax. Throws
// UnsupportedLayerForTraining for anything else.
Mlp extract_mlp(const Graph& graph);
// Writes the layer parameters back into the graph constants.
Graph store_mlp(const Graph& graph, const Mlp& mlp);

enum class QuantSim {
  kNone,
  kFakeQuant,      // forward rounds, backward passes straight through
  kClipSurrogate,  // forward clips only; same backward
};

// Clip range of a simulated quantizer at the given bit width and range.
struct ClipRange {
  double lo = -1.0;
  double hi = 1.0;
};
ClipRange clip_range(double range, int bits);
double fake_quant_value(double x, double range, int bits);
// Straight-through derivative: 1 inside the clip range, 0 outside.
double fake_quant_grad(double x, double range, int bits);

struct QuantState {
  QuantSim mode = QuantSim::kNone;
  int bits = 8;
  // Per layer max |value| of the weights, the MatMul output and the Relu
  // output (the simulated quantizer sites).
  std::vector<double> weight_range;
  std::vector<double> matmul_range;
  std::vector<double> relu_range;
};

struct LossAndGrad {
  double loss = 0.0;
  std::vector<std::vector<double>> dw;
  std::vector<std::vector<double>> db;
};

// Mean softmax cross-entropy over `data` and its gradients.
LossAndGrad loss_and_gradients(const Mlp& mlp, const Dataset& data, const QuantState& quant);
double accuracy(const Mlp& mlp, const Dataset& data, const QuantState& quant);
// Ranges observed on `data` (used to refresh the running ranges).
QuantState observe_ranges(const Mlp& mlp, const Dataset& data, QuantSim mode, int bits);

struct TrainConfig {
  int64_t steps = 500;
  double learning_rate = 0.1;
  std::optional<SparsitySchedule> schedule;
  std::optional<int> fake_quant_bits;
  int64_t log_every = 50;
};

struct TrainPoint {
  int64_t step = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double sparsity = 0.0;
};

struct TrainResult {
  // Trained weights; with fake-quant training FakeQuant nodes carry the final
  // ranges.
  Graph graph;
  MaskSet masks;
  std::vector<TrainPoint> history;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  // Zero fraction per prunable weight, in layer order.
  std::vector<double> layer_sparsity;
  std::optional<int64_t> last_mask_update;
};

// Full-batch gradient descent on softmax cross-entropy.
TrainResult train_toy(const Graph& model, const DataSplit& data, const TrainConfig& config);

}  // namespace noptc

#endif  // NOPTC_TRAINER_H_
