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

#ifndef NOPTC_MODELS_H_
#define NOPTC_MODELS_H_

#include <cstdint>
#include <string>
#include <vector>

#include "noptc/graph.h"

namespace noptc {

// Seeded random-weight model description.
//   mlp: sizes = [in, hidden..., classes]
//   cnn: input = [H, W, C]; conv_channels per 3x3 SAME conv + Relu + 2x2
//        max-pool stage; dense = hidden widths; classes.
struct ModelSpec {
  std::string kind = "mlp";
  std::vector<int64_t> sizes;
  std::vector<int64_t> input;
  std::vector<int64_t> conv_channels;
  std::vector<int64_t> dense;
  int64_t classes = 10;
  // Conv filters drawn as one outer product u (x) v (x) p per output channel.
  bool separable_filters = false;
  bool softmax = true;
  uint64_t seed = 0;
};

// The bundled CNN: 28x28x1 input, convs of 16 and 32 channels, a 40-unit
// dense layer and 10 classes (67,970 parameters), separable filters.
ModelSpec reference_cnn_spec(uint64_t seed = 0);

// Throws InvalidSpec.
Graph generate_model(const ModelSpec& spec);

Graph make_mlp(const std::vector<int64_t>& sizes, uint64_t seed, bool softmax = true);

// Parses {"kind": ..., "sizes": [...], ...}; unknown keys and bad values
// raise InvalidSpec. "reference" as kind yields reference_cnn_spec.
ModelSpec parse_model_spec(const std::string& json_text);
std::string model_spec_to_json(const ModelSpec& spec);

// Total constant elements (weights and biases) including loop bodies.
int64_t parameter_count(const Graph& graph);

}  // namespace noptc

#endif  // NOPTC_MODELS_H_
