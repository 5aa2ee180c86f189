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

#ifndef NOPTC_PRUNING_H_
#define NOPTC_PRUNING_H_

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "noptc/graph.h"
#include "noptc/interpreter.h"

namespace noptc {

// Gradual sparsity ramp from s_initial at t0 to s_final at t0 + span_steps,
// with masks refreshed every delta_t steps.
struct SparsitySchedule {
  double s_initial = 0.0;
  double s_final = 0.5;
  int64_t t0 = 0;
  int64_t delta_t = 1;
  int64_t span_steps = 100;
  double exponent = 3.0;

  // Throws InvalidArgument when the fields break the schedule invariants.
  void check() const;
  bool is_update_step(int64_t t) const;
  // Last step at which masks change.
  int64_t last_update_step() const { return t0 + span_steps; }
};

// s_final + (s_initial - s_final) * (1 - (t - t0) / span)^exponent, held at
// s_initial before t0 and at s_final after the ramp.
double sparsity_at(const SparsitySchedule& schedule, int64_t t);

// 1 keeps a weight, 0 prunes it.
using Mask = std::vector<uint8_t>;
using MaskSet = std::map<TensorId, Mask>;

double mask_sparsity(std::span<const uint8_t> mask);

// Masks the smallest-magnitude surviving weights until ceil(target * n)
// entries are zero. Pruned entries stay pruned; ties go to the lower index.
Mask update_mask(std::span<const double> weights, std::span<const uint8_t> mask, double target);

// Filter/weight constants of Conv2D, DepthwiseConv2D, FusedConvBnBias and
// MatMul nodes, in node order.
std::vector<TensorId> prunable_weights(const Graph& graph);

// update_mask for every prunable weight (missing masks start all ones).
MaskSet update_masks(const Graph& graph, const MaskSet& masks, double target);

// Zeroes masked weights.
Graph apply_masks(const Graph& graph, const MaskSet& masks);

// Inserts a FakeQuant after every float weight constant of a conv-like or
// MatMul node and after every Conv2D/DepthwiseConv2D/FusedConvBnBias/MatMul/
// Relu output. Weight ranges come from the weights; activation ranges from
// tracing `calibration` (or [-1, 1] without samples). Throws InvalidArgument
// for bits outside [2, 8].
Graph insert_fake_quant(const Graph& graph, int bits,
                        const std::vector<TensorMap>& calibration = {});

}  // namespace noptc

#endif  // NOPTC_PRUNING_H_
