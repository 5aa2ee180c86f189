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

#ifndef NOPTC_QUANTIZER_H_
#define NOPTC_QUANTIZER_H_

#include <cstdint>
#include <set>
#include <span>
#include <vector>

#include "noptc/graph.h"
#include "noptc/interpreter.h"
#include "noptc/report.h"

namespace noptc {

struct SymmetricQuantized {
  std::vector<int64_t> codes;
  std::vector<double> values;
};

// Fixed-point quantization to Q bits over [-1, 1): code = clamp(round(w * 2^(Q-1)))
// with codes in [-2^(Q-1), 2^(Q-1) - 1]; value = code / 2^(Q-1).
SymmetricQuantized quantize_symmetric(std::span<const double> w, int bits);

// Params of the symmetric fixed-point format above (scale 2^-(Q-1), zp 0).
QuantParams symmetric_fixed_point_params(int bits);

struct QuantizedTensor {
  std::vector<int64_t> codes;
  QuantParams params;
};

// Per-layer asymmetric int8 params for the range [lo, hi].
QuantParams asymmetric_params(double lo, double hi);

// Int8 asymmetric quantization with one (scale, zero point) per slice along
// `axis`. Throws NonFiniteWeight.
QuantizedTensor quantize_per_channel_asymmetric(std::span<const double> w,
                                                const Shape& shape, int axis);
QuantizedTensor quantize_per_layer_asymmetric(std::span<const double> w);
// Int8 symmetric with scale max|w| / 127.
QuantizedTensor quantize_per_layer_symmetric(std::span<const double> w);

// Codes for `w` under fixed params.
std::vector<int64_t> quantize_with(std::span<const double> w, const Shape& shape,
                                   const QuantParams& params);

// Throws CodeOutOfRange for codes outside the params' range.
std::vector<double> dequantize(std::span<const int64_t> codes, const QuantParams& params,
                               const Shape& shape);

enum class GraphQuantMode { kWeightsOnly, kInt8FloatFallback, kInt8Only, kFloat16 };

std::string_view quant_mode_name(GraphQuantMode mode);

struct QuantizeOptions {
  // Ops left in float under INT8_FLOAT_FALLBACK.
  std::set<OpKind> fallback_ops = {OpKind::kExp, OpKind::kSin, OpKind::kSoftmax,
                                   OpKind::kDiv};
  // INT8_ONLY: allow a Softmax whose outputs are all graph outputs to stay float.
  bool keep_terminal_softmax_float = false;
  // WEIGHTS_ONLY: symmetric (max|w|/127) instead of asymmetric weights.
  bool symmetric_weights = false;
};

struct QuantizeResult {
  Graph graph;
  PassReport report;
};

// Throws MissingCalibration (int8 modes without samples) and
// UnsupportedOpForInt8 (INT8_ONLY).
QuantizeResult quantize_graph(const Graph& graph, GraphQuantMode mode,
                              const std::vector<TensorMap>& calibration = {},
                              const QuantizeOptions& options = {});

}  // namespace noptc

#endif  // NOPTC_QUANTIZER_H_
