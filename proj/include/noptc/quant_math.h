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

#ifndef NOPTC_QUANT_MATH_H_
#define NOPTC_QUANT_MATH_H_

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "noptc/graph.h"

namespace noptc {

// Round half away from zero (std::round semantics), used everywhere codes
// are produced.
inline double round_half_away(double v) { return std::round(v); }

inline int64_t clamp_code(double v, int64_t lo, int64_t hi) {
  if (std::isnan(v)) return 0;
  if (v < static_cast<double>(lo)) return lo;
  if (v > static_cast<double>(hi)) return hi;
  return static_cast<int64_t>(v);
}

inline int64_t quantize_to_code(double real, const QuantParams& q, size_t channel) {
  const double scaled = real / static_cast<double>(q.scale_for(channel));
  return clamp_code(round_half_away(scaled) + q.zero_point_for(channel), q.code_min(),
                    q.code_max());
}

inline double dequantize_code(double code, const QuantParams& q, size_t channel) {
  return (code - q.zero_point_for(channel)) * static_cast<double>(q.scale_for(channel));
}

// Element i of a tensor with `shape` lies in channel (i / inner) % extent of
// the quantized axis.
struct ChannelIndexer {
  int64_t inner = 1;
  int64_t extent = 1;
  bool per_channel = false;

  ChannelIndexer(const Shape& shape, const QuantParams& q) {
    if (q.per_channel() && q.axis < static_cast<int>(shape.size())) {
      per_channel = true;
      extent = shape[q.axis];
      for (size_t d = q.axis + 1; d < shape.size(); ++d) inner *= shape[d];
    }
  }
  size_t operator()(size_t i) const {
    return per_channel ? static_cast<size_t>((i / inner) % extent) : 0;
  }
};

}  // namespace noptc

#endif  // NOPTC_QUANT_MATH_H_
