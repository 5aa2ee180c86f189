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

#ifndef NOPTC_HALF_H_
#define NOPTC_HALF_H_

#include <cstdint>

namespace noptc {

// IEEE 754 binary16 conversions, round to nearest even.
uint16_t float_to_half_bits(float value);
float half_bits_to_float(uint16_t bits);

// Rounds a double to the nearest binary16 value (via float).
inline double round_to_half(double value) {
  return half_bits_to_float(float_to_half_bits(static_cast<float>(value)));
}

}  // namespace noptc

#endif  // NOPTC_HALF_H_
