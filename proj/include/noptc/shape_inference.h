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

#ifndef NOPTC_SHAPE_INFERENCE_H_
#define NOPTC_SHAPE_INFERENCE_H_

#include <span>
#include <vector>

#include "noptc/graph.h"

namespace noptc {

struct OutputType {
  Shape shape;
  DType dtype;
};

// Output shapes and dtypes of `node` given its input specs. `owner` is the
// graph holding the node (Loop bodies are looked up there). Throws Error with
// kShapeMismatch, kDTypeMismatch or kInvalidNode.
std::vector<OutputType> infer_output_types(
    const Node& node, std::span<const TensorSpec* const> inputs,
    const Graph& owner);

struct ConvGeometry {
  int64_t batch = 0;
  int64_t in_h = 0, in_w = 0, in_c = 0;
  int64_t k_h = 0, k_w = 0;
  // Output channels per input channel for depthwise filters; 0 otherwise.
  int64_t multiplier = 0;
  int64_t out_h = 0, out_w = 0, out_c = 0;
  int64_t stride_h = 1, stride_w = 1;
  int64_t pad_top = 0, pad_left = 0;
};

// Geometry of Conv2D / DepthwiseConv2D / FusedConvBnBias / pooling nodes.
// For pooling, `filter` is ignored and the window comes from "ksize".
ConvGeometry conv_geometry(const Node& node, const Shape& input,
                           const Shape& filter);

}  // namespace noptc

#endif  // NOPTC_SHAPE_INFERENCE_H_
