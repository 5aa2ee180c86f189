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

#ifndef NOPTC_TESTS_TEST_UTIL_H_
#define NOPTC_TESTS_TEST_UTIL_H_

#include <functional>
#include <string>
#include <vector>

#include "noptc/graph.h"
#include "noptc/graph_utils.h"
#include "noptc/interpreter.h"
#include "noptc/random.h"

namespace noptc::testing {

inline std::vector<double> random_values(Rng& rng, int64_t n, double lo = -1.0,
                                         double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Random values for every graph input (booleans as 0/1).
inline TensorMap random_inputs(const Graph& g, Rng& rng, double lo = -1.0,
                               double hi = 1.0) {
  TensorMap m;
  for (TensorId id : g.inputs) {
    const TensorSpec& spec = *g.find_tensor(id);
    TensorValue v;
    v.shape = spec.shape;
    v.dtype = is_float(spec.dtype) ? spec.dtype : DType::kF32;
    const int64_t n = element_count(spec.shape);
    if (spec.dtype == DType::kBool) {
      v.dtype = DType::kBool;
      for (int64_t i = 0; i < n; ++i) v.data.push_back(rng.coin() ? 1.0 : 0.0);
    } else if (spec.dtype == DType::kI32) {
      v.dtype = DType::kI32;
      for (int64_t i = 0; i < n; ++i) v.data.push_back(static_cast<double>(rng.integer(-20, 20)));
    } else {
      v.data = random_values(rng, n, lo, hi);
    }
    m[tensor_display_name(spec)] = std::move(v);
  }
  return m;
}

inline TensorMap single_input(const std::string& name, Shape shape,
                              std::vector<double> data) {
  TensorMap m;
  m[name] = TensorValue::from(std::move(shape), std::move(data));
  return m;
}

// First (usually only) output of a run.
inline TensorValue only_output(const RunResult& r) { return r.outputs.begin()->second; }

inline int count_ops(const Graph& g, OpKind op) {
  int n = 0;
  for (const Node& node : g.nodes) n += node.op == op;
  return n;
}

}  // namespace noptc::testing

#endif  // NOPTC_TESTS_TEST_UTIL_H_
