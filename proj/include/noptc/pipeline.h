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

#ifndef NOPTC_PIPELINE_H_
#define NOPTC_PIPELINE_H_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "noptc/arith_simplify.h"
#include "noptc/graph.h"
#include "noptc/interpreter.h"
#include "noptc/report.h"

namespace noptc {

// Pass names accepted by run_pipeline:
//   arith                      arithmetic rules to a fixpoint
//   dead loops identity ctrl-reduce fuse
//   structure                  the five structural passes in that order
//   ops-sep                    low-rank convolution separation
//   quant-weights quant-int8-fallback quant-int8 quant-f16
const std::vector<std::string>& pipeline_pass_names();

// smallest, accurate, fastest.
const std::vector<std::string>& preset_names();
// Throws InvalidPresetName.
std::vector<std::string> preset_passes(std::string_view preset);

// Comma-separated list; blanks are ignored. Throws UnknownRule.
std::vector<std::string> parse_pass_list(std::string_view csv);

struct PipelineOptions {
  std::vector<std::string> rules = default_rule_order();
  int64_t rank = 1;
  double separation_tolerance = 1e-3;
  // Calibration samples for the int8 passes, drawn by model_inputs().
  int calibration_samples = 64;
  uint64_t seed = 0;
  // Under quant-int8, leave a Softmax that only feeds graph outputs in float.
  bool keep_terminal_softmax_float = true;
};

struct PipelineResult {
  Graph graph;
  std::vector<PassReport> reports;
};

// A failing pass, re-raised with the pass name. The code is the original one.
class PassFailure : public Error {
 public:
  PassFailure(std::string pass, const Error& cause)
      : Error(cause.code(), "pass '" + pass + "' failed: " + cause.what(), cause.offset()),
        pass_(std::move(pass)) {}
  const std::string& pass() const { return pass_; }

 private:
  std::string pass_;
};

// Runs the passes in order; every report carries serialized file sizes.
// Unknown names raise UnknownRule before anything runs.
PipelineResult run_pipeline(const Graph& graph, const std::vector<std::string>& passes,
                            const PipelineOptions& options = {});

// `count` seeded input sets with values uniform in [0, 1) (image-like),
// typed after each graph input.
std::vector<TensorMap> model_inputs(const Graph& graph, int count, uint64_t seed);

struct DiffResult {
  int samples = 0;
  double max_abs = 0.0;
  // Largest |a - b| relative to max |a| of the same output and sample.
  double max_rel = 0.0;
  // Fraction of (sample, output) pairs with the same argmax.
  double argmax_agreement = 1.0;
  bool equivalent() const { return max_rel <= 1e-5 || argmax_agreement == 1.0; }
};

// Throws SignatureMismatch when input or output names/shapes differ.
DiffResult diff_models(const Graph& a, const Graph& b, int samples, uint64_t seed);

// NOPTC_SEED when set, else `fallback`. Throws InvalidArgument on garbage.
uint64_t default_seed(uint64_t fallback = 0);

}  // namespace noptc

#endif  // NOPTC_PIPELINE_H_
