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

#ifndef NOPTC_REPORT_H_
#define NOPTC_REPORT_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "noptc/graph.h"

namespace noptc {

struct RuleFire {
  std::string rule;
  int sweep = 0;
  // Node the rewrite was anchored at (in the graph it was applied to).
  NodeId anchor = 0;
  int64_t cost_before = 0;
  int64_t cost_after = 0;
};

struct PassReport {
  std::string name;
  int64_t nodes_before = 0;
  int64_t nodes_after = 0;
  // Constant payload plus quantization-parameter bytes.
  int64_t bytes_before = 0;
  int64_t bytes_after = 0;
  // Serialized .topt size; filled by the pipeline, -1 when not measured.
  int64_t file_bytes_before = -1;
  int64_t file_bytes_after = -1;
  int64_t mults_before = 0;
  int64_t mults_after = 0;
  std::vector<RuleFire> rule_fires;
  // Free-form diagnostics (skipped sites, limits hit).
  std::vector<std::string> notes;
  bool iteration_limit = false;
};

// Raw bytes of all constant payloads.
int64_t payload_bytes(const Graph& graph);
// payload_bytes plus 4 bytes per scale and 1 byte per zero point of every
// quantized tensor, subgraphs included.
int64_t model_bytes(const Graph& graph);

// Fills the node, byte and multiplication "before" fields from `graph`.
void record_before(PassReport& report, const Graph& graph);
void record_after(PassReport& report, const Graph& graph);

// Stable-key JSON rendering of a pipeline's pass reports with totals.
// Pipeline-level facts added to the report totals.
struct ReportContext {
  std::string preset;
  // Size of the input model's training checkpoint, -1 when not measured.
  int64_t checkpoint_bytes = -1;
};

std::string emit_report(const std::vector<PassReport>& reports,
                        const ReportContext& context = {});

}  // namespace noptc

#endif  // NOPTC_REPORT_H_
