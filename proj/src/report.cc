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

#include "noptc/report.h"

#include <json.hpp>

#include "noptc/interpreter.h"

namespace noptc {

int64_t payload_bytes(const Graph& graph) {
  int64_t total = 0;
  for (const ConstData& c : graph.constants) total += static_cast<int64_t>(c.payload.size());
  for (const Graph& sub : graph.subgraphs) total += payload_bytes(sub);
  return total;
}

int64_t model_bytes(const Graph& graph) {
  int64_t total = 0;
  for (const ConstData& c : graph.constants) total += static_cast<int64_t>(c.payload.size());
  for (const TensorSpec& t : graph.tensors) {
    if (t.quant) {
      total += 4 * static_cast<int64_t>(t.quant->scales.size()) +
               static_cast<int64_t>(t.quant->zero_points.size());
    }
  }
  for (const Graph& sub : graph.subgraphs) total += model_bytes(sub);
  return total;
}

void record_before(PassReport& report, const Graph& graph) {
  report.nodes_before = static_cast<int64_t>(graph.nodes.size());
  report.bytes_before = model_bytes(graph);
  report.mults_before = count_multiplications(graph).multiplications;
}

void record_after(PassReport& report, const Graph& graph) {
  report.nodes_after = static_cast<int64_t>(graph.nodes.size());
  report.bytes_after = model_bytes(graph);
  report.mults_after = count_multiplications(graph).multiplications;
}

namespace {

double ratio(int64_t before, int64_t after) {
  if (before <= 0 || after <= 0) return 1.0;
  return static_cast<double>(before) / static_cast<double>(after);
}

}  // namespace

std::string emit_report(const std::vector<PassReport>& reports, const ReportContext& context) {
  using nlohmann::ordered_json;
  ordered_json passes = ordered_json::array();
  int64_t fires = 0;
  for (const PassReport& r : reports) {
    ordered_json p;
    p["name"] = r.name;
    p["nodes_before"] = r.nodes_before;
    p["nodes_after"] = r.nodes_after;
    p["bytes_before"] = r.bytes_before;
    p["bytes_after"] = r.bytes_after;
    p["file_bytes_before"] = r.file_bytes_before;
    p["file_bytes_after"] = r.file_bytes_after;
    p["mults_before"] = r.mults_before;
    p["mults_after"] = r.mults_after;
    p["iteration_limit"] = r.iteration_limit;
    ordered_json rf = ordered_json::array();
    for (const RuleFire& f : r.rule_fires) {
      ordered_json e;
      e["rule"] = f.rule;
      e["sweep"] = f.sweep;
      e["anchor"] = f.anchor;
      e["cost_before"] = f.cost_before;
      e["cost_after"] = f.cost_after;
      rf.push_back(e);
    }
    fires += static_cast<int64_t>(r.rule_fires.size());
    p["rule_fires"] = rf;
    p["notes"] = r.notes;
    passes.push_back(p);
  }
  ordered_json totals;
  totals["passes"] = reports.size();
  if (reports.empty()) {
    totals["nodes_before"] = 0;
    totals["nodes_after"] = 0;
    totals["bytes_before"] = 0;
    totals["bytes_after"] = 0;
    totals["file_bytes_before"] = -1;
    totals["file_bytes_after"] = -1;
    totals["mults_before"] = 0;
    totals["mults_after"] = 0;
  } else {
    const PassReport& first = reports.front();
    const PassReport& last = reports.back();
    totals["nodes_before"] = first.nodes_before;
    totals["nodes_after"] = last.nodes_after;
    totals["bytes_before"] = first.bytes_before;
    totals["bytes_after"] = last.bytes_after;
    totals["file_bytes_before"] = first.file_bytes_before;
    totals["file_bytes_after"] = last.file_bytes_after;
    totals["mults_before"] = first.mults_before;
    totals["mults_after"] = last.mults_after;
  }
  totals["rule_fires"] = fires;
  totals["compression_ratio"] =
      reports.empty() ? 1.0 : ratio(reports.front().bytes_before, reports.back().bytes_after);
  totals["file_compression_ratio"] =
      reports.empty() ? 1.0
                      : ratio(reports.front().file_bytes_before, reports.back().file_bytes_after);
  totals["checkpoint_bytes"] = context.checkpoint_bytes;
  totals["checkpoint_ratio"] =
      reports.empty() ? 1.0 : ratio(context.checkpoint_bytes, reports.back().file_bytes_after);
  ordered_json doc;
  doc["format"] = "noptc-report";
  doc["version"] = 1;
  doc["preset"] = context.preset;
  doc["passes"] = passes;
  doc["totals"] = totals;
  return doc.dump(2) + "\n";
}

}  // namespace noptc
