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

#include "noptc/pipeline.h"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdlib>

#include "noptc/ops_opt.h"
#include "noptc/quantizer.h"
#include "noptc/random.h"
#include "noptc/serdes.h"
#include "noptc/structure_opt.h"

namespace noptc {
namespace {

std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<PassReport> run_one(const Graph& g, const std::string& name,
                                const PipelineOptions& opts, Graph& out) {
  if (name == "arith") {
    SimplifyResult r = simplify_to_fixpoint(g, opts.rules);
    out = std::move(r.graph);
    return {std::move(r.report)};
  }
  if (name == "structure") {
    StructureResult r = run_structure_passes(g);
    out = std::move(r.graph);
    return std::move(r.reports);
  }
  const auto& structural = structure_pass_names();
  if (std::find(structural.begin(), structural.end(), name) != structural.end()) {
    StructureResult r = run_structure_passes(g, {name});
    out = std::move(r.graph);
    return std::move(r.reports);
  }
  if (name == "ops-sep") {
    SeparateOptions so;
    so.rank = opts.rank;
    so.tolerance = opts.separation_tolerance;
    SeparateConvResult r = separate_convolutions(g, so);
    out = std::move(r.graph);
    return {std::move(r.report)};
  }
  GraphQuantMode mode;
  if (name == "quant-weights") {
    mode = GraphQuantMode::kWeightsOnly;
  } else if (name == "quant-int8-fallback") {
    mode = GraphQuantMode::kInt8FloatFallback;
  } else if (name == "quant-int8") {
    mode = GraphQuantMode::kInt8Only;
  } else {
    mode = GraphQuantMode::kFloat16;
  }
  std::vector<TensorMap> calib;
  if (mode == GraphQuantMode::kInt8FloatFallback || mode == GraphQuantMode::kInt8Only) {
    calib = model_inputs(g, opts.calibration_samples, opts.seed ^ 0x63616c6962ull);
  }
  QuantizeOptions qo;
  qo.keep_terminal_softmax_float = opts.keep_terminal_softmax_float;
  QuantizeResult r = quantize_graph(g, mode, calib, qo);
  out = std::move(r.graph);
  r.report.name = name;
  return {std::move(r.report)};
}

std::vector<double> real_values(const TensorValue& v) {
  return v.quant ? v.real() : v.data;
}

}  // namespace

const std::vector<std::string>& pipeline_pass_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n = {"arith", "structure"};
    for (const auto& s : structure_pass_names()) n.push_back(s);
    for (const char* s :
         {"ops-sep", "quant-weights", "quant-int8-fallback", "quant-int8", "quant-f16"}) {
      n.push_back(s);
    }
    return n;
  }();
  return names;
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"smallest", "accurate", "fastest"};
  return names;
}

std::vector<std::string> preset_passes(std::string_view preset) {
  if (preset == "smallest") return {"arith", "structure", "quant-int8-fallback"};
  if (preset == "accurate") return {"arith", "structure", "quant-int8"};
  if (preset == "fastest") return {"ops-sep", "quant-f16"};
  throw Error(ErrorCode::kInvalidPresetName,
              "unknown preset '" + std::string(preset) + "' (smallest, accurate, fastest)");
}

std::vector<std::string> parse_pass_list(std::string_view csv) {
  std::vector<std::string> out;
  const auto& known = pipeline_pass_names();
  size_t start = 0;
  while (start <= csv.size()) {
    size_t comma = csv.find(',', start);
    if (comma == std::string_view::npos) comma = csv.size();
    std::string name = trim(csv.substr(start, comma - start));
    if (!name.empty()) {
      if (std::find(known.begin(), known.end(), name) == known.end()) {
        throw Error(ErrorCode::kUnknownRule, "unknown pass '" + name + "'");
      }
      out.push_back(std::move(name));
    }
    start = comma + 1;
  }
  return out;
}

PipelineResult run_pipeline(const Graph& graph, const std::vector<std::string>& passes,
                            const PipelineOptions& options) {
  const auto& known = pipeline_pass_names();
  for (const std::string& p : passes) {
    if (std::find(known.begin(), known.end(), p) == known.end()) {
      throw Error(ErrorCode::kUnknownRule, "unknown pass '" + p + "'");
    }
  }
  for (const std::string& r : options.rules) builtin_rule(r);
  validated(graph);  // throws on an invalid input
  PipelineResult result{graph, {}};
  for (const std::string& name : passes) {
    const int64_t file_before = serialize(result.graph).size();
    Graph next;
    std::vector<PassReport> reports;
    try {
      reports = run_one(result.graph, name, options, next);
      const ValidationResult v = validate(next);
      if (!v.ok()) throw Error(ErrorCode::kInvalidNode, "output graph invalid: " + v.summary());
    } catch (const Error& e) {
      throw PassFailure(name, e);
    }
    const int64_t file_after = serialize(next).size();
    for (size_t i = 0; i < reports.size(); ++i) {
      // Sub-pass file sizes are only known at the ends of the group.
      reports[i].file_bytes_before = i == 0 ? file_before : -1;
      reports[i].file_bytes_after = i + 1 == reports.size() ? file_after : -1;
      result.reports.push_back(std::move(reports[i]));
    }
    result.graph = std::move(next);
  }
  return result;
}

std::vector<TensorMap> model_inputs(const Graph& graph, int count, uint64_t seed) {
  Rng rng(seed);
  std::vector<TensorMap> out;
  for (int s = 0; s < count; ++s) {
    TensorMap m;
    for (TensorId id : graph.inputs) {
      const TensorSpec& spec = *graph.find_tensor(id);
      const int64_t n = element_count(spec.shape);
      std::vector<double> v(n);
      if (spec.dtype == DType::kBool) {
        for (double& x : v) x = rng.coin() ? 1.0 : 0.0;
      } else if (spec.dtype == DType::kI32 || spec.dtype == DType::kI8) {
        for (double& x : v) x = static_cast<double>(rng.integer(0, 9));
      } else {
        for (double& x : v) x = rng.uniform();
      }
      m[tensor_display_name(spec)] = TensorValue::from(spec.shape, std::move(v), spec.dtype);
    }
    out.push_back(std::move(m));
  }
  return out;
}

DiffResult diff_models(const Graph& a, const Graph& b, int samples, uint64_t seed) {
  auto signature = [](const Graph& g, const std::vector<TensorId>& ids) {
    std::vector<std::pair<std::string, Shape>> sig;
    for (TensorId id : ids) {
      const TensorSpec& t = *g.find_tensor(id);
      sig.emplace_back(tensor_display_name(t), t.shape);
    }
    return sig;
  };
  if (signature(a, a.inputs) != signature(b, b.inputs)) {
    throw Error(ErrorCode::kSignatureMismatch, "models have different inputs");
  }
  if (signature(a, a.outputs) != signature(b, b.outputs)) {
    throw Error(ErrorCode::kSignatureMismatch, "models have different outputs");
  }
  const std::vector<TensorMap> ins_a = model_inputs(a, samples, seed);
  const std::vector<TensorMap> ins_b = model_inputs(b, samples, seed);
  DiffResult d;
  d.samples = samples;
  int64_t pairs = 0, agree = 0;
  for (int s = 0; s < samples; ++s) {
    const TensorMap oa = run(a, ins_a[s]).outputs;
    const TensorMap ob = run(b, ins_b[s]).outputs;
    for (const auto& [name, va] : oa) {
      const std::vector<double> x = real_values(va);
      const std::vector<double> y = real_values(ob.at(name));
      double diff = 0.0, scale = 0.0;
      for (size_t i = 0; i < x.size(); ++i) {
        diff = std::max(diff, std::abs(x[i] - y[i]));
        scale = std::max(scale, std::abs(x[i]));
      }
      d.max_abs = std::max(d.max_abs, diff);
      d.max_rel = std::max(d.max_rel, scale > 0 ? diff / scale : (diff > 0 ? INFINITY : 0.0));
      ++pairs;
      if (!x.empty()) {
        agree += std::max_element(x.begin(), x.end()) - x.begin() ==
                 std::max_element(y.begin(), y.end()) - y.begin();
      } else {
        ++agree;
      }
    }
  }
  d.argmax_agreement = pairs == 0 ? 1.0 : static_cast<double>(agree) / static_cast<double>(pairs);
  return d;
}

uint64_t default_seed(uint64_t fallback) {
  const char* env = std::getenv("NOPTC_SEED");
  if (!env || !*env) return fallback;
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (errno != 0 || *end != '\0' || env[0] == '-') {
    throw Error(ErrorCode::kInvalidArgument, std::string("NOPTC_SEED is not a seed: ") + env);
  }
  return v;
}

}  // namespace noptc
