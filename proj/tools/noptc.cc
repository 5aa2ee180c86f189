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

// noptc: optimize, run, diff and generate .topt models.
//
// Exit codes: 0 success, 1 pass or check failure, 2 usage error.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include "noptc/corpus.h"
#include "noptc/models.h"
#include "noptc/pipeline.h"
#include "noptc/pruning.h"
#include "noptc/serdes.h"
#include "noptc/trainer.h"

namespace {

using namespace noptc;

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr double kMinAgreement = 0.99;

bool is_usage_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidPresetName:
    case ErrorCode::kUnknownRule:
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kInvalidSpec:
    case ErrorCode::kInvalidIdentifier:
    case ErrorCode::kSignatureMismatch:
      return true;
    default:
      return false;
  }
}

// C symbol from a file name: "out/my-model.c" -> "my_model".
std::string symbol_for(const std::string& path) {
  std::string s = std::filesystem::path(path).stem().string();
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
  }
  if (s.empty() || std::isdigit(static_cast<unsigned char>(s[0]))) s = "model_" + s;
  if (!is_c_identifier(s)) s += "_data";
  return s;
}

Graph load_model(const std::string& path) { return deserialize(read_file(path)); }

void save_model(const Graph& g, const std::string& path, const std::string& emit_c) {
  const ModelBinary b = serialize(g);
  write_file(path, b.bytes);
  if (!emit_c.empty()) write_text_file(emit_c, emit_c_array(b.bytes, symbol_for(emit_c)));
}

struct Common {
  uint64_t seed = 0;
  bool seed_given = false;
  uint64_t resolved() const { return seed_given ? seed : default_seed(0); }
};

int cmd_optimize(const std::string& input, const std::string& output, const std::string& preset,
                 bool preset_given, const std::string& passes, bool passes_given,
                 const std::string& rules, bool rules_given, int64_t rank, double sep_tol,
                 const std::string& emit_c, const std::string& report, int calib,
                 int check_samples, uint64_t seed) {
  if (preset_given == passes_given) {
    throw Error(ErrorCode::kInvalidArgument, "give exactly one of --preset and --passes");
  }
  const std::vector<std::string> steps =
      preset_given ? preset_passes(preset) : parse_pass_list(passes);
  PipelineOptions opts;
  if (rules_given) {
    opts.rules.clear();
    std::string cur;
    for (char ch : rules + ",") {
      if (ch == ',') {
        if (!cur.empty()) opts.rules.push_back(cur);
        cur.clear();
      } else if (!std::isspace(static_cast<unsigned char>(ch))) {
        cur += ch;
      }
    }
  }
  opts.rank = rank;
  opts.separation_tolerance = sep_tol;
  opts.calibration_samples = calib;
  opts.seed = seed;

  const Graph model = load_model(input);
  const PipelineResult r = run_pipeline(model, steps, opts);
  save_model(r.graph, output, emit_c);

  ReportContext ctx;
  ctx.preset = preset_given ? preset : "";
  ctx.checkpoint_bytes = serialize_checkpoint(model).size();
  auto doc = nlohmann::ordered_json::parse(emit_report(r.reports, ctx));
  std::optional<DiffResult> check;
  if (check_samples > 0) {
    check = diff_models(model, r.graph, check_samples, seed);
    doc["check"] = {{"samples", check->samples},
                    {"max_abs", check->max_abs},
                    {"max_rel", check->max_rel},
                    {"argmax_agreement", check->argmax_agreement}};
  }
  if (!report.empty()) write_text_file(report, doc.dump(2) + "\n");

  for (const PassReport& p : r.reports) {
    std::printf("%-20s nodes %5lld -> %5lld  bytes %8lld -> %8lld  mults %10lld -> %10lld\n",
                p.name.c_str(), static_cast<long long>(p.nodes_before),
                static_cast<long long>(p.nodes_after), static_cast<long long>(p.bytes_before),
                static_cast<long long>(p.bytes_after), static_cast<long long>(p.mults_before),
                static_cast<long long>(p.mults_after));
  }
  const int64_t in_bytes = static_cast<int64_t>(read_file(input).size());
  const int64_t out_bytes = static_cast<int64_t>(read_file(output).size());
  std::printf("file %lld -> %lld bytes (%.3fx); checkpoint %lld bytes (%.3fx)\n",
              static_cast<long long>(in_bytes), static_cast<long long>(out_bytes),
              static_cast<double>(in_bytes) / static_cast<double>(out_bytes),
              static_cast<long long>(ctx.checkpoint_bytes),
              static_cast<double>(ctx.checkpoint_bytes) / static_cast<double>(out_bytes));
  if (check) {
    std::printf("check on %d inputs: argmax agreement %.4f, max rel %.3g\n", check->samples,
                check->argmax_agreement, check->max_rel);
    if (check->argmax_agreement < kMinAgreement) {
      std::fprintf(stderr, "noptc: optimized model agrees with the input on only %.2f%% of argmaxes\n",
                   100.0 * check->argmax_agreement);
      return kExitFailure;
    }
  }
  return 0;
}

// {"x": [..]} or {"x": {"shape": [..], "values": [..]}}, or an array of
// such objects for several samples. Values are typed after the graph input.
std::vector<TensorMap> inputs_from_json(const Graph& g, const std::string& path) {
  const auto bytes = read_file(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, path + ": " + e.what());
  }
  if (!doc.is_array()) doc = nlohmann::json::array({doc});
  std::vector<TensorMap> samples;
  for (const auto& entry : doc) {
    if (!entry.is_object()) throw Error(ErrorCode::kInvalidArgument, path + ": expected objects");
    TensorMap m;
    for (TensorId id : g.inputs) {
      const TensorSpec& spec = *g.find_tensor(id);
      const std::string name = tensor_display_name(spec);
      if (!entry.contains(name)) {
        throw Error(ErrorCode::kInvalidArgument, path + ": no values for input '" + name + "'");
      }
      const auto& item = entry[name];
      TensorValue v;
      v.dtype = spec.dtype;
      v.quant = spec.quant;
      v.shape = spec.shape;
      try {
        if (item.is_object()) {
          v.shape = item.at("shape").get<Shape>();
          v.data = item.at("values").get<std::vector<double>>();
        } else {
          v.data = item.get<std::vector<double>>();
        }
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kInvalidArgument, path + ": input '" + name + "': " + e.what());
      }
      if (static_cast<int64_t>(v.data.size()) != element_count(v.shape)) {
        throw Error(ErrorCode::kInvalidArgument,
                    path + ": input '" + name + "' has " + std::to_string(v.data.size()) +
                        " values for shape of " + std::to_string(element_count(v.shape)));
      }
      m[name] = std::move(v);
    }
    for (const auto& [key, _] : entry.items()) {
      if (!m.contains(key)) throw Error(ErrorCode::kInvalidArgument, path + ": unknown input '" + key + "'");
    }
    samples.push_back(std::move(m));
  }
  return samples;
}

nlohmann::ordered_json stats_json(const ExecStats& st) {
  nlohmann::ordered_json j;
  j["multiplications"] = st.multiplications;
  j["additions"] = st.additions;
  j["macs"] = st.macs;
  j["mults_per_element_sum"] = st.mults_per_element_sum();
  nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
  for (const NodeStats& n : st.per_node) {
    nodes.push_back({{"node", n.node},
                     {"op", std::string(op_name(n.op))},
                     {"output_elements", n.output_elements},
                     {"mults_per_element", n.mults_per_element},
                     {"multiplications", n.multiplications},
                     {"additions", n.additions},
                     {"macs", n.macs}});
  }
  j["nodes"] = nodes;
  return j;
}

int cmd_run(const std::string& input, const std::string& data, const std::string& stats,
            int samples, uint64_t seed) {
  const Graph g = load_model(input);
  const std::vector<TensorMap> inputs =
      data.empty() ? model_inputs(g, samples, seed) : inputs_from_json(g, data);
  nlohmann::ordered_json doc;
  doc["model"] = input;
  if (data.empty()) doc["seed"] = seed;
  nlohmann::ordered_json runs = nlohmann::ordered_json::array();
  nlohmann::ordered_json run_stats = nlohmann::ordered_json::array();
  for (const TensorMap& in : inputs) {
    const RunResult r = run(g, in);
    nlohmann::ordered_json outs;
    for (const auto& [name, v] : r.outputs) {
      const std::vector<double> x = v.quant ? v.real() : v.data;
      nlohmann::ordered_json o;
      o["shape"] = v.shape;
      o["dtype"] = std::string(dtype_name(v.dtype));
      o["argmax"] = x.empty() ? -1 : std::max_element(x.begin(), x.end()) - x.begin();
      o["values"] = x;
      outs[name] = o;
    }
    nlohmann::ordered_json entry;
    entry["outputs"] = outs;
    entry["multiplications"] = r.stats.multiplications;
    runs.push_back(entry);
    run_stats.push_back(stats_json(r.stats));
  }
  doc["runs"] = runs;
  if (!stats.empty()) {
    nlohmann::ordered_json sdoc;
    sdoc["model"] = input;
    sdoc["runs"] = run_stats;
    write_text_file(stats, sdoc.dump(2) + "\n");
  }
  std::cout << doc.dump(2) << "\n";
  return 0;
}

int cmd_diff(const std::string& a, const std::string& b, int samples, uint64_t seed) {
  const DiffResult d = diff_models(load_model(a), load_model(b), samples, seed);
  nlohmann::ordered_json doc;
  doc["samples"] = d.samples;
  doc["max_abs"] = d.max_abs;
  doc["max_rel"] = d.max_rel;
  doc["argmax_agreement"] = d.argmax_agreement;
  doc["equivalent"] = d.equivalent();
  std::cout << doc.dump(2) << "\n";
  return d.equivalent() ? 0 : kExitFailure;
}

struct CnnFlags {
  std::vector<int64_t> image;
  std::vector<int64_t> conv;
  std::vector<int64_t> dense;
  int64_t classes = 10;
  bool separable = false;
};

int cmd_genmodel(const std::string& spec_file, const std::string& kind,
                 const std::vector<int64_t>& sizes, const CnnFlags& cnn, uint64_t seed,
                 const std::string& output, bool checkpoint, const std::string& emit_c) {
  ModelSpec spec;
  if (!spec_file.empty()) {
    const auto bytes = read_file(spec_file);
    spec = parse_model_spec(std::string(bytes.begin(), bytes.end()));
  } else if (kind == "reference") {
    spec = reference_cnn_spec(seed);
  } else {
    nlohmann::json j;
    j["kind"] = kind;
    if (kind == "mlp") j["sizes"] = sizes;
    if (kind == "cnn") {
      j["input"] = cnn.image;
      j["conv_channels"] = cnn.conv;
      j["dense"] = cnn.dense;
      j["classes"] = cnn.classes;
      j["separable_filters"] = cnn.separable;
    }
    j["seed"] = seed;
    spec = parse_model_spec(j.dump());
  }
  const Graph g = generate_model(spec);
  if (checkpoint) {
    write_file(output, serialize_checkpoint(g).bytes);
  } else {
    save_model(g, output, emit_c);
  }
  std::printf("%s: %lld parameters, %lld bytes\n", output.c_str(),
              static_cast<long long>(parameter_count(g)),
              static_cast<long long>(read_file(output).size()));
  return 0;
}

int cmd_train_demo(int64_t steps, double sparsity, int bits, uint64_t seed,
                   const std::string& output, const std::string& report) {
  const DataSplit data = make_blobs(100, 100, seed);
  const Graph model = make_mlp({2, 16, 2}, seed);
  TrainConfig dense_cfg;
  dense_cfg.steps = steps;
  const TrainResult dense = train_toy(model, data, dense_cfg);
  TrainConfig cfg = dense_cfg;
  if (sparsity > 0) {
    SparsitySchedule s;
    s.s_final = sparsity;
    s.delta_t = 10;
    s.span_steps = std::max<int64_t>(10, (steps * 3 / 5) / 10 * 10);
    cfg.schedule = s;
  }
  if (bits > 0) cfg.fake_quant_bits = bits;
  const TrainResult r = train_toy(model, data, cfg);
  std::printf("dense:  train %.3f  test %.3f\n", dense.train_accuracy, dense.test_accuracy);
  std::printf("pruned: train %.3f  test %.3f  sparsity", r.train_accuracy, r.test_accuracy);
  for (double s : r.layer_sparsity) std::printf(" %.3f", s);
  std::printf("\n");
  if (!output.empty()) write_file(output, serialize(r.graph).bytes);
  if (!report.empty()) {
    nlohmann::ordered_json doc;
    doc["dense_test_accuracy"] = dense.test_accuracy;
    doc["test_accuracy"] = r.test_accuracy;
    doc["layer_sparsity"] = r.layer_sparsity;
    nlohmann::ordered_json hist = nlohmann::ordered_json::array();
    for (const TrainPoint& p : r.history) {
      hist.push_back({{"step", p.step},
                      {"loss", p.loss},
                      {"train_accuracy", p.train_accuracy},
                      {"test_accuracy", p.test_accuracy},
                      {"sparsity", p.sparsity}});
    }
    doc["history"] = hist;
    write_text_file(report, doc.dump(2) + "\n");
  }
  return 0;
}

int cmd_gen_corpus(const std::string& dir, int count, uint64_t seed) {
  const auto paths = write_corpus(dir, count, seed);
  std::printf("wrote %zu files to %s\n", paths.size(), dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"noptc: graph optimizer and model packager"};
  app.require_subcommand(1);

  Common common;
  auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", common.seed, "random seed (default: NOPTC_SEED or 0)")
        ->each([&](const std::string&) { common.seed_given = true; });
  };

  std::string input, output, preset, passes, rules, emit_c, report;
  int64_t rank = 1;
  double sep_tol = 1e-3;
  int calib = 64, samples = 1;

  auto* opt = app.add_subcommand("optimize", "apply a preset or pass list to a model");
  opt->add_option("--input", input, "input .topt")->required();
  opt->add_option("--output", output, "output .topt")->required();
  auto* preset_opt = opt->add_option("--preset", preset, "smallest | accurate | fastest");
  auto* passes_opt = opt->add_option("--passes", passes, "comma-separated pass names");
  auto* rules_opt = opt->add_option("--rules", rules, "arithmetic rules for the arith pass");
  opt->add_option("--rank", rank, "separation rank");
  opt->add_option("--sep-tol", sep_tol, "separation tolerance relative to max |w|");
  opt->add_option("--emit-c", emit_c, "also write the model as a C array");
  opt->add_option("--report", report, "write the JSON pass report");
  opt->add_option("--calib", calib, "calibration samples for int8 passes");
  int check_samples = -1;
  opt->add_option("--samples", check_samples,
                  "inputs for the closing diff check (default 1000 with --preset, 0 disables)");
  add_seed(opt);

  auto* runc = app.add_subcommand("run", "run a model on seeded random inputs");
  runc->add_option("--input", input, "model")->required();
  std::string data, stats;
  runc->add_option("--data", data, "JSON input values (default: seeded random inputs)");
  runc->add_option("--stats", stats, "write operation counts as JSON");
  runc->add_option("--samples", samples, "number of random input samples");
  add_seed(runc);

  std::vector<std::string> diff_models_in;
  int diff_samples = 1000;
  auto* diff = app.add_subcommand("diff", "compare two models on seeded random inputs");
  diff->add_option("models", diff_models_in, "model A and model B")->required()->expected(2);
  diff->add_option("--samples", diff_samples, "number of input samples");
  add_seed(diff);

  std::string spec_file, kind = "mlp";
  std::vector<int64_t> sizes;
  bool checkpoint = false;
  auto* gen = app.add_subcommand("genmodel", "write a seeded random-weight model");
  gen->add_option("--spec", spec_file, "JSON model spec file");
  gen->add_option("--kind", kind, "mlp | cnn | reference");
  gen->add_option("--sizes", sizes, "mlp layer sizes, e.g. 2,8,2")->delimiter(',');
  CnnFlags cnn;
  gen->add_option("--image", cnn.image, "cnn input H,W,C")->delimiter(',');
  gen->add_option("--conv", cnn.conv, "cnn conv channels per stage")->delimiter(',');
  gen->add_option("--dense", cnn.dense, "cnn hidden dense widths")->delimiter(',');
  gen->add_option("--classes", cnn.classes, "cnn classes");
  gen->add_flag("--separable", cnn.separable, "draw conv filters as rank-1 products");
  gen->add_option("--output", output, "output file")->required();
  gen->add_flag("--checkpoint", checkpoint, "write the training-checkpoint variant");
  gen->add_option("--emit-c", emit_c, "also write the model as a C array");
  add_seed(gen);

  int64_t steps = 500;
  double sparsity = 0.5;
  int bits = 0;
  auto* train = app.add_subcommand("train-demo", "prune/QAT demo on a 2-D blobs task");
  train->add_option("--steps", steps, "training steps");
  train->add_option("--sparsity", sparsity, "final sparsity (0 disables pruning)");
  train->add_option("--bits", bits, "fake-quant bits (0 disables)");
  train->add_option("--output", output, "write the trained model");
  train->add_option("--report", report, "write the training history as JSON");
  add_seed(train);

  std::string corpus_dir;
  int count = 20;
  auto* corpus = app.add_subcommand("gen-corpus", "write the generated test corpus");
  corpus->add_option("--out", corpus_dir, "output directory")->required();
  corpus->add_option("--count", count, "graphs per rule");
  add_seed(corpus);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    const uint64_t seed = common.resolved();
    if (opt->parsed()) {
      return cmd_optimize(input, output, preset, preset_opt->count() > 0, passes,
                          passes_opt->count() > 0, rules, rules_opt->count() > 0, rank, sep_tol,
                          emit_c, report, calib,
                          check_samples >= 0 ? check_samples : (preset_opt->count() > 0 ? 1000 : 0),
                          seed);
    }
    if (runc->parsed()) return cmd_run(input, data, stats, samples, seed);
    if (diff->parsed()) return cmd_diff(diff_models_in[0], diff_models_in[1], diff_samples, seed);
    if (gen->parsed()) {
      return cmd_genmodel(spec_file, kind, sizes, cnn, seed, output, checkpoint, emit_c);
    }
    if (train->parsed()) return cmd_train_demo(steps, sparsity, bits, seed, output, report);
    if (corpus->parsed()) return cmd_gen_corpus(corpus_dir, count, seed);
  } catch (const PassFailure& e) {
    std::fprintf(stderr, "noptc: %s\n", e.what());
    return kExitFailure;
  } catch (const Error& e) {
    std::fprintf(stderr, "noptc: %s\n", e.what());
    return is_usage_error(e.code()) ? kExitUsage : kExitFailure;
  }
  return kExitUsage;
}
