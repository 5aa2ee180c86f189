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

#include <gtest/gtest.h>
#include <json.hpp>

#include <cstdlib>
#include <fstream>

#include "noptc/models.h"
#include "noptc/serdes.h"
#include "json_schema.h"

namespace noptc {
namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::kInvalidArgument;
}

TEST(Presets, KnownNamesExpand) {
  EXPECT_EQ(preset_names(), (std::vector<std::string>{"smallest", "accurate", "fastest"}));
  EXPECT_EQ(preset_passes("smallest").back(), "quant-int8-fallback");
  EXPECT_EQ(preset_passes("accurate").back(), "quant-int8");
  EXPECT_EQ(preset_passes("fastest"), (std::vector<std::string>{"ops-sep", "quant-f16"}));
}

TEST(Presets, UnknownNameRejected) {
  EXPECT_EQ(code_of([] { preset_passes("tiny"); }), ErrorCode::kInvalidPresetName);
  EXPECT_EQ(code_of([] { preset_passes(""); }), ErrorCode::kInvalidPresetName);
}

TEST(PassList, ParsesAndSkipsBlanks) {
  EXPECT_EQ(parse_pass_list(" arith, ,dead,"), (std::vector<std::string>{"arith", "dead"}));
  EXPECT_TRUE(parse_pass_list("").empty());
  EXPECT_EQ(code_of([] { parse_pass_list("arith,shrink"); }), ErrorCode::kUnknownRule);
}

TEST(Pipeline, EmptyPassListKeepsBytes) {
  const Graph g = make_mlp({4, 8, 3}, 3);
  const PipelineResult r = run_pipeline(g, {});
  EXPECT_TRUE(r.reports.empty());
  EXPECT_EQ(serialize(r.graph).bytes, serialize(g).bytes);
}

TEST(Pipeline, UnknownRuleFailsBeforeRunning) {
  PipelineOptions opts;
  opts.rules = {"fold", "nonsense"};
  EXPECT_EQ(code_of([&] { run_pipeline(make_mlp({2, 2}, 1), {"arith"}, opts); }),
            ErrorCode::kUnknownRule);
}

TEST(Pipeline, ReportsCarryFileSizes) {
  const Graph g = make_mlp({4, 16, 3}, 5);
  const PipelineResult r = run_pipeline(g, {"arith", "quant-weights"});
  ASSERT_EQ(r.reports.size(), 2u);
  EXPECT_EQ(r.reports.front().file_bytes_before, static_cast<int64_t>(serialize(g).size()));
  EXPECT_EQ(r.reports.back().file_bytes_after, static_cast<int64_t>(serialize(r.graph).size()));
  EXPECT_LT(r.reports.back().bytes_after, r.reports.back().bytes_before);
}

TEST(Pipeline, FailingPassIsNamed) {
  PipelineOptions opts;
  opts.rank = 0;
  const Graph g = generate_model(reference_cnn_spec(1));
  try {
    run_pipeline(g, {"ops-sep"}, opts);
    FAIL() << "rank 0 accepted";
  } catch (const PassFailure& e) {
    EXPECT_EQ(e.pass(), "ops-sep");
    EXPECT_NE(std::string(e.what()).find("ops-sep"), std::string::npos);
  }
}

TEST(Pipeline, PresetsPreserveClassOnMlp) {
  const Graph g = make_mlp({6, 24, 4}, 11);
  for (const std::string& p : preset_names()) {
    const PipelineResult r = run_pipeline(g, preset_passes(p));
    const DiffResult d = diff_models(g, r.graph, 300, 2);
    EXPECT_GE(d.argmax_agreement, 0.97) << p;
    EXPECT_LT(serialize(r.graph).size(), serialize(g).size()) << p;
  }
}

TEST(Pipeline, FastestLowersMultiplications) {
  const Graph g = generate_model(reference_cnn_spec(0));
  const PipelineResult r = run_pipeline(g, preset_passes("fastest"));
  EXPECT_LT(r.reports.back().mults_after, r.reports.front().mults_before);
}

TEST(Pipeline, ReportDocumentTotals) {
  const Graph g = make_mlp({4, 8, 2}, 2);
  const PipelineResult r = run_pipeline(g, preset_passes("smallest"));
  ReportContext ctx{"smallest", static_cast<int64_t>(serialize_checkpoint(g).size())};
  const auto doc = nlohmann::json::parse(emit_report(r.reports, ctx));
  EXPECT_EQ(doc["preset"], "smallest");
  EXPECT_EQ(doc["passes"].size(), r.reports.size());
  const double expect = static_cast<double>(ctx.checkpoint_bytes) /
                        static_cast<double>(r.reports.back().file_bytes_after);
  EXPECT_DOUBLE_EQ(doc["totals"]["checkpoint_ratio"].get<double>(), expect);
}

nlohmann::json report_schema() {
  std::ifstream in(NOPTC_SCHEMA_PATH);
  return nlohmann::json::parse(in);
}

TEST(ReportSchema, PresetReportsValidate) {
  const nlohmann::json schema = report_schema();
  const Graph g = make_mlp({4, 8, 2}, 2);
  for (const std::string& p : preset_names()) {
    const PipelineResult r = run_pipeline(g, preset_passes(p));
    ReportContext ctx{p, static_cast<int64_t>(serialize_checkpoint(g).size())};
    const auto errors = testing::validate_json(nlohmann::json::parse(emit_report(r.reports, ctx)),
                                               schema);
    EXPECT_TRUE(errors.empty()) << p << ": " << errors.front();
  }
  const PipelineResult arith = run_pipeline(make_mlp({3, 3}, 1), {"arith", "structure"});
  EXPECT_TRUE(
      testing::validate_json(nlohmann::json::parse(emit_report(arith.reports)), schema).empty());
}

TEST(ReportSchema, ViolationsDetected) {
  const nlohmann::json schema = report_schema();
  const auto good = nlohmann::json::parse(
      emit_report(run_pipeline(make_mlp({3, 3}, 1), preset_passes("smallest")).reports));
  ASSERT_TRUE(testing::validate_json(good, schema).empty());
  auto missing = good;
  missing["totals"].erase("checkpoint_ratio");
  EXPECT_FALSE(testing::validate_json(missing, schema).empty());
  auto wrong_type = good;
  wrong_type["passes"][0]["nodes_after"] = "13";
  EXPECT_FALSE(testing::validate_json(wrong_type, schema).empty());
  auto extra = good;
  extra["speed"] = 1;
  EXPECT_FALSE(testing::validate_json(extra, schema).empty());
  auto version = good;
  version["version"] = 2;
  EXPECT_FALSE(testing::validate_json(version, schema).empty());
}

TEST(ModelInputs, SeededAndInRange) {
  const Graph g = make_mlp({5, 3}, 1);
  const auto a = model_inputs(g, 4, 9);
  const auto b = model_inputs(g, 4, 9);
  const auto c = model_inputs(g, 4, 10);
  ASSERT_EQ(a.size(), 4u);
  EXPECT_EQ(a[3].begin()->second.data, b[3].begin()->second.data);
  EXPECT_NE(a[0].begin()->second.data, c[0].begin()->second.data);
  for (const TensorMap& m : a) {
    for (double v : m.begin()->second.data) {
      EXPECT_GE(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(Diff, IdenticalModelsAreEquivalent) {
  const Graph g = make_mlp({3, 7, 2}, 4);
  const DiffResult d = diff_models(g, g, 50, 1);
  EXPECT_EQ(d.samples, 50);
  EXPECT_EQ(d.max_abs, 0.0);
  EXPECT_EQ(d.argmax_agreement, 1.0);
  EXPECT_TRUE(d.equivalent());
}

TEST(Diff, DifferentWeightsDetected) {
  const DiffResult d = diff_models(make_mlp({3, 7, 2}, 4), make_mlp({3, 7, 2}, 5), 200, 1);
  EXPECT_GT(d.max_rel, 1e-3);
  EXPECT_LT(d.argmax_agreement, 1.0);
  EXPECT_FALSE(d.equivalent());
}

TEST(Diff, SignatureMismatchRaised) {
  EXPECT_EQ(code_of([] { diff_models(make_mlp({3, 2}, 1), make_mlp({4, 2}, 1), 1, 0); }),
            ErrorCode::kSignatureMismatch);
}

TEST(Seed, ReadsEnvironment) {
  ::unsetenv("NOPTC_SEED");
  EXPECT_EQ(default_seed(17), 17u);
  ::setenv("NOPTC_SEED", "12345", 1);
  EXPECT_EQ(default_seed(17), 12345u);
  ::setenv("NOPTC_SEED", "12x", 1);
  EXPECT_EQ(code_of([] { default_seed(); }), ErrorCode::kInvalidArgument);
  ::unsetenv("NOPTC_SEED");
}

}  // namespace
}  // namespace noptc
