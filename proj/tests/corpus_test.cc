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

#include "noptc/corpus.h"

#include <gtest/gtest.h>

#include <filesystem>

#include "noptc/serdes.h"
#include "test_util.h"

namespace noptc {
namespace {

GraphGenSpec spec_for(const std::string& rule, uint64_t seed) {
  GraphGenSpec s;
  s.rule = rule;
  s.seed = seed;
  return s;
}

TEST(Corpus, ElevenTargets) {
  EXPECT_EQ(corpus_rule_names().size(), 11u);
  EXPECT_TRUE(is_structural_pass("fuse"));
  EXPECT_FALSE(is_structural_pass("fold"));
}

TEST(Corpus, FlattenSeedOneHasDeepAddTree) {
  const Graph g = gen_for_rule(spec_for("flatten", 1));
  EXPECT_GE(max_add_tree_depth(g), 3);
}

TEST(Corpus, FlattenAlwaysDeep) {
  for (uint64_t s = 0; s < 50; ++s) EXPECT_GE(max_add_tree_depth(gen_for_rule(spec_for("flatten", s))), 3);
}

TEST(Corpus, AddTreeDepthOracle) {
  Graph g;
  const TensorId a = add_input(g, "a", {2});
  TensorId t = a;
  for (int i = 0; i < 4; ++i) t = emit1(g, OpKind::kAdd, {t, a});
  add_output(g, t, "y");
  EXPECT_EQ(max_add_tree_depth(g), 4);
}

TEST(Corpus, Deterministic) {
  for (const std::string& rule : corpus_rule_names()) {
    EXPECT_EQ(serialize(gen_for_rule(spec_for(rule, 9))).bytes,
              serialize(gen_for_rule(spec_for(rule, 9))).bytes)
        << rule;
  }
}

TEST(Corpus, SeedsDiffer) {
  EXPECT_NE(gen_for_rule(spec_for("fold", 1)), gen_for_rule(spec_for("fold", 2)));
}

TEST(Corpus, UnknownRule) {
  try {
    gen_for_rule(spec_for("nope", 0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownRule);
  }
}

TEST(Corpus, BadBoundsRejected) {
  GraphGenSpec s = spec_for("fold", 0);
  s.min_distractors = 5;
  s.max_distractors = 2;
  try {
    gen_for_rule(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidSpec);
  }
}

TEST(Corpus, DistractorBoundsRespected) {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    GraphGenSpec s = spec_for("dead", seed);
    s.min_distractors = s.max_distractors = 0;
    // Pattern (at most 3 nodes) plus the one node that consumes it.
    EXPECT_LE(gen_for_rule(s).nodes.size(), 4u);
    s.min_distractors = s.max_distractors = 20;
    EXPECT_GE(gen_for_rule(s).nodes.size(), 21u);
  }
}

TEST(Corpus, IntegerMixPresent) {
  int integer = 0;
  for (uint64_t s = 0; s < 40; ++s) {
    const Graph g = gen_for_rule(spec_for("reduce", s));
    integer += g.find_tensor(g.inputs[0])->dtype == DType::kI32;
  }
  EXPECT_GT(integer, 0);
  EXPECT_LT(integer, 40);
}

// Every generated graph validates and its target fires.
TEST(Corpus, ValidAndTargetFires) {
  for (const std::string& rule : corpus_rule_names()) {
    for (uint64_t s = 0; s < 30; ++s) {
      const Graph g = gen_for_rule(spec_for(rule, s));
      ASSERT_TRUE(validate(g).ok()) << rule << " " << s;
      EXPECT_GE(apply_target(g, rule).fires, 1) << rule << " " << s;
    }
  }
}

TEST(Corpus, SerdesRoundTrip) {
  for (const CorpusEntry& e : build_corpus(10)) {
    EXPECT_EQ(deserialize(serialize(e.graph).bytes), e.graph) << e.rule << " " << e.seed;
  }
}

TEST(Corpus, WriteCorpus) {
  const auto dir = std::filesystem::temp_directory_path() / "noptc_corpus_test";
  std::filesystem::remove_all(dir);
  const auto paths = write_corpus(dir.string(), 2, 5);
  EXPECT_EQ(paths.size(), 2 * 11 + 2u);
  for (const auto& p : paths) EXPECT_NO_THROW(deserialize(read_file(p))) << p;
  std::filesystem::remove_all(dir);
}

TEST(NormwiseError, Oracle) {
  TensorMap a, b;
  a["y"] = TensorValue::from({3}, {1.0, -4.0, 2.0});
  b["y"] = TensorValue::from({3}, {1.0, -4.0, 2.004});
  EXPECT_NEAR(max_normwise_error(a, b), 0.001, 1e-12);
  EXPECT_EQ(max_normwise_error(a, a), 0.0);
  b["z"] = a["y"];
  EXPECT_TRUE(std::isinf(max_normwise_error(a, b)));
}

}  // namespace
}  // namespace noptc
