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

#include "noptc/models.h"

#include <cmath>

#include <json.hpp>

#include "noptc/graph_utils.h"
#include "noptc/random.h"
#include "noptc/status.h"

namespace noptc {
namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::kInvalidSpec, what); }

std::vector<double> uniform_values(Rng& rng, int64_t n, double limit) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-limit, limit);
  return v;
}

TensorId dense(Graph& g, Rng& rng, TensorId x, int64_t in, int64_t out, bool relu) {
  const TensorId w = add_constant(g, {in, out}, DType::kF32,
                                  uniform_values(rng, in * out, std::sqrt(6.0 / in)));
  const TensorId b = add_constant(g, {out}, DType::kF32, uniform_values(rng, out, 0.1));
  TensorId y = emit1(g, OpKind::kBiasAdd, {emit1(g, OpKind::kMatMul, {x, w}), b});
  return relu ? emit1(g, OpKind::kRelu, {y}) : y;
}

std::vector<double> conv_filter(Rng& rng, int64_t c, int64_t o, bool separable) {
  const int64_t k = 3;
  const double limit = std::sqrt(6.0 / (k * k * c));
  if (!separable) return uniform_values(rng, k * k * c * o, limit);
  // Each factor has unit variance before scaling, so the product matches the
  // dense initializer's variance.
  const double unit = std::sqrt(3.0);
  const double scale = limit / std::sqrt(3.0);
  std::vector<double> w(k * k * c * o);
  for (int64_t oc = 0; oc < o; ++oc) {
    const auto u = uniform_values(rng, k, unit);
    const auto v = uniform_values(rng, k, unit);
    const auto p = uniform_values(rng, c, unit);
    for (int64_t a = 0; a < k; ++a)
      for (int64_t b = 0; b < k; ++b)
        for (int64_t ch = 0; ch < c; ++ch)
          w[((a * k + b) * c + ch) * o + oc] = scale * u[a] * v[b] * p[ch];
  }
  return w;
}

void require_positive(const std::vector<int64_t>& v, const std::string& what, size_t min_len) {
  if (v.size() < min_len) invalid(what + " needs at least " + std::to_string(min_len) + " entries");
  for (int64_t x : v) {
    if (x < 1 || x > 65536) invalid(what + " entries must be in [1, 65536]");
  }
}

}  // namespace

ModelSpec reference_cnn_spec(uint64_t seed) {
  ModelSpec s;
  s.kind = "cnn";
  s.input = {28, 28, 1};
  s.conv_channels = {16, 32};
  s.dense = {40};
  s.classes = 10;
  s.separable_filters = true;
  s.seed = seed;
  return s;
}

Graph make_mlp(const std::vector<int64_t>& sizes, uint64_t seed, bool softmax) {
  ModelSpec s;
  s.kind = "mlp";
  s.sizes = sizes;
  s.seed = seed;
  s.softmax = softmax;
  return generate_model(s);
}

Graph generate_model(const ModelSpec& spec) {
  Rng rng(spec.seed);
  Graph g;
  TensorId y;
  if (spec.kind == "mlp") {
    require_positive(spec.sizes, "mlp sizes", 2);
    y = add_input(g, "x", {1, spec.sizes[0]});
    for (size_t i = 1; i < spec.sizes.size(); ++i) {
      y = dense(g, rng, y, spec.sizes[i - 1], spec.sizes[i], i + 1 < spec.sizes.size());
    }
  } else if (spec.kind == "cnn") {
    require_positive(spec.input, "cnn input", 3);
    if (spec.input.size() != 3) invalid("cnn input must be [H, W, C]");
    require_positive(spec.conv_channels, "cnn conv_channels", 1);
    require_positive(spec.dense, "cnn dense", 0);
    if (spec.classes < 1) invalid("classes must be positive");
    int64_t h = spec.input[0], w = spec.input[1], c = spec.input[2];
    y = add_input(g, "x", {1, h, w, c});
    for (int64_t o : spec.conv_channels) {
      if (h < 2 || w < 2) invalid("too many pooling stages for the input size");
      const TensorId f =
          add_constant(g, {3, 3, c, o}, DType::kF32, conv_filter(rng, c, o, spec.separable_filters));
      const TensorId b = add_constant(g, {o}, DType::kF32, uniform_values(rng, o, 0.1));
      y = emit1(g, OpKind::kConv2D, {y, f, b},
                {{"padding", std::string("SAME")}, {"strides", std::vector<int64_t>{1, 1}}});
      y = emit1(g, OpKind::kRelu, {y});
      y = emit1(g, OpKind::kMaxPool, {y},
                {{"ksize", std::vector<int64_t>{2, 2}},
                 {"strides", std::vector<int64_t>{2, 2}},
                 {"padding", std::string("VALID")}});
      h /= 2;
      w /= 2;
      c = o;
    }
    int64_t width = h * w * c;
    y = emit1(g, OpKind::kReshape, {y}, {{"shape", std::vector<int64_t>{1, width}}});
    for (int64_t d : spec.dense) {
      y = dense(g, rng, y, width, d, true);
      width = d;
    }
    y = dense(g, rng, y, width, spec.classes, false);
  } else {
    invalid("unknown model kind '" + spec.kind + "'");
  }
  if (spec.softmax) y = emit1(g, OpKind::kSoftmax, {y});
  add_output(g, y, "y");
  return validated(g);
}

ModelSpec parse_model_spec(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    invalid(std::string("model spec is not JSON: ") + e.what());
  }
  if (!j.is_object()) invalid("model spec must be a JSON object");
  ModelSpec s;
  try {
    if (j.value("kind", "") == "reference") {
      s = reference_cnn_spec(j.value("seed", uint64_t{0}));
      for (const auto& [key, value] : j.items()) {
        if (key != "kind" && key != "seed") invalid("unexpected key '" + key + "' for reference");
      }
      return s;
    }
    for (const auto& [key, value] : j.items()) {
      if (key == "kind") {
        s.kind = value.get<std::string>();
      } else if (key == "sizes") {
        s.sizes = value.get<std::vector<int64_t>>();
      } else if (key == "input") {
        s.input = value.get<std::vector<int64_t>>();
      } else if (key == "conv_channels") {
        s.conv_channels = value.get<std::vector<int64_t>>();
      } else if (key == "dense") {
        s.dense = value.get<std::vector<int64_t>>();
      } else if (key == "classes") {
        s.classes = value.get<int64_t>();
      } else if (key == "separable_filters") {
        s.separable_filters = value.get<bool>();
      } else if (key == "softmax") {
        s.softmax = value.get<bool>();
      } else if (key == "seed") {
        s.seed = value.get<uint64_t>();
      } else {
        invalid("unknown model spec key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    invalid(std::string("bad model spec value: ") + e.what());
  }
  return s;
}

std::string model_spec_to_json(const ModelSpec& s) {
  nlohmann::json j = {{"kind", s.kind}, {"seed", s.seed}, {"softmax", s.softmax}};
  if (s.kind == "mlp") {
    j["sizes"] = s.sizes;
  } else {
    j["input"] = s.input;
    j["conv_channels"] = s.conv_channels;
    j["dense"] = s.dense;
    j["classes"] = s.classes;
    j["separable_filters"] = s.separable_filters;
  }
  return j.dump();
}

int64_t parameter_count(const Graph& graph) {
  int64_t n = 0;
  for (const ConstData& c : graph.constants) {
    n += element_count(graph.find_tensor(c.tensor_id)->shape);
  }
  for (const Graph& sub : graph.subgraphs) n += parameter_count(sub);
  return n;
}

}  // namespace noptc
