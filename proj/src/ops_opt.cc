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

#include "noptc/ops_opt.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <string>

#include "noptc/graph_utils.h"
#include "noptc/status.h"
#include "noptc/svd.h"

namespace noptc {
namespace {

using Factors = std::vector<std::vector<double>>;  // rank x length

void check_rank(int64_t rank, int64_t rows, int64_t cols) {
  if (rank < 1 || rank > std::min(rows, cols)) {
    throw Error(ErrorCode::kInvalidArgument,
                "rank " + std::to_string(rank) + " outside [1, " +
                    std::to_string(std::min(rows, cols)) + "]");
  }
}

// Signed entry of largest magnitude (first one on ties).
double peak(const std::vector<double>& v) {
  double best = 0.0;
  for (double x : v) {
    if (std::abs(x) > std::abs(best)) best = x;
  }
  return best;
}

void fill_errors(SeparationResult& r, std::span<const double> original) {
  const std::vector<double> rec = r.reconstruct();
  double sq = 0.0, mx = 0.0;
  for (size_t i = 0; i < rec.size(); ++i) {
    const double d = original[i] - rec[i];
    sq += d * d;
    mx = std::max(mx, std::abs(d));
  }
  r.frobenius_error = std::sqrt(sq);
  r.max_abs_error = mx;
}

// Solves g z = rhs in place for a small dense system (partial pivoting).
bool solve(std::vector<double> g, std::vector<double>& rhs, int64_t n) {
  for (int64_t col = 0; col < n; ++col) {
    int64_t piv = col;
    for (int64_t r = col + 1; r < n; ++r) {
      if (std::abs(g[r * n + col]) > std::abs(g[piv * n + col])) piv = r;
    }
    if (std::abs(g[piv * n + col]) < 1e-300) return false;
    if (piv != col) {
      for (int64_t k = 0; k < n; ++k) std::swap(g[piv * n + k], g[col * n + k]);
      std::swap(rhs[piv], rhs[col]);
    }
    for (int64_t r = col + 1; r < n; ++r) {
      const double f = g[r * n + col] / g[col * n + col];
      for (int64_t k = col; k < n; ++k) g[r * n + k] -= f * g[col * n + k];
      rhs[r] -= f * rhs[col];
    }
  }
  for (int64_t r = n - 1; r >= 0; --r) {
    for (int64_t k = r + 1; k < n; ++k) rhs[r] -= g[r * n + k] * rhs[k];
    rhs[r] /= g[r * n + r];
  }
  return true;
}

// One alternating least-squares update of `target` (mode m of the A x B x C
// tensor) with the other two factor sets fixed.
bool als_update(std::span<const double> x, const std::array<int64_t, 3>& dims, int mode,
                std::array<Factors*, 3> f, int64_t rank) {
  const int o1 = (mode + 1) % 3, o2 = (mode + 2) % 3;
  const Factors& f1 = *f[o1];
  const Factors& f2 = *f[o2];
  std::vector<double> gram(rank * rank);
  for (int64_t i = 0; i < rank; ++i) {
    for (int64_t j = 0; j < rank; ++j) {
      double a = 0.0, b = 0.0;
      for (int64_t k = 0; k < dims[o1]; ++k) a += f1[i][k] * f1[j][k];
      for (int64_t k = 0; k < dims[o2]; ++k) b += f2[i][k] * f2[j][k];
      gram[i * rank + j] = a * b;
    }
  }
  double trace = 0.0;
  for (int64_t i = 0; i < rank; ++i) trace += gram[i * rank + i];
  for (int64_t i = 0; i < rank; ++i) gram[i * rank + i] += 1e-14 * trace / rank;
  const int64_t strides[3] = {dims[1] * dims[2], dims[2], 1};
  Factors& target = *f[mode];
  for (int64_t t = 0; t < dims[mode]; ++t) {
    std::vector<double> rhs(rank, 0.0);
    for (int64_t i = 0; i < dims[o1]; ++i) {
      for (int64_t j = 0; j < dims[o2]; ++j) {
        const double v = x[t * strides[mode] + i * strides[o1] + j * strides[o2]];
        for (int64_t r = 0; r < rank; ++r) rhs[r] += v * f1[r][i] * f2[r][j];
      }
    }
    if (!solve(gram, rhs, rank)) return false;
    for (int64_t r = 0; r < rank; ++r) target[r][t] = rhs[r];
  }
  return true;
}

void normalize_terms(SeparationResult& r) {
  for (int64_t k = 0; k < r.rank; ++k) {
    for (auto* f : {&r.vertical[k], &r.horizontal[k]}) {
      const double p = peak(*f);
      if (p == 0.0) continue;
      for (double& x : *f) x /= p;
      for (double& x : r.channel[k]) x *= p;
    }
  }
}

}  // namespace

std::vector<double> SeparationResult::reconstruct() const {
  const bool three_d = !channel.empty();
  const int64_t c_dim = three_d ? channels : 1;
  std::vector<double> out(rows * cols * c_dim, 0.0);
  for (int64_t k = 0; k < rank; ++k) {
    for (int64_t a = 0; a < rows; ++a) {
      for (int64_t b = 0; b < cols; ++b) {
        const double uv = vertical[k][a] * horizontal[k][b];
        for (int64_t c = 0; c < c_dim; ++c) {
          out[(a * cols + b) * c_dim + c] += three_d ? uv * channel[k][c] : uv;
        }
      }
    }
  }
  return out;
}

SeparationResult separate_filter(std::span<const double> filter, int64_t rows, int64_t cols,
                                 int64_t rank) {
  check_rank(rank, rows, cols);
  const Svd svd = jacobi_svd(filter, rows, cols);
  SeparationResult r;
  r.rows = rows;
  r.cols = cols;
  r.rank = rank;
  r.singular_values = svd.s;
  for (int64_t k = 0; k < rank; ++k) {
    std::vector<double> u(rows), v(cols);
    for (int64_t i = 0; i < rows; ++i) u[i] = svd.u_at(i, k);
    for (int64_t j = 0; j < cols; ++j) v[j] = svd.v_at(j, k) * svd.s[k];
    const double p = peak(u);
    if (p != 0.0) {
      for (double& x : u) x /= p;
      for (double& x : v) x *= p;
    }
    r.vertical.push_back(std::move(u));
    r.horizontal.push_back(std::move(v));
  }
  fill_errors(r, filter);
  return r;
}

SeparationResult separate_kernel(std::span<const double> kernel, int64_t rows, int64_t cols,
                                 int64_t channels, int64_t rank) {
  check_rank(rank, rows, cols);
  if (channels < 1 || static_cast<int64_t>(kernel.size()) != rows * cols * channels) {
    throw Error(ErrorCode::kInvalidArgument, "kernel size does not match A x B x C");
  }
  // Candidate terms: each channel-unfolding component split at full spatial rank.
  struct Term {
    double weight;
    std::vector<double> u, v, p;
  };
  std::vector<Term> terms;
  const Svd unfold = jacobi_svd(kernel, rows * cols, channels);
  for (int64_t j = 0; j < unfold.rank_capacity(); ++j) {
    if (unfold.s[j] == 0.0 && !terms.empty()) break;
    std::vector<double> spatial(rows * cols), p(channels);
    for (int64_t i = 0; i < rows * cols; ++i) spatial[i] = unfold.u_at(i, j) * unfold.s[j];
    for (int64_t c = 0; c < channels; ++c) p[c] = unfold.v_at(c, j);
    const SeparationResult split = separate_filter(spatial, rows, cols, std::min(rows, cols));
    for (int64_t k = 0; k < split.rank; ++k) {
      terms.push_back({std::abs(unfold.s[j]) * split.singular_values[k], split.vertical[k],
                       split.horizontal[k], p});
    }
  }
  std::stable_sort(terms.begin(), terms.end(),
                   [](const Term& a, const Term& b) { return a.weight > b.weight; });
  SeparationResult best;
  best.rows = rows;
  best.cols = cols;
  best.channels = channels;
  best.rank = rank;
  for (int64_t k = 0; k < rank; ++k) {
    if (k < static_cast<int64_t>(terms.size())) {
      best.vertical.push_back(terms[k].u);
      best.horizontal.push_back(terms[k].v);
      best.channel.push_back(terms[k].p);
    } else {
      best.vertical.emplace_back(rows, 0.0);
      best.horizontal.emplace_back(cols, 0.0);
      best.channel.emplace_back(channels, 0.0);
    }
  }
  fill_errors(best, kernel);

  double norm = 0.0;
  for (double x : kernel) norm += x * x;
  norm = std::sqrt(norm);
  SeparationResult cur = best;
  const std::array<int64_t, 3> dims = {rows, cols, channels};
  for (int iter = 0; iter < 500 && best.frobenius_error > 1e-13 * norm; ++iter) {
    const double before = cur.frobenius_error;
    bool ok = true;
    for (int mode = 0; mode < 3 && ok; ++mode) {
      ok = als_update(kernel, dims, mode, {&cur.vertical, &cur.horizontal, &cur.channel}, rank);
    }
    if (!ok) break;
    fill_errors(cur, kernel);
    if (cur.frobenius_error < best.frobenius_error) best = cur;
    if (before - cur.frobenius_error <= 1e-12 * norm) break;
  }
  normalize_terms(best);
  fill_errors(best, kernel);
  return best;
}

SeparateConvResult separate_conv2d(const Graph& graph, NodeId conv_id,
                                   const SeparateOptions& options) {
  Graph g = validated(graph);
  const Node* found = g.find_node(conv_id);
  if (!found || found->op != OpKind::kConv2D) {
    throw Error(ErrorCode::kInvalidArgument, "node " + std::to_string(conv_id) +
                                                 " is not a Conv2D");
  }
  const Node conv = *found;
  const GraphIndex index(g);
  if (conv.preserved() || index.has_control_edges(conv.id, g)) {
    throw Error(ErrorCode::kInvalidArgument, "conv node " + std::to_string(conv.id) +
                                                 " is preserved or has control edges");
  }
  const TensorSpec wspec = *g.find_tensor(conv.inputs[1]);
  if (!is_constant(g, conv.inputs[1]) || !is_float(wspec.dtype)) {
    throw Error(ErrorCode::kInvalidArgument, "conv node " + std::to_string(conv.id) +
                                                 " has no float constant filter");
  }
  const std::vector<double> w = *constant_real_values(g, conv.inputs[1]);
  const int64_t a_dim = wspec.shape[0], b_dim = wspec.shape[1], c_dim = wspec.shape[2],
                o_dim = wspec.shape[3];
  const int64_t n = options.rank;
  check_rank(n, a_dim, b_dim);

  double peak_w = 0.0;
  for (double x : w) peak_w = std::max(peak_w, std::abs(x));
  std::vector<SeparationResult> parts;
  double max_err = 0.0;
  for (int64_t o = 0; o < o_dim; ++o) {
    std::vector<double> k(a_dim * b_dim * c_dim);
    for (size_t i = 0; i < k.size(); ++i) k[i] = w[i * o_dim + o];
    parts.push_back(separate_kernel(k, a_dim, b_dim, c_dim, n));
    max_err = std::max(max_err, parts.back().max_abs_error);
  }
  if (max_err > options.tolerance * peak_w) {
    std::ostringstream msg;
    msg << "conv node " << conv.id << ": rank-" << n << " filter error " << max_err
        << " exceeds " << options.tolerance << " * max|w| = " << options.tolerance * peak_w;
    throw Error(ErrorCode::kRankTooLow, msg.str());
  }

  PassReport report;
  report.name = "ops-sep";
  record_before(report, graph);
  std::vector<int64_t> strides = conv.attr_ints("strides");
  if (strides.size() != 2) strides = {1, 1};
  const std::string padding = conv.attr_str("padding", "VALID");
  std::vector<TensorId> branches;
  for (int64_t r = 0; r < n; ++r) {
    std::vector<double> mix(c_dim * o_dim), vert(a_dim * o_dim), horiz(b_dim * o_dim);
    for (int64_t o = 0; o < o_dim; ++o) {
      for (int64_t c = 0; c < c_dim; ++c) mix[c * o_dim + o] = parts[o].channel[r][c];
      for (int64_t a = 0; a < a_dim; ++a) vert[a * o_dim + o] = parts[o].vertical[r][a];
      for (int64_t b = 0; b < b_dim; ++b) horiz[b * o_dim + o] = parts[o].horizontal[r][b];
    }
    const TensorId pw = emit1(g, OpKind::kConv2D,
                              {conv.inputs[0], add_constant(g, {1, 1, c_dim, o_dim}, wspec.dtype, mix)},
                              {{"strides", std::vector<int64_t>{1, 1}},
                               {"padding", std::string("VALID")}});
    const TensorId dv = emit1(g, OpKind::kDepthwiseConv2D,
                              {pw, add_constant(g, {a_dim, 1, o_dim, 1}, wspec.dtype, vert)},
                              {{"strides", std::vector<int64_t>{strides[0], 1}},
                               {"padding", padding}});
    branches.push_back(emit1(g, OpKind::kDepthwiseConv2D,
                             {dv, add_constant(g, {1, b_dim, o_dim, 1}, wspec.dtype, horiz)},
                             {{"strides", std::vector<int64_t>{1, strides[1]}},
                              {"padding", padding}}));
  }
  TensorId y = branches.size() == 1 ? branches[0] : emit1(g, OpKind::kAddN, branches);
  if (conv.inputs.size() > 2) y = emit1(g, OpKind::kBiasAdd, {y, conv.inputs[2]});
  replace_uses(g, conv.outputs[0], y);
  remove_node(g, conv.id);
  g = validated(garbage_collect(g));

  const Savings s = estimate_savings(c_dim, a_dim, b_dim, n);
  std::ostringstream note;
  note << "conv node " << conv.id << ": " << s.before << " -> " << s.after
       << " multiplications per output element, max filter error " << max_err;
  report.notes.push_back(note.str());
  record_after(report, g);
  return {std::move(g), std::move(report)};
}

SeparateConvResult separate_convolutions(const Graph& graph, const SeparateOptions& options) {
  SeparateConvResult result;
  result.graph = validated(graph);
  result.report.name = "ops-sep";
  record_before(result.report, result.graph);
  for (NodeId id : topo_sort(result.graph)) {
    const Node& n = *result.graph.find_node(id);
    if (n.op != OpKind::kConv2D) continue;
    const Shape& w = result.graph.find_tensor(n.inputs[1])->shape;
    const std::string tag = "conv node " + std::to_string(id) + ": ";
    if (options.rank > std::min(w[0], w[1])) {
      result.report.notes.push_back(tag + "kernel smaller than the requested rank, kept");
      continue;
    }
    const Savings s = estimate_savings(w[2], w[0], w[1], options.rank);
    if (s.after >= s.before) {
      result.report.notes.push_back(tag + "separation would not lower multiplications, kept");
      continue;
    }
    try {
      SeparateConvResult step = separate_conv2d(result.graph, id, options);
      result.graph = std::move(step.graph);
      for (std::string& note : step.report.notes) result.report.notes.push_back(std::move(note));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kRankTooLow && e.code() != ErrorCode::kInvalidArgument) throw;
      result.report.notes.push_back(tag + e.what());
    }
  }
  record_after(result.report, result.graph);
  return result;
}

Savings estimate_savings(int64_t channels, int64_t rows, int64_t cols, int64_t rank) {
  if (channels < 1 || rows < 1 || cols < 1 || rank < 1) {
    throw Error(ErrorCode::kInvalidArgument, "savings estimate needs C, A, B, n >= 1");
  }
  Savings s;
  s.before = channels * rows * cols;
  s.after = rank * (channels + rows + cols);
  s.ratio = static_cast<double>(s.before) / static_cast<double>(s.after);
  return s;
}

}  // namespace noptc
