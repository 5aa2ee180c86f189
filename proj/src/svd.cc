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

#include "noptc/svd.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "noptc/status.h"

namespace noptc {
namespace {

// Column-major working storage for the tall case (rows >= cols).
struct Columns {
  int64_t rows;
  std::vector<std::vector<double>> col;
};

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void rotate(std::vector<double>& p, std::vector<double>& q, double c, double s) {
  for (size_t i = 0; i < p.size(); ++i) {
    const double a = p[i], b = q[i];
    p[i] = c * a - s * b;
    q[i] = s * a + c * b;
  }
}

// Fills zero columns of `basis` (length-n vectors) so the set is orthonormal.
void complete_basis(std::vector<std::vector<double>>& basis, const std::vector<bool>& filled,
                    int64_t n) {
  int64_t next_axis = 0;
  for (size_t j = 0; j < basis.size(); ++j) {
    if (filled[j]) continue;
    for (; next_axis < n; ++next_axis) {
      std::vector<double> e(n, 0.0);
      e[next_axis] = 1.0;
      for (size_t k = 0; k < basis.size(); ++k) {
        if (k == j || (!filled[k] && k > j)) continue;
        const double d = dot(e, basis[k]);
        for (int64_t i = 0; i < n; ++i) e[i] -= d * basis[k][i];
      }
      const double norm = std::sqrt(dot(e, e));
      if (norm > 1e-6) {
        for (double& x : e) x /= norm;
        basis[j] = std::move(e);
        ++next_axis;
        break;
      }
    }
  }
}

Svd tall_svd(std::span<const double> m, int64_t rows, int64_t cols, int sweep_limit) {
  std::vector<std::vector<double>> a(cols, std::vector<double>(rows));
  std::vector<std::vector<double>> v(cols, std::vector<double>(cols, 0.0));
  for (int64_t j = 0; j < cols; ++j) {
    v[j][j] = 1.0;
    for (int64_t i = 0; i < rows; ++i) a[j][i] = m[i * cols + j];
  }
  double total = 0.0;
  for (const auto& c : a) total += dot(c, c);
  // Columns this small are roundoff; rotating them never settles.
  const double negligible = total * 1e-30;
  bool converged = false;
  for (int sweep = 0; sweep < sweep_limit && !converged; ++sweep) {
    converged = true;
    for (int64_t p = 0; p + 1 < cols; ++p) {
      for (int64_t q = p + 1; q < cols; ++q) {
        const double alpha = dot(a[p], a[p]);
        const double beta = dot(a[q], a[q]);
        const double gamma = dot(a[p], a[q]);
        if (gamma == 0.0 || alpha <= negligible || beta <= negligible || std::abs(gamma) <= kJacobiTolerance * std::sqrt(alpha * beta)) {
          continue;
        }
        converged = false;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t =
            std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        rotate(a[p], a[q], c, s);
        rotate(v[p], v[q], c, s);
      }
    }
  }
  if (!converged) {
    throw Error(ErrorCode::kConvergenceFailure,
                "Jacobi SVD did not converge within " + std::to_string(sweep_limit) + " sweeps");
  }
  std::vector<double> sigma(cols);
  for (int64_t j = 0; j < cols; ++j) sigma[j] = std::sqrt(dot(a[j], a[j]));
  std::vector<int64_t> order(cols);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int64_t x, int64_t y) { return sigma[x] > sigma[y]; });
  const double largest = sigma.empty() ? 0.0 : sigma[order[0]];
  std::vector<std::vector<double>> u_cols(cols);
  std::vector<bool> filled(cols, false);
  Svd out;
  out.rows = rows;
  out.cols = cols;
  out.s.resize(cols);
  for (int64_t k = 0; k < cols; ++k) {
    const int64_t j = order[k];
    out.s[k] = sigma[j];
    u_cols[k].assign(rows, 0.0);
    if (sigma[j] > 1e-14 * std::max(largest, 1e-300) && sigma[j] > 0.0) {
      for (int64_t i = 0; i < rows; ++i) u_cols[k][i] = a[j][i] / sigma[j];
      filled[k] = true;
    }
  }
  complete_basis(u_cols, filled, rows);
  out.u.resize(rows * cols);
  out.v.resize(cols * cols);
  for (int64_t k = 0; k < cols; ++k) {
    for (int64_t i = 0; i < rows; ++i) out.u[i * cols + k] = u_cols[k][i];
    // v[j] holds row j of V^T accumulated as columns: V(:, j) = v[j].
    for (int64_t i = 0; i < cols; ++i) out.v[i * cols + k] = v[order[k]][i];
  }
  return out;
}

}  // namespace

Svd jacobi_svd(std::span<const double> m, int64_t rows, int64_t cols, int sweep_limit) {
  if (rows <= 0 || cols <= 0 || static_cast<int64_t>(m.size()) != rows * cols) {
    throw Error(ErrorCode::kInvalidArgument, "SVD needs a non-empty rows x cols matrix");
  }
  if (rows >= cols) return tall_svd(m, rows, cols, sweep_limit);
  std::vector<double> t(m.size());
  for (int64_t i = 0; i < rows; ++i) {
    for (int64_t j = 0; j < cols; ++j) t[j * rows + i] = m[i * cols + j];
  }
  Svd s = tall_svd(t, cols, rows, sweep_limit);
  std::swap(s.u, s.v);
  std::swap(s.rows, s.cols);
  return s;
}

}  // namespace noptc
