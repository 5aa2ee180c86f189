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

#ifndef NOPTC_SVD_H_
#define NOPTC_SVD_H_

#include <cstdint>
#include <span>
#include <vector>

namespace noptc {

// Thin SVD m = U diag(s) V^T of a row-major rows x cols matrix. With
// k = min(rows, cols): u is rows x k, v is cols x k (both row-major, columns
// orthonormal) and s is descending.
struct Svd {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<double> u;
  std::vector<double> s;
  std::vector<double> v;

  int64_t rank_capacity() const { return static_cast<int64_t>(s.size()); }
  double u_at(int64_t i, int64_t j) const { return u[i * rank_capacity() + j]; }
  double v_at(int64_t i, int64_t j) const { return v[i * rank_capacity() + j]; }
};

inline constexpr int kJacobiSweepLimit = 100;
inline constexpr double kJacobiTolerance = 1e-12;

// One-sided Jacobi iteration; intended for the small matrices found in
// convolution filters. Throws ConvergenceFailure past the sweep limit and
// InvalidArgument for empty or mismatched input.
Svd jacobi_svd(std::span<const double> m, int64_t rows, int64_t cols,
               int sweep_limit = kJacobiSweepLimit);

}  // namespace noptc

#endif  // NOPTC_SVD_H_
