/*
 * Copyright 2026 The attnpred Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <algorithm>

#include "attnpred/simd/kernels.hpp"

namespace attnpred::simd::scalar {

template <typename Real>
void conv3x3_accumulate(const Real* in_padded, int height, int width, int cin, int cout,
                        const Real* weights, Real* out) {
  const int pw = width + 2;
  for (int h = 0; h < height; ++h) {
    for (int w = 0; w < width; ++w) {
      Real* o = out + (static_cast<std::size_t>(h) * width + w) * cout;
      for (int k = 0; k < 9; ++k) {
        const Real* ip = in_padded + (static_cast<std::size_t>(h + k / 3) * pw + (w + k % 3)) * cin;
        const Real* wk = weights + static_cast<std::size_t>(k) * cin * cout;
        for (int c = 0; c < cin; ++c) {
          const Real x = ip[c];
          const Real* wc = wk + static_cast<std::size_t>(c) * cout;
          for (int j = 0; j < cout; ++j) o[j] += x * wc[j];
        }
      }
    }
  }
}

template <typename Real>
void conv3x3_weight_grad(const Real* in_padded, const Real* grad_out, int height, int width,
                         int cin, int cout, Real* grad_weights) {
  const int pw = width + 2;
  for (int h = 0; h < height; ++h) {
    for (int w = 0; w < width; ++w) {
      const Real* g = grad_out + (static_cast<std::size_t>(h) * width + w) * cout;
      for (int k = 0; k < 9; ++k) {
        const Real* ip = in_padded + (static_cast<std::size_t>(h + k / 3) * pw + (w + k % 3)) * cin;
        Real* gk = grad_weights + static_cast<std::size_t>(k) * cin * cout;
        for (int c = 0; c < cin; ++c) {
          const Real x = ip[c];
          Real* gc = gk + static_cast<std::size_t>(c) * cout;
          for (int j = 0; j < cout; ++j) gc[j] += x * g[j];
        }
      }
    }
  }
}

template <typename Real>
void block_max(const Real* row, std::size_t n, std::size_t block, Real* out) {
  const std::size_t blocks = (n + block - 1) / block;
  for (std::size_t i = 0; i < blocks; ++i) {
    const std::size_t begin = i * block;
    const std::size_t end = std::min(n, begin + block);
    Real m = row[begin];
    for (std::size_t j = begin + 1; j < end; ++j) m = std::max(m, row[j]);
    if (end - begin < block) m = std::max(m, Real(0));
    out[i] = m;
  }
}

template <typename Real>
Real dot(const Real* x, const Real* y, std::size_t n) {
  Real s = 0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

template <typename Real>
void axpy(Real alpha, const Real* x, Real* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

#define ATTNPRED_INSTANTIATE(Real)                                                            \
  template void conv3x3_accumulate<Real>(const Real*, int, int, int, int, const Real*, Real*); \
  template void conv3x3_weight_grad<Real>(const Real*, const Real*, int, int, int, int, Real*); \
  template void block_max<Real>(const Real*, std::size_t, std::size_t, Real*);                 \
  template Real dot<Real>(const Real*, const Real*, std::size_t);                              \
  template void axpy<Real>(Real, const Real*, Real*, std::size_t);

ATTNPRED_INSTANTIATE(float)
ATTNPRED_INSTANTIATE(double)

#undef ATTNPRED_INSTANTIATE

}  // namespace attnpred::simd::scalar
