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

// Built with -mavx2 -mfma; only reached after a runtime CPU check.

#include <immintrin.h>

#include <algorithm>

#include "attnpred/simd/kernels.hpp"

namespace attnpred::simd::avx2 {

namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
  lo = _mm_add_ss(lo, _mm_shuffle_ps(lo, lo, 0x1));
  return _mm_cvtss_f32(lo);
}

inline float hmax(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_max_ps(lo, hi);
  lo = _mm_max_ps(lo, _mm_movehl_ps(lo, lo));
  lo = _mm_max_ss(lo, _mm_shuffle_ps(lo, lo, 0x1));
  return _mm_cvtss_f32(lo);
}

// NV vectors of output channels, P adjacent output pixels per pass.
template <int NV, int P>
inline void conv_pixels(const float* in_padded, int pw, int cin, const float* weights, int h,
                        int w, int width, float* out) {
  constexpr int cout = NV * 8;
  __m256 acc[P][NV];
  for (int p = 0; p < P; ++p) {
    float* o = out + (static_cast<std::size_t>(h) * width + w + p) * cout;
    for (int v = 0; v < NV; ++v) acc[p][v] = _mm256_loadu_ps(o + v * 8);
  }
  for (int k = 0; k < 9; ++k) {
    const float* ip = in_padded + (static_cast<std::size_t>(h + k / 3) * pw + (w + k % 3)) * cin;
    const float* wk = weights + static_cast<std::size_t>(k) * cin * cout;
    for (int c = 0; c < cin; ++c) {
      __m256 wv[NV];
      for (int v = 0; v < NV; ++v) wv[v] = _mm256_loadu_ps(wk + c * cout + v * 8);
      for (int p = 0; p < P; ++p) {
        const __m256 x = _mm256_broadcast_ss(ip + p * cin + c);
        for (int v = 0; v < NV; ++v) acc[p][v] = _mm256_fmadd_ps(x, wv[v], acc[p][v]);
      }
    }
  }
  for (int p = 0; p < P; ++p) {
    float* o = out + (static_cast<std::size_t>(h) * width + w + p) * cout;
    for (int v = 0; v < NV; ++v) _mm256_storeu_ps(o + v * 8, acc[p][v]);
  }
}

template <int NV>
void conv_impl(const float* in_padded, int height, int width, int cin, const float* weights,
               float* out) {
  constexpr int P = NV >= 4 ? 2 : 4;
  const int pw = width + 2;
  for (int h = 0; h < height; ++h) {
    int w = 0;
    for (; w + P <= width; w += P) conv_pixels<NV, P>(in_padded, pw, cin, weights, h, w, width, out);
    for (; w < width; ++w) conv_pixels<NV, 1>(in_padded, pw, cin, weights, h, w, width, out);
  }
}

template <int NV>
void weight_grad_impl(const float* in_padded, const float* grad_out, int height, int width,
                      int cin, float* grad_weights) {
  constexpr int cout = NV * 8;
  const int pw = width + 2;
  for (int k = 0; k < 9; ++k) {
    const int kh = k / 3;
    const int kw = k % 3;
    for (int c = 0; c < cin; ++c) {
      __m256 acc0[NV];
      __m256 acc1[NV];
      for (int v = 0; v < NV; ++v) acc0[v] = acc1[v] = _mm256_setzero_ps();
      for (int h = 0; h < height; ++h) {
        const float* ip = in_padded + (static_cast<std::size_t>(h + kh) * pw + kw) * cin + c;
        const float* g = grad_out + static_cast<std::size_t>(h) * width * cout;
        int w = 0;
        for (; w + 2 <= width; w += 2) {
          const __m256 x0 = _mm256_broadcast_ss(ip + w * cin);
          const __m256 x1 = _mm256_broadcast_ss(ip + (w + 1) * cin);
          for (int v = 0; v < NV; ++v) {
            acc0[v] = _mm256_fmadd_ps(x0, _mm256_loadu_ps(g + w * cout + v * 8), acc0[v]);
            acc1[v] = _mm256_fmadd_ps(x1, _mm256_loadu_ps(g + (w + 1) * cout + v * 8), acc1[v]);
          }
        }
        for (; w < width; ++w) {
          const __m256 x0 = _mm256_broadcast_ss(ip + w * cin);
          for (int v = 0; v < NV; ++v) {
            acc0[v] = _mm256_fmadd_ps(x0, _mm256_loadu_ps(g + w * cout + v * 8), acc0[v]);
          }
        }
      }
      float* gw = grad_weights + (static_cast<std::size_t>(k) * cin + c) * cout;
      for (int v = 0; v < NV; ++v) {
        const __m256 sum = _mm256_add_ps(_mm256_add_ps(acc0[v], acc1[v]), _mm256_loadu_ps(gw + v * 8));
        _mm256_storeu_ps(gw + v * 8, sum);
      }
    }
  }
}

}  // namespace

void conv3x3_accumulate(const float* in_padded, int height, int width, int cin, int cout,
                        const float* weights, float* out) {
  switch (cout) {
    case 8: return conv_impl<1>(in_padded, height, width, cin, weights, out);
    case 16: return conv_impl<2>(in_padded, height, width, cin, weights, out);
    case 24: return conv_impl<3>(in_padded, height, width, cin, weights, out);
    case 32: return conv_impl<4>(in_padded, height, width, cin, weights, out);
    default:
      return scalar::conv3x3_accumulate<float>(in_padded, height, width, cin, cout, weights, out);
  }
}

void conv3x3_weight_grad(const float* in_padded, const float* grad_out, int height, int width,
                         int cin, int cout, float* grad_weights) {
  switch (cout) {
    case 8: return weight_grad_impl<1>(in_padded, grad_out, height, width, cin, grad_weights);
    case 16: return weight_grad_impl<2>(in_padded, grad_out, height, width, cin, grad_weights);
    case 24: return weight_grad_impl<3>(in_padded, grad_out, height, width, cin, grad_weights);
    case 32: return weight_grad_impl<4>(in_padded, grad_out, height, width, cin, grad_weights);
    default:
      return scalar::conv3x3_weight_grad<float>(in_padded, grad_out, height, width, cin, cout,
                                                grad_weights);
  }
}

void block_max(const float* row, std::size_t n, std::size_t block, float* out) {
  if (block < 8) return scalar::block_max<float>(row, n, block, out);
  const std::size_t blocks = (n + block - 1) / block;
  for (std::size_t i = 0; i < blocks; ++i) {
    const std::size_t begin = i * block;
    const std::size_t end = std::min(n, begin + block);
    std::size_t j = begin;
    float m = row[begin];
    if (end - begin >= 8) {
      __m256 vm = _mm256_loadu_ps(row + j);
      for (j += 8; j + 8 <= end; j += 8) vm = _mm256_max_ps(vm, _mm256_loadu_ps(row + j));
      m = hmax(vm);
    }
    for (; j < end; ++j) m = std::max(m, row[j]);
    if (end - begin < block) m = std::max(m, 0.0f);
    out[i] = m;
  }
}

float dot(const float* x, const float* y, std::size_t n) {
  __m256 a0 = _mm256_setzero_ps();
  __m256 a1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    a0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), a0);
    a1 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i + 8), _mm256_loadu_ps(y + i + 8), a1);
  }
  for (; i + 8 <= n; i += 8) a0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), a0);
  float s = hsum(_mm256_add_ps(a0, a1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 a = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(a, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace attnpred::simd::avx2
