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

#pragma once

// Data-parallel inner loops used by compression and the predictor CNN.
//
// Every kernel has a portable scalar reference. Vector variants are compiled
// separately and chosen once at startup from CPUID; ATTNPRED_SIMD=scalar|avx2
// overrides the choice. Vector variants must agree with the reference (exactly
// for block_max, to rounding for the FMA paths).
//
// Conv layout is channel-last: a padded input is (height+2) x (width+2) x cin,
// weights are [3*3][cin][cout], outputs height x width x cout.

#include <cstddef>
#include <string_view>

namespace attnpred::simd {

enum class Isa { scalar, avx2 };

template <typename Real>
struct KernelTable {
  Isa isa;
  /// out[h][w][:] += sum_{k,c} in[h+kh][w+kw][c] * weights[k][c][:]
  void (*conv3x3_accumulate)(const Real* in_padded, int height, int width, int cin, int cout,
                             const Real* weights, Real* out);
  /// grad_weights[k][c][:] += sum_{h,w} in[h+kh][w+kw][c] * grad_out[h][w][:]
  void (*conv3x3_weight_grad)(const Real* in_padded, const Real* grad_out, int height, int width,
                              int cin, int cout, Real* grad_weights);
  /// out[i] = max of block i; a short final block is zero-padded.
  void (*block_max)(const Real* row, std::size_t n, std::size_t block, Real* out);
  Real (*dot)(const Real* x, const Real* y, std::size_t n);
  /// y += alpha * x
  void (*axpy)(Real alpha, const Real* x, Real* y, std::size_t n);
};

bool isa_supported(Isa isa);
std::string_view isa_name(Isa isa);

/// ISA used by kernels<Real>(); fixed after first use unless forced.
Isa active_isa();
/// Test hook. Throws UnsupportedError when the CPU lacks the ISA.
void force_isa(Isa isa);

template <typename Real>
const KernelTable<Real>& kernels();

/// A specific variant, for equivalence tests. Throws UnsupportedError if the
/// CPU or the build lacks it.
template <typename Real>
const KernelTable<Real>& kernels(Isa isa);

// Reference implementations, always available.
namespace scalar {
template <typename Real>
void conv3x3_accumulate(const Real* in_padded, int height, int width, int cin, int cout,
                        const Real* weights, Real* out);
template <typename Real>
void conv3x3_weight_grad(const Real* in_padded, const Real* grad_out, int height, int width,
                         int cin, int cout, Real* grad_weights);
template <typename Real>
void block_max(const Real* row, std::size_t n, std::size_t block, Real* out);
template <typename Real>
Real dot(const Real* x, const Real* y, std::size_t n);
template <typename Real>
void axpy(Real alpha, const Real* x, Real* y, std::size_t n);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define ATTNPRED_HAVE_AVX2_KERNELS 1
namespace avx2 {
void conv3x3_accumulate(const float* in_padded, int height, int width, int cin, int cout,
                        const float* weights, float* out);
void conv3x3_weight_grad(const float* in_padded, const float* grad_out, int height, int width,
                         int cin, int cout, float* grad_weights);
void block_max(const float* row, std::size_t n, std::size_t block, float* out);
float dot(const float* x, const float* y, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
}  // namespace avx2
#endif

}  // namespace attnpred::simd
