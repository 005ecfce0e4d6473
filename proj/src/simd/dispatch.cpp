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

#include <atomic>
#include <cstdlib>
#include <string>

#include "attnpred/error.hpp"
#include "attnpred/simd/kernels.hpp"

namespace attnpred::simd {

namespace {

template <typename Real>
constexpr KernelTable<Real> kScalarTable{
    Isa::scalar,
    &scalar::conv3x3_accumulate<Real>,
    &scalar::conv3x3_weight_grad<Real>,
    &scalar::block_max<Real>,
    &scalar::dot<Real>,
    &scalar::axpy<Real>,
};

#ifdef ATTNPRED_HAVE_AVX2_KERNELS
constexpr KernelTable<float> kAvx2Float{
    Isa::avx2,     &avx2::conv3x3_accumulate, &avx2::conv3x3_weight_grad,
    &avx2::block_max, &avx2::dot,             &avx2::axpy,
};
#endif

Isa detect() {
  if (const char* env = std::getenv("ATTNPRED_SIMD")) {
    const std::string v(env);
    if (v == "scalar") return Isa::scalar;
    if (v == "avx2" && isa_supported(Isa::avx2)) return Isa::avx2;
  }
  return isa_supported(Isa::avx2) ? Isa::avx2 : Isa::scalar;
}

std::atomic<int>& active_slot() {
  static std::atomic<int> slot{static_cast<int>(detect())};
  return slot;
}

}  // namespace

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(ATTNPRED_HAVE_AVX2_KERNELS) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

std::string_view isa_name(Isa isa) {
  return isa == Isa::avx2 ? "avx2" : "scalar";
}

Isa active_isa() { return static_cast<Isa>(active_slot().load(std::memory_order_relaxed)); }

void force_isa(Isa isa) {
  if (!isa_supported(isa)) throw UnsupportedError(std::string(isa_name(isa)) + " not supported here");
  active_slot().store(static_cast<int>(isa), std::memory_order_relaxed);
}

template <>
const KernelTable<float>& kernels(Isa isa) {
  if (!isa_supported(isa)) throw UnsupportedError(std::string(isa_name(isa)) + " not supported here");
#ifdef ATTNPRED_HAVE_AVX2_KERNELS
  if (isa == Isa::avx2) return kAvx2Float;
#endif
  return kScalarTable<float>;
}

// No vector double path: the double instantiation only serves gradient checks.
template <>
const KernelTable<double>& kernels(Isa isa) {
  if (!isa_supported(isa)) throw UnsupportedError(std::string(isa_name(isa)) + " not supported here");
  return kScalarTable<double>;
}

template <>
const KernelTable<float>& kernels() {
  return kernels<float>(active_isa());
}

template <>
const KernelTable<double>& kernels() {
  return kScalarTable<double>;
}

}  // namespace attnpred::simd
