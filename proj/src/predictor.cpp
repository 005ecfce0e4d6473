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

#include "attnpred/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "attnpred/error.hpp"
#include "attnpred/simd/kernels.hpp"

namespace attnpred {

using namespace cnn;

template <typename Real>
BasicWeights<Real> BasicWeights<Real>::random_init(std::uint64_t seed) {
  BasicWeights w;
  std::mt19937_64 rng(seed);
  auto fill = [&rng](std::span<Real> dst, double fan_in) {
    const double bound = 1.0 / std::sqrt(fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Real& x : dst) x = static_cast<Real>(dist(rng));
  };
  fill(w.conv_a_weight(), 9.0);
  fill(w.conv_a_bias(), 9.0);
  fill(w.conv_b_weight(), 9.0 * kConvAOut);
  fill(w.conv_b_bias(), 9.0 * kConvAOut);
  fill(w.conv_1d_weight(), kConvBOut);
  fill({&w.conv_1d_bias(), 1}, kConvBOut);
  return w;
}

template <typename Real>
void PredictorNet<Real>::set_weights(const BasicWeights<Real>& weights) {
  if (weights.params.size() != kParamCount) throw NumericError("weight vector has the wrong size");
  for (Real p : weights.params) {
    if (!std::isfinite(p)) throw NumericError("non-finite predictor weight");
  }
  params_ = weights.params;
  const Real* wa = params_.data() + kOffConvAW;
  const Real* wb = params_.data() + kOffConvBW;
  wa_.assign(9 * kConvAOut, 0);
  wb_.assign(9 * kConvAOut * kConvBOut, 0);
  wflip_.assign(9 * kConvBOut * kConvAOut, 0);
  for (int o = 0; o < kConvAOut; ++o) {
    for (int k = 0; k < 9; ++k) wa_[k * kConvAOut + o] = wa[o * 9 + k];
  }
  for (int o = 0; o < kConvBOut; ++o) {
    for (int c = 0; c < kConvAOut; ++c) {
      for (int k = 0; k < 9; ++k) {
        const Real v = wb[(o * kConvAOut + c) * 9 + k];
        wb_[(k * kConvAOut + c) * kConvBOut + o] = v;
        wflip_[((8 - k) * kConvBOut + o) * kConvAOut + c] = v;
      }
    }
  }
  ba_.assign(params_.begin() + kOffConvAB, params_.begin() + kOffConvAB + kConvAOut);
  bb_.assign(params_.begin() + kOffConvBB, params_.begin() + kOffConvBB + kConvBOut);
  v_.assign(params_.begin() + kOffConv1dW, params_.begin() + kOffConv1dW + kConvBOut);
  b1d_ = params_[kOffConv1dB];
}

template <typename Real>
std::span<const Real> PredictorNet<Real>::forward(const BasicHistory<Real>& history) {
  if (params_.empty()) throw StateError("predictor weights not set");
  if (history.steps < 1 || history.width < 1) throw ParameterError("history must be at least 1 x 1");
  if (history.grid.size() != history.steps * history.width) {
    throw ParameterError("history grid size does not match its shape");
  }
  const auto& k = simd::kernels<Real>();
  const int H = static_cast<int>(history.steps);
  const int W = static_cast<int>(history.width);
  const std::size_t pw = static_cast<std::size_t>(W) + 2;
  const std::size_t pixels = static_cast<std::size_t>(H) * W;
  h_ = H;
  w_ = W;

  xpad_.assign((H + 2) * pw, 0);
  for (int h = 0; h < H; ++h) {
    for (int w = 0; w < W; ++w) {
      const Real x = history.grid[static_cast<std::size_t>(h) * W + w];
      if (!std::isfinite(x)) throw NumericError("non-finite value in attention history");
      xpad_[(h + 1) * pw + w + 1] = x;
    }
  }

  // conv_a + ReLU, written straight into the padded buffer conv_b reads.
  std::vector<Real>& a1 = da1_;  // scratch, reused by backward
  a1.resize(pixels * kConvAOut);
  for (std::size_t p = 0; p < pixels; ++p) std::copy(ba_.begin(), ba_.end(), a1.begin() + p * kConvAOut);
  k.conv3x3_accumulate(xpad_.data(), H, W, 1, kConvAOut, wa_.data(), a1.data());
  a1pad_.assign((H + 2) * pw * kConvAOut, 0);
  for (int h = 0; h < H; ++h) {
    for (int w = 0; w < W; ++w) {
      const Real* src = a1.data() + (static_cast<std::size_t>(h) * W + w) * kConvAOut;
      Real* dst = a1pad_.data() + ((h + 1) * pw + w + 1) * kConvAOut;
      for (int c = 0; c < kConvAOut; ++c) dst[c] = src[c] > 0 ? src[c] : Real(0);
    }
  }

  z2_.resize(pixels * kConvBOut);
  for (std::size_t p = 0; p < pixels; ++p) std::copy(bb_.begin(), bb_.end(), z2_.begin() + p * kConvBOut);
  k.conv3x3_accumulate(a1pad_.data(), H, W, kConvAOut, kConvBOut, wb_.data(), z2_.data());
  for (Real& z : z2_) z = z > 0 ? z : Real(0);

  pooled_.assign(static_cast<std::size_t>(W) * kConvBOut, 0);
  for (int h = 0; h < H; ++h) {
    const Real* zr = z2_.data() + static_cast<std::size_t>(h) * W * kConvBOut;
    for (std::size_t i = 0; i < static_cast<std::size_t>(W) * kConvBOut; ++i) pooled_[i] += zr[i];
  }
  const Real inv_h = Real(1) / static_cast<Real>(H);
  for (Real& p : pooled_) p *= inv_h;

  out_.resize(W);
  for (int w = 0; w < W; ++w) {
    out_[w] = k.dot(pooled_.data() + static_cast<std::size_t>(w) * kConvBOut, v_.data(), kConvBOut) + b1d_;
  }
  return out_;
}

template <typename Real>
Real PredictorNet<Real>::backward(std::span<const Real> target, std::span<Real> grad) {
  if (out_.empty()) throw StateError("backward called before forward");
  if (target.size() != out_.size()) throw ParameterError("target width does not match the output");
  if (grad.size() != kParamCount) throw ParameterError("gradient buffer has the wrong size");
  const auto& k = simd::kernels<Real>();
  const int H = h_;
  const int W = w_;
  const std::size_t pw = static_cast<std::size_t>(W) + 2;
  const std::size_t pixels = static_cast<std::size_t>(H) * W;

  Real loss = 0;
  std::vector<Real> g_out(W);
  for (int w = 0; w < W; ++w) {
    if (!std::isfinite(target[w])) throw NumericError("non-finite training target");
    const Real r = out_[w] - target[w];
    loss += r * r;
    g_out[w] = Real(2) * r / static_cast<Real>(W);
  }
  loss /= static_cast<Real>(W);

  Real* g_v = grad.data() + kOffConv1dW;
  for (int w = 0; w < W; ++w) {
    grad[kOffConv1dB] += g_out[w];
    k.axpy(g_out[w], pooled_.data() + static_cast<std::size_t>(w) * kConvBOut, g_v, kConvBOut);
  }

  // Through the mean over H and the second ReLU.
  const Real inv_h = Real(1) / static_cast<Real>(H);
  dz2pad_.assign((H + 2) * pw * kConvBOut, 0);
  std::vector<Real> dz2(pixels * kConvBOut);
  Real* g_bb = grad.data() + kOffConvBB;
  for (int h = 0; h < H; ++h) {
    for (int w = 0; w < W; ++w) {
      const std::size_t p = static_cast<std::size_t>(h) * W + w;
      const Real* z = z2_.data() + p * kConvBOut;
      Real* d = dz2.data() + p * kConvBOut;
      Real* dp = dz2pad_.data() + ((h + 1) * pw + w + 1) * kConvBOut;
      const Real gw = g_out[w] * inv_h;
      for (int c = 0; c < kConvBOut; ++c) {
        const Real v = z[c] > 0 ? gw * v_[c] : Real(0);
        d[c] = v;
        dp[c] = v;
        g_bb[c] += v;
      }
    }
  }

  gwb_.assign(9 * kConvAOut * kConvBOut, 0);
  k.conv3x3_weight_grad(a1pad_.data(), dz2.data(), H, W, kConvAOut, kConvBOut, gwb_.data());
  Real* g_wb = grad.data() + kOffConvBW;
  for (int kk = 0; kk < 9; ++kk) {
    for (int c = 0; c < kConvAOut; ++c) {
      for (int o = 0; o < kConvBOut; ++o) {
        g_wb[(o * kConvAOut + c) * 9 + kk] += gwb_[(kk * kConvAOut + c) * kConvBOut + o];
      }
    }
  }

  // Input gradient of conv_b as a conv with the flipped, transposed kernel.
  da1_.assign(pixels * kConvAOut, 0);
  k.conv3x3_accumulate(dz2pad_.data(), H, W, kConvBOut, kConvAOut, wflip_.data(), da1_.data());
  Real* g_ba = grad.data() + kOffConvAB;
  for (int h = 0; h < H; ++h) {
    for (int w = 0; w < W; ++w) {
      const std::size_t p = static_cast<std::size_t>(h) * W + w;
      const Real* a = a1pad_.data() + ((h + 1) * pw + w + 1) * kConvAOut;
      Real* d = da1_.data() + p * kConvAOut;
      for (int c = 0; c < kConvAOut; ++c) {
        if (!(a[c] > 0)) d[c] = 0;
        g_ba[c] += d[c];
      }
    }
  }
  gwa_.assign(9 * kConvAOut, 0);
  k.conv3x3_weight_grad(xpad_.data(), da1_.data(), H, W, 1, kConvAOut, gwa_.data());
  Real* g_wa = grad.data() + kOffConvAW;
  for (int kk = 0; kk < 9; ++kk) {
    for (int o = 0; o < kConvAOut; ++o) g_wa[o * 9 + kk] += gwa_[kk * kConvAOut + o];
  }
  return loss;
}

template <typename Real>
std::vector<Real> forward(const BasicWeights<Real>& weights, const BasicHistory<Real>& history) {
  PredictorNet<Real> net;
  net.set_weights(weights);
  auto out = net.forward(history);
  return {out.begin(), out.end()};
}

template <typename Real>
Gradient<Real> backward(const BasicWeights<Real>& weights, const BasicHistory<Real>& history,
                        std::span<const Real> target) {
  PredictorNet<Real> net;
  net.set_weights(weights);
  net.forward(history);
  Gradient<Real> g;
  g.loss = net.backward(target, g.grad.params);
  return g;
}

template struct BasicWeights<float>;
template struct BasicWeights<double>;
template class PredictorNet<float>;
template class PredictorNet<double>;
template std::vector<float> forward(const BasicWeights<float>&, const BasicHistory<float>&);
template std::vector<double> forward(const BasicWeights<double>&, const BasicHistory<double>&);
template Gradient<float> backward(const BasicWeights<float>&, const BasicHistory<float>&,
                                  std::span<const float>);
template Gradient<double> backward(const BasicWeights<double>&, const BasicHistory<double>&,
                                   std::span<const double>);

}  // namespace attnpred
