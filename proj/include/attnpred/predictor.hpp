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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "attnpred/trace.hpp"

namespace attnpred {

// Attention predictor CNN:
//   conv 3x3 pad 1 (1 -> 16), ReLU, conv 3x3 pad 1 (16 -> 32), ReLU,
//   mean over the history axis, 1x1 conv (32 -> 1).
// Input is an H x W compressed history (oldest row first), output W scores.
// Nothing depends on W, so one weight set serves every context length.
namespace cnn {
inline constexpr int kConvAOut = 16;
inline constexpr int kConvBOut = 32;
inline constexpr std::size_t kConvAWeights = kConvAOut * 1 * 9;
inline constexpr std::size_t kConvBWeights = kConvBOut * kConvAOut * 9;
inline constexpr std::size_t kOffConvAW = 0;
inline constexpr std::size_t kOffConvAB = kOffConvAW + kConvAWeights;
inline constexpr std::size_t kOffConvBW = kOffConvAB + kConvAOut;
inline constexpr std::size_t kOffConvBB = kOffConvBW + kConvBWeights;
inline constexpr std::size_t kOffConv1dW = kOffConvBB + kConvBOut;
inline constexpr std::size_t kOffConv1dB = kOffConv1dW + kConvBOut;
inline constexpr std::size_t kParamCount = kOffConv1dB + 1;
static_assert(kParamCount == 4833);
}  // namespace cnn

/// Parameters in declaration order, each tensor laid out [out][in][kh][kw]:
/// conv_a weight, conv_a bias, conv_b weight, conv_b bias, conv_1d weight,
/// conv_1d bias.
template <typename Real>
struct BasicWeights {
  std::vector<Real> params = std::vector<Real>(cnn::kParamCount, Real(0));

  std::size_t param_count() const { return params.size(); }

  std::span<Real> conv_a_weight() { return {params.data() + cnn::kOffConvAW, cnn::kConvAWeights}; }
  std::span<Real> conv_a_bias() { return {params.data() + cnn::kOffConvAB, cnn::kConvAOut}; }
  std::span<Real> conv_b_weight() { return {params.data() + cnn::kOffConvBW, cnn::kConvBWeights}; }
  std::span<Real> conv_b_bias() { return {params.data() + cnn::kOffConvBB, cnn::kConvBOut}; }
  std::span<Real> conv_1d_weight() { return {params.data() + cnn::kOffConv1dW, cnn::kConvBOut}; }
  Real& conv_1d_bias() { return params[cnn::kOffConv1dB]; }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) per tensor.
  static BasicWeights random_init(std::uint64_t seed);

  bool operator==(const BasicWeights&) const = default;
};

using PredictorWeights = BasicWeights<float>;

/// H x W grid, row-major, oldest step first.
template <typename Real>
struct BasicHistory {
  std::size_t steps = 0;
  std::size_t width = 0;
  std::vector<Real> grid;

  BasicHistory() = default;
  BasicHistory(std::size_t h, std::size_t w) : steps(h), width(w), grid(h * w, Real(0)) {}

  Real& at(std::size_t h, std::size_t w) { return grid[h * width + w]; }
  Real at(std::size_t h, std::size_t w) const { return grid[h * width + w]; }
  std::span<Real> row(std::size_t h) { return {grid.data() + h * width, width}; }
  std::span<const Real> row(std::size_t h) const { return {grid.data() + h * width, width}; }
};

using AttentionHistory = BasicHistory<float>;

/// Reusable forward/backward engine; keeps activations of the last forward.
template <typename Real>
class PredictorNet {
 public:
  /// Repacks the weights into kernel layout. Throws NumericError on non-finite values.
  void set_weights(const BasicWeights<Real>& weights);

  /// Output has history.width entries; valid until the next call.
  std::span<const Real> forward(const BasicHistory<Real>& history);

  /// Adds d mean((out - target)^2) / d params of the last forward to `grad`.
  /// Returns the loss.
  Real backward(std::span<const Real> target, std::span<Real> grad);

 private:
  std::vector<Real> params_;
  std::vector<Real> wa_;     // [9][1][16]
  std::vector<Real> wb_;     // [9][16][32]
  std::vector<Real> wflip_;  // [9][32][16], flipped conv_b for the input gradient
  std::vector<Real> ba_, bb_, v_;
  Real b1d_ = 0;

  int h_ = 0, w_ = 0;
  std::vector<Real> xpad_;    // (H+2)(W+2)
  std::vector<Real> a1pad_;   // (H+2)(W+2)*16, post-ReLU
  std::vector<Real> z2_;      // H*W*32, post-ReLU
  std::vector<Real> pooled_;  // W*32
  std::vector<Real> out_;     // W
  std::vector<Real> dz2pad_, da1_, gwa_, gwb_;
};

/// Single-shot helpers over PredictorNet.
template <typename Real>
std::vector<Real> forward(const BasicWeights<Real>& weights, const BasicHistory<Real>& history);

template <typename Real>
struct Gradient {
  BasicWeights<Real> grad;
  Real loss = 0;
};

template <typename Real>
Gradient<Real> backward(const BasicWeights<Real>& weights, const BasicHistory<Real>& history,
                        std::span<const Real> target);

// ---------------------------------------------------------------------------
// Training data

struct TrainSample {
  AttentionHistory input;
  std::vector<float> target;  // compressed next row, first t tokens only
};

struct DatasetConfig {
  std::size_t history = 64;
  std::size_t block_size = 16;
  double sample_ratio = 1.0;
  std::uint64_t rng_seed = 0;
};

/// Compressed H x W history ending at `step` for one head. Rows before the
/// first stored step are zero; shorter rows are right-padded with zeros.
AttentionHistory history_at(const AttentionTrace& trace, std::uint32_t layer, std::uint32_t head,
                            std::int32_t step, std::size_t history, std::size_t block_size);

/// Number of (layer, head, step) candidates: every decode step with a successor.
std::size_t count_candidates(const AttentionTrace& trace);

/// Packages history -> next-row pairs from the decoding phase and keeps a
/// uniformly drawn sample_ratio fraction (rounded, at least one).
std::vector<TrainSample> build_dataset(const AttentionTrace& trace, const DatasetConfig& config);

struct TrainConfig {
  int epochs = 30;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  double holdout_fraction = 0.1;
  /// Fraction of blocks selected when scoring held-out recovery.
  double holdout_block_ratio = 0.1;
  std::uint64_t rng_seed = 0;
};

struct EpochMetrics {
  int epoch = 0;
  double train_mse = 0.0;
  double holdout_accuracy = 0.0;  // percent
};

struct TrainResult {
  PredictorWeights weights;  // best held-out epoch
  std::vector<EpochMetrics> metrics;
  int best_epoch = 0;
};

/// Adam on minibatches; keeps the epoch with the best held-out recovery
/// accuracy. Throws TrainingError if the loss turns non-finite.
TrainResult train(std::span<const TrainSample> samples, const TrainConfig& config);

/// Block-level recovery of predicted vs. ideal top-k blocks, in percent.
double holdout_accuracy(const PredictorWeights& weights, std::span<const TrainSample> samples,
                        double block_ratio);

// ---------------------------------------------------------------------------
// Files

/// "APW1" then all parameters as little-endian f32.
void save_weights(const PredictorWeights& weights, const std::filesystem::path& path);
PredictorWeights load_weights(const std::filesystem::path& path);
void write_weights(const PredictorWeights& weights, std::ostream& out);
PredictorWeights read_weights(std::istream& in);

/// epoch,train_mse,holdout_accuracy
void write_metrics_csv(std::span<const EpochMetrics> metrics, const std::filesystem::path& path);

}  // namespace attnpred
