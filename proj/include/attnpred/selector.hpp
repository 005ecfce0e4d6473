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
#include <deque>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "attnpred/kvconfig.hpp"
#include "attnpred/predictor.hpp"
#include "attnpred/types.hpp"

namespace attnpred {

/// Indices of the k largest values, ascending. Ties go to the lower index.
/// Throws ParameterError when k > values.size().
IndexSet topk(std::span<const float> values, std::size_t k);

struct SelectorConfig {
  std::size_t budget = 1024;        // B, tokens
  std::size_t block_size = 16;      // b
  std::size_t history = 64;         // H
  std::size_t calibration_period = 5;  // M
  std::size_t sink_tokens = 64;
  std::size_t local_tokens = 64;
  std::size_t update_interval = 1;

  /// Throws ConfigError.
  void validate() const;
  /// Blocks available to the predictor: (B - sink - local) / b, rounded down.
  std::size_t middle_blocks() const { return (budget - sink_tokens - local_tokens) / block_size; }

  /// Reads budget, block_size, history, calibration_period, sink_tokens,
  /// local_tokens, update_interval; other keys are ignored.
  static SelectorConfig from_config(const KvConfig& cfg);
  static SelectorConfig from_config(const KvConfig& cfg, SelectorConfig defaults);
  static const std::set<std::string>& known_keys();
};

struct SelectorState {
  std::deque<std::vector<float>> history;  // compressed rows, oldest first
  std::uint64_t step_counter = 0;
  IndexSet selection;   // S for the next step
  IndexSet middle;      // predictor-chosen part of S
  std::size_t last_length = 0;
};

/// Critical-token selection for one (layer, head): keeps the compressed
/// history, predicts the next row and picks blocks under the budget, with
/// sink/local ranges always kept and a dense row stored every M steps.
class Selector {
 public:
  Selector(SelectorConfig config, const PredictorWeights& weights);

  /// Appends a dense prefill row to the history without selecting.
  void prime(std::span<const float> dense_row);

  /// Consumes the row observed at step t (length t) and returns S for step
  /// t + 1, a subset of [0, t). `dense_row`, when given, is stored instead of
  /// the observed one on calibration steps.
  const IndexSet& step(std::span<const float> observed_row,
                       std::optional<std::span<const float>> dense_row = std::nullopt);

  /// Predicted compressed row from the current history at width W.
  std::vector<float> predict(std::size_t width);

  const SelectorState& state() const { return state_; }
  const SelectorConfig& config() const { return config_; }
  std::size_t predictor_calls() const { return predictor_calls_; }

 private:
  void push(std::span<const float> row);
  AttentionHistory build_history(std::size_t width) const;

  SelectorConfig config_;
  PredictorNet<float> net_;
  SelectorState state_;
  std::size_t predictor_calls_ = 0;
};

}  // namespace attnpred
