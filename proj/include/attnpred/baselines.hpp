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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "attnpred/types.hpp"

namespace attnpred {

/// Every critical-token scorer the harness can compare. All of them return
/// subsets of [0, t) for the step after t.
enum class Method {
  attnpredictor,
  streaming_llm,
  h2o_plus,
  snap_kv,
  quest,
  prev_token,
  prev_layer,
  oracle,
  anti_oracle,  // bottom-B of the true row; the floor of the metric
};

std::string_view method_name(Method m);
/// Throws ParameterError for unknown names.
Method parse_method(std::string_view name);

/// First floor(B/2) and last ceil(B/2) positions.
IndexSet select_streaming(std::size_t t, std::size_t budget);

/// Heavy hitters over a window of rows (oldest first; t is the last row's
/// length): B - B/2 most recent positions plus the B/2 largest column sums
/// among the rest.
IndexSet select_h2o(std::span<const std::span<const float>> window, std::size_t budget);

/// One-shot prefill filter. The window's last row is the final prefill row.
/// Keeps the observation window (min(window, B) newest prefill tokens) plus
/// the top remaining positions by summed score; decode tokens are appended
/// as they arrive, so the set grows past B during decoding.
class SnapKv {
 public:
  SnapKv(std::span<const std::span<const float>> prefill_window, std::size_t budget);
  IndexSet select(std::size_t t) const;
  const IndexSet& frozen() const { return frozen_; }
  std::size_t window_begin() const { return window_begin_; }

 private:
  IndexSet frozen_;
  std::size_t window_begin_ = 0;
};

/// Per-block channelwise min/max of keys [0, count).
struct KeyBlockSummary {
  std::size_t block_size = 0;
  std::size_t dim = 0;
  std::size_t count = 0;
  std::vector<float> mins;  // blocks x dim
  std::vector<float> maxs;
  std::size_t blocks() const { return dim ? mins.size() / dim : 0; }
};

KeyBlockSummary summarize_keys(std::span<const float> keys, std::size_t dim, std::size_t block_size);

/// sum_c max(q_c * min_c, q_c * max_c) for every block.
std::vector<double> quest_bounds(std::span<const float> query, const KeyBlockSummary& summary);

/// Top floor(B/b) blocks by upper bound, expanded to tokens. Throws
/// UnsupportedError when the summary is empty.
IndexSet select_quest(std::span<const float> query, const KeyBlockSummary& summary,
                      std::size_t budget);

/// Top-B of a reference row's first t entries; streaming fallback without one.
IndexSet select_prev(std::optional<std::span<const float>> reference, std::size_t t,
                     std::size_t budget);

/// Top-B (or bottom-B) of the true next row's first t entries.
IndexSet select_oracle(std::span<const float> next_row_prefix, std::size_t budget);
IndexSet select_anti_oracle(std::span<const float> next_row_prefix, std::size_t budget);

}  // namespace attnpred
