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

#include "attnpred/selector.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "attnpred/compress.hpp"
#include "attnpred/error.hpp"

namespace attnpred {

IndexSet topk(std::span<const float> values, std::size_t k) {
  if (k > values.size()) {
    throw ParameterError("top-k of " + std::to_string(k) + " from " +
                         std::to_string(values.size()) + " values");
  }
  std::vector<TokenIndex> idx(values.size());
  std::iota(idx.begin(), idx.end(), TokenIndex{0});
  auto better = [&values](TokenIndex a, TokenIndex b) {
    return values[a] > values[b] || (values[a] == values[b] && a < b);
  };
  if (k < idx.size()) {
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), better);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

void SelectorConfig::validate() const {
  if (block_size < 1) throw ConfigError("block_size must be >= 1");
  if (history < 1) throw ConfigError("history must be >= 1");
  if (calibration_period < 1) throw ConfigError("calibration_period must be >= 1");
  if (update_interval < 1) throw ConfigError("update_interval must be >= 1");
  if (budget < sink_tokens + local_tokens) {
    throw ConfigError("budget " + std::to_string(budget) + " is smaller than sink + local (" +
                      std::to_string(sink_tokens + local_tokens) + ")");
  }
}

const std::set<std::string>& SelectorConfig::known_keys() {
  static const std::set<std::string> keys{"budget",       "block_size",  "history",
                                          "calibration_period", "sink_tokens", "local_tokens",
                                          "update_interval"};
  return keys;
}

SelectorConfig SelectorConfig::from_config(const KvConfig& cfg) { return from_config(cfg, SelectorConfig{}); }

SelectorConfig SelectorConfig::from_config(const KvConfig& cfg, SelectorConfig d) {
  auto get = [&cfg](const std::string& key, std::size_t fallback) {
    const auto v = cfg.get_int(key, static_cast<std::int64_t>(fallback));
    if (v < 0) throw ConfigError("key '" + key + "': must be non-negative");
    return static_cast<std::size_t>(v);
  };
  d.budget = get("budget", d.budget);
  d.block_size = get("block_size", d.block_size);
  d.history = get("history", d.history);
  d.calibration_period = get("calibration_period", d.calibration_period);
  d.sink_tokens = get("sink_tokens", d.sink_tokens);
  d.local_tokens = get("local_tokens", d.local_tokens);
  d.update_interval = get("update_interval", d.update_interval);
  d.validate();
  return d;
}

Selector::Selector(SelectorConfig config, const PredictorWeights& weights)
    : config_(config) {
  config_.validate();
  net_.set_weights(weights);
}

void Selector::push(std::span<const float> row) {
  state_.history.push_back(max_pool(row, config_.block_size).values);
  while (state_.history.size() > config_.history) state_.history.pop_front();
}

void Selector::prime(std::span<const float> dense_row) {
  if (dense_row.size() < state_.last_length) throw StateError("rows must not shrink");
  push(dense_row);
  state_.last_length = dense_row.size();
}

AttentionHistory Selector::build_history(std::size_t width) const {
  AttentionHistory hist(config_.history, width);
  const std::size_t have = state_.history.size();
  const std::size_t skip = config_.history - have;  // zero rows at the oldest end
  for (std::size_t i = 0; i < have; ++i) {
    const auto& r = state_.history[i];
    if (r.size() > width) throw StateError("history row wider than the current width");
    std::copy(r.begin(), r.end(), hist.row(skip + i).begin());
  }
  return hist;
}

std::vector<float> Selector::predict(std::size_t width) {
  ++predictor_calls_;
  auto out = net_.forward(build_history(width));
  return {out.begin(), out.end()};
}

const IndexSet& Selector::step(std::span<const float> observed_row,
                               std::optional<std::span<const float>> dense_row) {
  const std::size_t t = observed_row.size();
  if (t == 0) throw ParameterError("observed row is empty");
  if (t < state_.last_length) throw StateError("rows must not shrink");
  if (dense_row && dense_row->size() != t) {
    throw ParameterError("dense row length differs from the observed row");
  }
  const bool calibrate = dense_row && state_.step_counter % config_.calibration_period == 0;
  push(calibrate ? *dense_row : observed_row);
  state_.last_length = t;

  const std::size_t b = config_.block_size;
  IndexSet& s = state_.selection;
  s.clear();
  if (t <= config_.budget) {
    s.resize(t);
    std::iota(s.begin(), s.end(), TokenIndex{0});
    state_.middle.clear();
    ++state_.step_counter;
    return s;
  }

  const std::size_t sink = std::min(config_.sink_tokens, t);
  const std::size_t local_begin = t - std::min(config_.local_tokens, t);
  const std::size_t k = config_.middle_blocks();

  if (state_.step_counter % config_.update_interval == 0) {
    state_.middle.clear();
    if (k > 0) {
      const std::size_t width = num_blocks(t, b);
      auto pred = predict(width);
      std::size_t open = 0;
      for (std::size_t blk = 0; blk < width; ++blk) {
        const std::size_t begin = blk * b;
        const std::size_t end = std::min(t, begin + b);
        if (begin < sink || end > local_begin) {
          pred[blk] = -std::numeric_limits<float>::infinity();
        } else {
          ++open;
        }
      }
      auto blocks = topk(pred, std::min(k, open));
      state_.middle = expand_indices(blocks, b, t);
    }
  } else {
    // Middle blocks persist; only the local window moves.
    std::erase_if(state_.middle, [&](TokenIndex i) { return i >= local_begin; });
  }

  for (std::size_t i = 0; i < sink; ++i) s.push_back(static_cast<TokenIndex>(i));
  for (TokenIndex i : state_.middle) {
    if (i >= sink && i < local_begin) s.push_back(i);
  }
  for (std::size_t i = std::max(sink, local_begin); i < t; ++i) s.push_back(static_cast<TokenIndex>(i));
  ++state_.step_counter;
  return s;
}

}  // namespace attnpred
