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

#include "attnpred/baselines.hpp"

#include <algorithm>
#include <array>
#include <numeric>

#include "attnpred/compress.hpp"
#include "attnpred/error.hpp"
#include "attnpred/selector.hpp"

namespace attnpred {

namespace {

constexpr std::array<std::pair<Method, std::string_view>, 9> kNames{{
    {Method::attnpredictor, "attnpredictor"},
    {Method::streaming_llm, "streaming_llm"},
    {Method::h2o_plus, "h2o_plus"},
    {Method::snap_kv, "snap_kv"},
    {Method::quest, "quest"},
    {Method::prev_token, "prev_token"},
    {Method::prev_layer, "prev_layer"},
    {Method::oracle, "oracle"},
    {Method::anti_oracle, "anti_oracle"},
}};

IndexSet iota_set(std::size_t begin, std::size_t end) {
  IndexSet s(end > begin ? end - begin : 0);
  std::iota(s.begin(), s.end(), static_cast<TokenIndex>(begin));
  return s;
}

IndexSet merge(IndexSet a, const IndexSet& b) {
  IndexSet out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

}  // namespace

std::string_view method_name(Method m) {
  for (const auto& [k, v] : kNames) {
    if (k == m) return v;
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (const auto& [k, v] : kNames) {
    if (v == name) return k;
  }
  throw ParameterError("unknown method '" + std::string(name) + "'");
}

IndexSet select_streaming(std::size_t t, std::size_t budget) {
  if (budget >= t) return iota_set(0, t);
  const std::size_t sink = budget / 2;
  return merge(iota_set(0, sink), iota_set(t - (budget - sink), t));
}

IndexSet select_h2o(std::span<const std::span<const float>> window, std::size_t budget) {
  if (window.empty()) throw ParameterError("h2o needs at least one history row");
  const std::size_t t = window.back().size();
  if (budget >= t) return iota_set(0, t);
  const std::size_t heavy = budget / 2;
  const std::size_t recent = budget - heavy;
  const std::size_t candidates = t - recent;
  std::vector<float> score(candidates, 0.0f);
  for (const auto& row : window) {
    const std::size_t n = std::min(row.size(), candidates);
    for (std::size_t j = 0; j < n; ++j) score[j] += row[j];
  }
  return merge(topk(score, std::min(heavy, candidates)), iota_set(candidates, t));
}

SnapKv::SnapKv(std::span<const std::span<const float>> prefill_window, std::size_t budget) {
  if (prefill_window.empty()) throw ParameterError("snapkv needs a prefill window");
  const std::size_t p = prefill_window.back().size();
  if (budget >= p) {
    frozen_ = iota_set(0, p);
    window_begin_ = p;
    return;
  }
  const std::size_t recent = std::min(prefill_window.size(), budget);
  window_begin_ = p - recent;
  std::vector<float> score(window_begin_, 0.0f);
  for (const auto& row : prefill_window) {
    const std::size_t n = std::min(row.size(), window_begin_);
    for (std::size_t j = 0; j < n; ++j) score[j] += row[j];
  }
  frozen_ = topk(score, std::min(budget - recent, window_begin_));
}

IndexSet SnapKv::select(std::size_t t) const {
  if (t < window_begin_) throw ParameterError("snapkv queried before the end of prefill");
  return merge(frozen_, iota_set(window_begin_, t));
}

KeyBlockSummary summarize_keys(std::span<const float> keys, std::size_t dim, std::size_t block_size) {
  if (dim == 0 || block_size == 0) throw ParameterError("dim and block size must be >= 1");
  if (keys.size() % dim != 0) throw ParameterError("key buffer is not a whole number of vectors");
  KeyBlockSummary s;
  s.block_size = block_size;
  s.dim = dim;
  s.count = keys.size() / dim;
  const std::size_t blocks = num_blocks(s.count, block_size);
  s.mins.assign(blocks * dim, std::numeric_limits<float>::infinity());
  s.maxs.assign(blocks * dim, -std::numeric_limits<float>::infinity());
  for (std::size_t j = 0; j < s.count; ++j) {
    const std::size_t b = j / block_size;
    for (std::size_t c = 0; c < dim; ++c) {
      const float v = keys[j * dim + c];
      s.mins[b * dim + c] = std::min(s.mins[b * dim + c], v);
      s.maxs[b * dim + c] = std::max(s.maxs[b * dim + c], v);
    }
  }
  return s;
}

std::vector<double> quest_bounds(std::span<const float> query, const KeyBlockSummary& summary) {
  if (query.size() != summary.dim) throw ParameterError("query dimension mismatch");
  std::vector<double> out(summary.blocks(), 0.0);
  for (std::size_t b = 0; b < out.size(); ++b) {
    double bound = 0.0;
    for (std::size_t c = 0; c < summary.dim; ++c) {
      const double q = query[c];
      bound += std::max(q * summary.mins[b * summary.dim + c], q * summary.maxs[b * summary.dim + c]);
    }
    out[b] = bound;
  }
  return out;
}

IndexSet select_quest(std::span<const float> query, const KeyBlockSummary& summary,
                      std::size_t budget) {
  if (summary.count == 0) throw UnsupportedError("quest needs key summaries");
  if (budget >= summary.count) return iota_set(0, summary.count);
  const auto bounds = quest_bounds(query, summary);
  std::vector<float> as_float(bounds.begin(), bounds.end());
  const std::size_t k = std::min(budget / summary.block_size, bounds.size());
  return expand_indices(topk(as_float, k), summary.block_size, summary.count);
}

IndexSet select_prev(std::optional<std::span<const float>> reference, std::size_t t,
                     std::size_t budget) {
  if (!reference) return select_streaming(t, budget);
  if (reference->size() < t) throw ParameterError("reference row shorter than the context");
  if (budget >= t) return iota_set(0, t);
  return topk(reference->first(t), budget);
}

IndexSet select_oracle(std::span<const float> next_row_prefix, std::size_t budget) {
  const std::size_t t = next_row_prefix.size();
  if (budget >= t) return iota_set(0, t);
  return topk(next_row_prefix, budget);
}

IndexSet select_anti_oracle(std::span<const float> next_row_prefix, std::size_t budget) {
  const std::size_t t = next_row_prefix.size();
  if (budget >= t) return iota_set(0, t);
  std::vector<float> neg(next_row_prefix.begin(), next_row_prefix.end());
  for (float& v : neg) v = -v;
  return topk(neg, budget);
}

}  // namespace attnpred
