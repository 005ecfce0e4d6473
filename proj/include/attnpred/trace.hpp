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

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace attnpred {

inline constexpr std::array<char, 4> kTraceMagic{'A', 'T', 'T', '1'};
inline constexpr std::uint16_t kTraceVersion = 1;
/// Serialized size of TraceHeader in bytes.
inline constexpr std::size_t kTraceHeaderBytes = 4 + 2 + 4 * 4 + 1 + 4 + 4 + 4;
/// Rows must sum to one within this tolerance.
inline constexpr double kRowSumTolerance = 1e-4;

// Step numbering: step 0 is the last prefill row (length prefill_len), step s
// has length prefill_len + s. Negative steps are earlier prefill rows; the
// oldest stored row is first_step_offset.
struct TraceHeader {
  std::uint16_t version = kTraceVersion;
  std::uint32_t num_layers = 0;
  std::uint32_t num_heads = 0;
  std::uint32_t prefill_len = 0;
  std::uint32_t num_decode_steps = 0;
  bool has_qk = false;
  std::uint32_t head_dim = 0;
  std::int32_t first_step_offset = 0;
  // Total rows serialized; always layers * heads * steps_per_head().
  std::uint32_t row_count = 0;

  std::uint32_t steps_per_head() const {
    return static_cast<std::uint32_t>(static_cast<std::int64_t>(num_decode_steps) - first_step_offset + 1);
  }
  /// Number of token positions with a query/key vector.
  std::uint32_t num_positions() const { return prefill_len + num_decode_steps; }
  std::uint32_t row_length(std::int32_t step) const {
    return static_cast<std::uint32_t>(static_cast<std::int64_t>(prefill_len) + step);
  }

  bool operator==(const TraceHeader&) const = default;
};

/// Ragged attention rows for every (layer, head, step), optionally with the
/// post-RoPE query and key vectors that produced them.
class AttentionTrace {
 public:
  AttentionTrace() = default;

  /// Allocates zero-filled rows of the right lengths. Fills in row_count.
  explicit AttentionTrace(TraceHeader header);

  const TraceHeader& header() const { return header_; }
  std::uint32_t num_layers() const { return header_.num_layers; }
  std::uint32_t num_heads() const { return header_.num_heads; }
  std::uint32_t prefill_len() const { return header_.prefill_len; }
  std::uint32_t num_decode_steps() const { return header_.num_decode_steps; }
  std::int32_t first_step() const { return header_.first_step_offset; }
  std::int32_t last_step() const { return static_cast<std::int32_t>(header_.num_decode_steps); }
  bool has_qk() const { return header_.has_qk; }
  std::uint32_t head_dim() const { return header_.head_dim; }

  std::span<const float> row(std::uint32_t layer, std::uint32_t head, std::int32_t step) const;
  std::span<float> row(std::uint32_t layer, std::uint32_t head, std::int32_t step);

  /// Query that produced row `step` sits at position prefill_len + step - 1.
  std::span<const float> query(std::uint32_t layer, std::uint32_t head, std::uint32_t position) const;
  std::span<float> query(std::uint32_t layer, std::uint32_t head, std::uint32_t position);
  std::span<const float> key(std::uint32_t layer, std::uint32_t head, std::uint32_t position) const;
  std::span<float> key(std::uint32_t layer, std::uint32_t head, std::uint32_t position);
  /// Keys [0, count) of one head, row-major count x head_dim.
  std::span<const float> keys(std::uint32_t layer, std::uint32_t head, std::uint32_t count) const;

  /// Throws ValidationError naming the first offending (layer, head, step).
  void validate() const;

  bool operator==(const AttentionTrace&) const = default;

 private:
  std::size_t row_index(std::uint32_t layer, std::uint32_t head, std::int32_t step) const;
  std::size_t qk_offset(std::uint32_t layer, std::uint32_t head, std::uint32_t position) const;

  TraceHeader header_;
  std::vector<std::vector<float>> rows_;
  std::vector<float> queries_;
  std::vector<float> keys_;

  friend AttentionTrace read_trace(std::istream& in);
};

/// Validates, then serializes little-endian. Returns bytes written.
std::uint64_t write_trace(const AttentionTrace& trace, std::ostream& out);
AttentionTrace read_trace(std::istream& in);

void save_trace(const AttentionTrace& trace, const std::filesystem::path& path);
AttentionTrace load_trace(const std::filesystem::path& path);

}  // namespace attnpred
