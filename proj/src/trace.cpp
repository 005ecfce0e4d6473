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

#include "attnpred/trace.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "attnpred/error.hpp"
#include "byteio.hpp"

namespace attnpred {

namespace {

std::string where(std::uint32_t layer, std::uint32_t head, std::int32_t step) {
  std::ostringstream os;
  os << "(layer " << layer << ", head " << head << ", step " << step << ")";
  return os.str();
}

void check_header(const TraceHeader& h) {
  if (h.version != kTraceVersion) {
    throw FormatError("unsupported trace version " + std::to_string(h.version));
  }
  if (h.prefill_len < 1) throw FormatError("prefill_len must be >= 1");
  if (h.first_step_offset > 0) throw FormatError("first_step_offset must be <= 0");
  if (static_cast<std::int64_t>(h.prefill_len) + h.first_step_offset < 1) {
    throw FormatError("first_step_offset reaches before the first prompt token");
  }
  if (h.has_qk != (h.head_dim != 0)) {
    throw FormatError("head_dim must be non-zero exactly when has_qk is set");
  }
}

}  // namespace

AttentionTrace::AttentionTrace(TraceHeader header) : header_(header) {
  check_header(header_);
  header_.row_count = header_.num_layers * header_.num_heads * header_.steps_per_head();
  rows_.reserve(header_.row_count);
  for (std::uint32_t l = 0; l < header_.num_layers; ++l) {
    for (std::uint32_t h = 0; h < header_.num_heads; ++h) {
      for (std::int32_t s = first_step(); s <= last_step(); ++s) {
        rows_.emplace_back(header_.row_length(s), 0.0f);
      }
    }
  }
  if (header_.has_qk) {
    const std::size_t n = std::size_t{header_.num_layers} * header_.num_heads *
                          header_.num_positions() * header_.head_dim;
    queries_.assign(n, 0.0f);
    keys_.assign(n, 0.0f);
  }
}

std::size_t AttentionTrace::row_index(std::uint32_t layer, std::uint32_t head,
                                      std::int32_t step) const {
  if (layer >= header_.num_layers || head >= header_.num_heads || step < first_step() ||
      step > last_step()) {
    throw ParameterError("row index out of range " + where(layer, head, step));
  }
  return (std::size_t{layer} * header_.num_heads + head) * header_.steps_per_head() +
         static_cast<std::size_t>(step - first_step());
}

std::span<const float> AttentionTrace::row(std::uint32_t layer, std::uint32_t head,
                                           std::int32_t step) const {
  return rows_[row_index(layer, head, step)];
}

std::span<float> AttentionTrace::row(std::uint32_t layer, std::uint32_t head, std::int32_t step) {
  return rows_[row_index(layer, head, step)];
}

std::size_t AttentionTrace::qk_offset(std::uint32_t layer, std::uint32_t head,
                                      std::uint32_t position) const {
  if (!header_.has_qk) throw UnsupportedError("trace carries no query/key tensors");
  if (layer >= header_.num_layers || head >= header_.num_heads ||
      position >= header_.num_positions()) {
    throw ParameterError("query/key index out of range");
  }
  return ((std::size_t{layer} * header_.num_heads + head) * header_.num_positions() + position) *
         header_.head_dim;
}

std::span<const float> AttentionTrace::query(std::uint32_t layer, std::uint32_t head,
                                             std::uint32_t position) const {
  return {queries_.data() + qk_offset(layer, head, position), header_.head_dim};
}

std::span<float> AttentionTrace::query(std::uint32_t layer, std::uint32_t head,
                                       std::uint32_t position) {
  return {queries_.data() + qk_offset(layer, head, position), header_.head_dim};
}

std::span<const float> AttentionTrace::key(std::uint32_t layer, std::uint32_t head,
                                           std::uint32_t position) const {
  return {keys_.data() + qk_offset(layer, head, position), header_.head_dim};
}

std::span<float> AttentionTrace::key(std::uint32_t layer, std::uint32_t head,
                                     std::uint32_t position) {
  return {keys_.data() + qk_offset(layer, head, position), header_.head_dim};
}

std::span<const float> AttentionTrace::keys(std::uint32_t layer, std::uint32_t head,
                                            std::uint32_t count) const {
  if (count > header_.num_positions()) throw ParameterError("key count out of range");
  return {keys_.data() + qk_offset(layer, head, 0), std::size_t{count} * header_.head_dim};
}

void AttentionTrace::validate() const {
  check_header(header_);
  if (header_.row_count != header_.num_layers * header_.num_heads * header_.steps_per_head() ||
      rows_.size() != header_.row_count) {
    throw ValidationError("declared row count does not match the rows present");
  }
  for (std::uint32_t l = 0; l < header_.num_layers; ++l) {
    for (std::uint32_t h = 0; h < header_.num_heads; ++h) {
      for (std::int32_t s = first_step(); s <= last_step(); ++s) {
        auto r = row(l, h, s);
        if (r.size() != header_.row_length(s)) {
          throw ValidationError("row length " + std::to_string(r.size()) + " != expected " +
                                std::to_string(header_.row_length(s)) + " at " + where(l, h, s));
        }
        double sum = 0.0;
        for (float v : r) {
          if (!std::isfinite(v) || v < 0.0f) {
            throw ValidationError("negative or non-finite score at " + where(l, h, s));
          }
          sum += v;
        }
        if (std::abs(sum - 1.0) > kRowSumTolerance) {
          throw ValidationError("row sums to " + std::to_string(sum) + " at " + where(l, h, s));
        }
      }
    }
  }
  if (header_.has_qk) {
    const std::size_t n = std::size_t{header_.num_layers} * header_.num_heads *
                          header_.num_positions() * header_.head_dim;
    if (queries_.size() != n || keys_.size() != n) {
      throw ValidationError("query/key tensor size mismatch");
    }
  }
}

std::uint64_t write_trace(const AttentionTrace& trace, std::ostream& out) {
  using namespace detail;
  trace.validate();
  const TraceHeader& h = trace.header();
  const auto start = out.tellp();
  out.write(kTraceMagic.data(), kTraceMagic.size());
  put_le(out, h.version);
  put_le(out, h.num_layers);
  put_le(out, h.num_heads);
  put_le(out, h.prefill_len);
  put_le(out, h.num_decode_steps);
  put_le(out, static_cast<std::uint8_t>(h.has_qk ? 1 : 0));
  put_le(out, h.head_dim);
  put_le(out, h.first_step_offset);
  put_le(out, h.row_count);
  std::uint64_t bytes = kTraceHeaderBytes;
  for (std::uint32_t l = 0; l < h.num_layers; ++l) {
    for (std::uint32_t hd = 0; hd < h.num_heads; ++hd) {
      for (std::int32_t s = trace.first_step(); s <= trace.last_step(); ++s) {
        auto r = trace.row(l, hd, s);
        put_le(out, static_cast<std::uint32_t>(r.size()));
        put_f32s(out, r);
        bytes += 4 + r.size_bytes();
      }
    }
  }
  if (h.has_qk) {
    // Per (layer, head): all queries, then all keys.
    for (std::uint32_t l = 0; l < h.num_layers; ++l) {
      for (std::uint32_t hd = 0; hd < h.num_heads; ++hd) {
        for (std::uint32_t p = 0; p < h.num_positions(); ++p) put_f32s(out, trace.query(l, hd, p));
        for (std::uint32_t p = 0; p < h.num_positions(); ++p) put_f32s(out, trace.key(l, hd, p));
        bytes += 2ull * h.num_positions() * h.head_dim * sizeof(float);
      }
    }
  }
  if (!out) throw IoError("failed writing trace");
  if (start != std::streampos(-1) && out.tellp() != std::streampos(-1) &&
      static_cast<std::uint64_t>(out.tellp() - start) != bytes) {
    throw IoError("trace byte count mismatch");
  }
  return bytes;
}

AttentionTrace read_trace(std::istream& in) {
  using namespace detail;
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size())) throw FormatError("file too short for trace header");
  if (magic != kTraceMagic) throw FormatError("bad magic, not an ATT1 trace");

  TraceHeader h;
  std::uint8_t qk = 0;
  bool ok = get_le(in, h.version) && get_le(in, h.num_layers) && get_le(in, h.num_heads) &&
            get_le(in, h.prefill_len) && get_le(in, h.num_decode_steps) && get_le(in, qk) &&
            get_le(in, h.head_dim) && get_le(in, h.first_step_offset) && get_le(in, h.row_count);
  if (!ok) throw FormatError("truncated trace header");
  if (qk > 1) throw FormatError("has_qk flag must be 0 or 1");
  h.has_qk = qk == 1;
  check_header(h);
  const std::uint64_t expected_rows =
      std::uint64_t{h.num_layers} * h.num_heads * h.steps_per_head();
  if (h.row_count != expected_rows) {
    throw FormatError("row_count " + std::to_string(h.row_count) +
                      " disagrees with layer/head/step counts");
  }

  AttentionTrace trace;
  trace.header_ = h;
  trace.rows_.reserve(std::min<std::uint64_t>(expected_rows, 1u << 20));
  for (std::uint32_t l = 0; l < h.num_layers; ++l) {
    for (std::uint32_t hd = 0; hd < h.num_heads; ++hd) {
      for (std::int32_t s = h.first_step_offset; s <= static_cast<std::int32_t>(h.num_decode_steps);
           ++s) {
        std::uint32_t len = 0;
        if (!get_le(in, len)) throw CorruptionError("truncated before row " + where(l, hd, s));
        if (len != h.row_length(s)) {
          throw CorruptionError("row length " + std::to_string(len) + " unexpected at " +
                                where(l, hd, s));
        }
        std::vector<float> r(len);
        if (!get_f32s(in, r)) throw CorruptionError("truncated mid-row " + where(l, hd, s));
        trace.rows_.push_back(std::move(r));
      }
    }
  }
  if (h.has_qk) {
    const std::size_t per_head = std::size_t{h.num_positions()} * h.head_dim;
    const std::size_t n = std::size_t{h.num_layers} * h.num_heads * per_head;
    trace.queries_.resize(n);
    trace.keys_.resize(n);
    for (std::size_t lh = 0; lh < std::size_t{h.num_layers} * h.num_heads; ++lh) {
      if (!get_f32s(in, std::span<float>(trace.queries_).subspan(lh * per_head, per_head)) ||
          !get_f32s(in, std::span<float>(trace.keys_).subspan(lh * per_head, per_head))) {
        throw CorruptionError("truncated query/key block for (layer " +
                              std::to_string(lh / h.num_heads) + ", head " +
                              std::to_string(lh % h.num_heads) + ")");
      }
    }
  }
  trace.validate();
  return trace;
}

void save_trace(const AttentionTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_trace(trace, out);
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

AttentionTrace load_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_trace(in);
}

}  // namespace attnpred
