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

#include "attnpred/compress.hpp"

#include <algorithm>
#include <string>

#include "attnpred/error.hpp"
#include "attnpred/simd/kernels.hpp"

namespace attnpred {

void max_pool_into(std::span<const float> row, std::size_t block_size, std::span<float> out) {
  if (block_size == 0) throw ParameterError("block size must be >= 1");
  if (row.empty()) throw ParameterError("cannot pool an empty row");
  if (out.size() != num_blocks(row.size(), block_size)) {
    throw ParameterError("pooled output has the wrong length");
  }
  simd::kernels<float>().block_max(row.data(), row.size(), block_size, out.data());
}

CompressedRow max_pool(std::span<const float> row, std::size_t block_size) {
  if (block_size == 0) throw ParameterError("block size must be >= 1");
  CompressedRow out;
  out.block_size = block_size;
  out.original_len = row.size();
  out.values.resize(num_blocks(row.size(), block_size));
  max_pool_into(row, block_size, out.values);
  return out;
}

IndexSet expand_indices(std::span<const TokenIndex> block_indices, std::size_t block_size,
                        std::size_t length) {
  if (block_size == 0) throw ParameterError("block size must be >= 1");
  const std::size_t blocks = num_blocks(length, block_size);
  std::vector<TokenIndex> sorted(block_indices.begin(), block_indices.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  IndexSet out;
  out.reserve(sorted.size() * block_size);
  for (TokenIndex b : sorted) {
    if (b >= blocks) {
      throw ParameterError("block index " + std::to_string(b) + " out of range for " +
                           std::to_string(blocks) + " blocks");
    }
    const std::size_t begin = std::size_t{b} * block_size;
    const std::size_t end = std::min(length, begin + block_size);
    for (std::size_t i = begin; i < end; ++i) out.push_back(static_cast<TokenIndex>(i));
  }
  return out;
}

}  // namespace attnpred
