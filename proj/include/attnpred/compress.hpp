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
#include <span>
#include <vector>

#include "attnpred/types.hpp"

namespace attnpred {

/// Block-wise max-pooled attention row.
struct CompressedRow {
  std::vector<float> values;  // ceil(original_len / block_size) entries
  std::size_t block_size = 1;
  std::size_t original_len = 0;
};

inline std::size_t num_blocks(std::size_t length, std::size_t block_size) {
  return (length + block_size - 1) / block_size;
}

/// Zero-pads `row` to a multiple of `block_size` and keeps each block's max.
CompressedRow max_pool(std::span<const float> row, std::size_t block_size);

/// Writes the pooled values into `out` (size num_blocks(row.size(), block_size)).
void max_pool_into(std::span<const float> row, std::size_t block_size, std::span<float> out);

/// Union of the token ranges covered by `block_indices`, clipped to [0, length).
IndexSet expand_indices(std::span<const TokenIndex> block_indices, std::size_t block_size,
                        std::size_t length);

}  // namespace attnpred
