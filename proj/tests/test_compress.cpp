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

#include <doctest.h>

#include <algorithm>
#include <random>
#include <vector>

#include "attnpred/compress.hpp"
#include "attnpred/error.hpp"
#include "attnpred/selector.hpp"

using namespace attnpred;

TEST_CASE("max_pool examples") {
  std::vector<float> a{0.1f, 0.3f, 0.2f, 0.05f};
  auto p = max_pool(a, 2);
  CHECK(p.values == std::vector<float>{0.3f, 0.2f});
  CHECK(p.original_len == 4);
  CHECK(p.block_size == 2);

  std::vector<float> b{0.5f, 0.1f, 0.2f, 0.4f};
  CHECK(max_pool(b, 3).values == std::vector<float>{0.5f, 0.4f});
  CHECK(max_pool(b, 1).values == b);
  CHECK(max_pool(b, 16).values == std::vector<float>{0.5f});
  CHECK_THROWS_AS(max_pool(b, 0), ParameterError);
}

TEST_CASE("max_pool_into checks the output length") {
  std::vector<float> row(10, 0.1f), out(3);
  max_pool_into(row, 4, out);
  CHECK(out == std::vector<float>{0.1f, 0.1f, 0.1f});
  std::vector<float> wrong(2);
  CHECK_THROWS_AS(max_pool_into(row, 4, wrong), ParameterError);
}

TEST_CASE("expand_indices examples") {
  std::vector<TokenIndex> two{2};
  auto e = expand_indices(two, 16, 64);
  REQUIRE(e.size() == 16);
  CHECK(e.front() == 32);
  CHECK(e.back() == 47);

  std::vector<TokenIndex> zero{0};
  CHECK(expand_indices(zero, 4, 10) == IndexSet{0, 1, 2, 3});
  CHECK(expand_indices(two, 4, 10) == IndexSet{8, 9});

  std::vector<TokenIndex> out_of_range{3};
  CHECK_THROWS_AS(expand_indices(out_of_range, 4, 10), ParameterError);
}

TEST_CASE("pooled argmax block covers the row argmax") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int trial = 0; trial < 500; ++trial) {
    std::size_t n = 1 + rng() % 300, b = 1 + rng() % 40;
    std::vector<float> row(n);
    for (auto& v : row) v = u(rng);
    auto pooled = max_pool(row, b);
    CHECK(pooled.values.size() == num_blocks(n, b));
    for (std::size_t i = 0; i < pooled.values.size(); ++i) {
      float m = 0;
      for (std::size_t j = i * b; j < std::min(n, (i + 1) * b); ++j) m = std::max(m, row[j]);
      CHECK(pooled.values[i] == m);
    }
    auto top = topk(pooled.values, 1);
    auto tokens = expand_indices(top, b, n);
    auto arg = static_cast<TokenIndex>(std::max_element(row.begin(), row.end()) - row.begin());
    CHECK(std::binary_search(tokens.begin(), tokens.end(), arg));
  }
}
