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

#include <cstdint>
#include <random>

#include "attnpred/predictor.hpp"
#include "attnpred/trace.hpp"

namespace fixtures {

// Random valid trace: every row is a normalized positive vector.
inline attnpred::AttentionTrace random_trace(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::uint32_t> small(1, 3);
  std::uniform_int_distribution<std::uint32_t> len(1, 24);
  std::uniform_int_distribution<std::uint32_t> steps(0, 6);
  std::bernoulli_distribution coin(0.5);
  attnpred::TraceHeader h;
  h.num_layers = small(rng);
  h.num_heads = small(rng);
  h.prefill_len = len(rng);
  h.num_decode_steps = steps(rng);
  h.has_qk = coin(rng);
  h.head_dim = h.has_qk ? 2 * small(rng) : 0;
  std::uniform_int_distribution<std::int32_t> back(0, static_cast<std::int32_t>(h.prefill_len) - 1);
  h.first_step_offset = -back(rng);
  attnpred::AttentionTrace t(h);
  std::uniform_real_distribution<float> u(0.01f, 1.0f);
  std::normal_distribution<float> g(0.0f, 1.0f);
  for (std::uint32_t l = 0; l < h.num_layers; ++l)
    for (std::uint32_t hd = 0; hd < h.num_heads; ++hd) {
      for (std::int32_t s = t.first_step(); s <= t.last_step(); ++s) {
        auto r = t.row(l, hd, s);
        double sum = 0;
        for (auto& v : r) sum += (v = u(rng));
        for (auto& v : r) v = static_cast<float>(v / sum);
      }
      if (h.has_qk)
        for (std::uint32_t p = 0; p < h.num_positions(); ++p) {
          for (auto& v : t.query(l, hd, p)) v = g(rng);
          for (auto& v : t.key(l, hd, p)) v = g(rng);
        }
    }
  return t;
}

// Weights whose output is the per-column mean of the history: one centre tap
// per layer and a unit read-out.
inline attnpred::PredictorWeights mean_weights() {
  attnpred::PredictorWeights w;
  w.conv_a_weight()[4] = 1.0f;
  w.conv_b_weight()[4] = 1.0f;
  w.conv_1d_weight()[0] = 1.0f;
  return w;
}

}  // namespace fixtures
