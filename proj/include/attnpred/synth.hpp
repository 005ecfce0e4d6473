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
#include <set>
#include <span>
#include <string>
#include <vector>

#include "attnpred/kvconfig.hpp"
#include "attnpred/trace.hpp"

namespace attnpred {

/// Parameters of the synthetic attention model: random-walk queries and keys,
/// RoPE scores, plus optional logit boosts that plant re-access, seasonal and
/// diagonal (sequential) structure.
struct SynthConfig {
  std::uint32_t head_dim = 64;
  std::uint32_t prefill_len = 512;
  std::uint32_t decode_steps = 128;
  double query_drift = 0.1;
  double key_drift = 0.05;
  double rope_base = 10000.0;
  std::uint32_t seasonal_period = 0;  // 0 disables
  std::vector<std::uint32_t> reaccess_positions;
  std::uint64_t rng_seed = 0;

  std::uint32_t num_layers = 1;
  std::uint32_t num_heads = 1;
  /// Prefill rows stored per head, counting the last one (step 0).
  std::uint32_t history_rows = 64;
  double logit_scale = 8.0;
  /// Pull of each key toward the query at the same position, in [0, 1].
  double qk_alignment = 0.0;
  double reaccess_boost = 4.0;
  /// Columns boosted on seasonal steps; empty picks three from the seed.
  std::vector<std::uint32_t> seasonal_positions;
  double seasonal_boost = 4.0;
  /// Boost at position (query_position - diagonal_offset); 0 disables.
  std::uint32_t diagonal_offset = 0;
  double diagonal_boost = 4.0;
  /// Every boost covers this many consecutive tokens.
  std::uint32_t boost_span = 1;
  /// Std of i.i.d. Gaussian logit jitter, fresh at every step and position.
  double logit_noise = 0.0;

  /// Throws ConfigError.
  void validate() const;

  static SynthConfig from_config(const KvConfig& cfg);
  static const std::set<std::string>& known_keys();
};

/// Unit vectors with v[t+1] = normalize(v[t] + drift * g[t]), g isotropic unit.
std::vector<std::vector<double>> gen_unit_walk(std::uint32_t dim, std::size_t count, double drift,
                                               std::uint64_t seed);

/// Query walk for (layer 0, head 0) of `config`, `count` vectors long.
std::vector<std::vector<double>> gen_query_sequence(const SynthConfig& config, std::size_t count);

/// Mean cosine similarity between vectors `lag` apart.
double lag_autocorrelation(const std::vector<std::vector<double>>& seq, std::size_t lag);

/// Drift whose lag-1 autocorrelation hits `target_rho`; bisection, 20 rounds,
/// stops early within 0.005.
double calibrate_query_drift(double target_rho, std::uint32_t dim, std::size_t steps,
                             std::uint64_t seed);

/// theta_m = base^(-2(m-1)/d) for m = 1..d/2.
std::vector<double> rope_thetas(std::uint32_t dim, double base);

/// Sum over 2-D groups of <q_m, R((j - i) theta_m) k_m>. Depends on i, j only
/// through j - i. Throws ParameterError for odd or mismatched dimensions.
double rope_score(std::span<const double> q, std::span<const double> k, std::int64_t i,
                  std::int64_t j, std::span<const double> thetas);
double rope_score(std::span<const double> q, std::span<const double> k, std::int64_t i,
                  std::int64_t j, double rope_base);

/// Rotates each 2-D group of `v` by position * theta_m, in place.
void apply_rope(std::span<double> v, std::int64_t position, std::span<const double> thetas);

/// Seasonal columns actually used for `config` (explicit or seed-derived).
std::vector<std::uint32_t> seasonal_columns(const SynthConfig& config);

/// Deterministic in rng_seed. Stores post-RoPE queries and keys.
AttentionTrace gen_trace(const SynthConfig& config);

struct DriftBoundResult {
  double max_ratio = 0.0;       // max ||dA|| / (||dq|| * sigma_max(K))
  std::size_t pairs_checked = 0;
  std::size_t violations = 0;   // pairs with ||dA|| > ||dq|| sigma_max(K) + 1e-6
};

/// Checks ||delta raw scores|| <= ||delta q|| * sigma_max(K) over every pair of
/// consecutive steps. Throws UnsupportedError without q/k tensors.
DriftBoundResult drift_bound_check(const AttentionTrace& trace);

}  // namespace attnpred
