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
#include <iosfwd>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "attnpred/kvconfig.hpp"

namespace attnpred {

enum class Schedule { cross_token, cross_layer, full_offload };

std::string_view schedule_name(Schedule s);
/// Throws ConfigError for unknown names.
Schedule parse_schedule(std::string_view name);

/// Latency model of one decode token. Predict and sparse-transfer latencies
/// are whole-token totals, affine in the context length n, and are split
/// evenly across layers when a schedule works layer by layer.
struct SimConfig {
  std::size_t num_layers = 32;
  double per_layer_compute_ms = 50.0 / 32.0;
  double predict_intercept_ms = 0.13043478;
  double predict_per_token_ms = 1.3630435e-4;
  double transfer_fixed_overhead_ms = 0.9;
  double transfer_per_token_ms = 3.9e-4;
  double bytes_per_token_per_layer = 4096.0;  // K and V, 8 KV heads x 128 dims, fp16
  double pcie_bandwidth = 1.6e7;              // bytes per ms
  std::size_t budget = 1024;
  std::vector<std::size_t> context_lengths{4000, 8000, 16000, 32000};
  Schedule schedule = Schedule::cross_token;

  double compute_ms() const { return per_layer_compute_ms * static_cast<double>(num_layers); }
  double predict_ms(std::size_t n) const;
  double sparse_transfer_ms(std::size_t n) const;
  /// One layer's full-context copy.
  double full_layer_transfer_ms(std::size_t n) const;

  /// Throws ConfigError.
  void validate() const;
  static SimConfig from_config(const KvConfig& cfg);
  static SimConfig from_config(const KvConfig& cfg, SimConfig defaults);
  static const std::set<std::string>& known_keys();
};

struct SimRow {
  std::size_t context = 0;
  double predict_ms = 0.0;
  double transfer_ms = 0.0;
  double wait_ms = 0.0;          // prefetch side idle, waiting for the main model
  double stall_ms = 0.0;         // main model idle, waiting for the cache
  double total_ms = 0.0;         // per token, steady state
  double full_offload_ms = 0.0;  // same context under full_offload
  double speedup = 0.0;          // full_offload_ms / total_ms
  double resident_kv_bytes = 0.0;
  double full_kv_bytes = 0.0;
};

struct SimReport {
  Schedule schedule = Schedule::cross_token;
  std::vector<SimRow> rows;
};

/// Steady-state per-token latency of one schedule at context n, from an
/// event-level replay of a few consecutive tokens.
SimRow simulate_point(const SimConfig& config, Schedule schedule, std::size_t n);
SimReport simulate(const SimConfig& config);

struct AffineFit {
  double intercept = 0.0;
  double slope = 0.0;
  std::vector<double> residuals;  // observed - fitted
  double max_abs_residual() const;
};

/// Ordinary least squares y = a + c x. Throws ParameterError when fewer than
/// two distinct x values are given.
AffineFit fit_affine(std::span<const double> x, std::span<const double> y);

/// Measured per-token breakdown at several context lengths.
struct BreakdownTable {
  std::vector<std::size_t> contexts;
  std::vector<double> predict_ms;
  std::vector<double> transfer_ms;
  std::vector<double> total_ms;
};

/// Reference per-token breakdown at 4K/8K/16K/32K (K = 1000 tokens).
BreakdownTable reference_breakdown();

struct FitResult {
  SimConfig config;
  AffineFit predict;
  AffineFit transfer;
};

/// Fits predict and sparse-transfer latencies onto `base`; the fitted
/// contexts become the config's context lengths.
FitResult fit_parameters(const BreakdownTable& table, SimConfig base = {});

void write_sim_csv(std::span<const SimReport> reports, std::ostream& out);
/// Whitespace-separated columns: context, then one total per schedule.
void write_plot_data(std::span<const SimReport> reports, std::ostream& out);

}  // namespace attnpred
