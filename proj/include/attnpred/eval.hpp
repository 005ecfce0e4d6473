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
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attnpred/baselines.hpp"
#include "attnpred/predictor.hpp"
#include "attnpred/selector.hpp"
#include "attnpred/trace.hpp"
#include "attnpred/types.hpp"

namespace attnpred {

/// Mass of `row` on S over the row's L1 norm. Throws MetricError for a zero
/// row and ParameterError for an index past the end.
double recovery_rate(std::span<const float> row, const IndexSet& s);

struct EvalConfig {
  SelectorConfig selector;       // B, b, H, M, sink, local for the predictor
  double budget_ratio = 0.0;     // > 0: B = round(ratio * prefill_len) for every method
  bool sparse_feedback = true;   // predictor sees S-restricted rows between calibrations
  std::size_t h2o_window = 64;   // rows summed by h2o_plus
  std::size_t snapkv_window = 64;
  std::size_t skip_layers = 0;   // leading layers left uncompressed and not scored
  bool keep_series = false;

  /// Budget used on a trace with this prefill length.
  std::size_t budget_for(std::size_t prefill_len) const;
};

struct MethodResult {
  Method method{};
  double accuracy_pct = 0.0;
  std::vector<double> series;  // per decode step, mean over scored heads
};

struct EvalReport {
  std::string trace_id;
  EvalConfig config;
  std::size_t budget = 0;
  std::vector<MethodResult> results;

  /// Throws ParameterError when the method was not evaluated.
  double accuracy(Method m) const;
};

/// Scores each method on every scored (layer, head) and decode step t -> t+1:
/// recovery of its selection under the true next row's first t entries over
/// the oracle's, averaged over steps, then heads, then layers, times 100.
/// `weights` is required only for attnpredictor.
EvalReport evaluate(const AttentionTrace& trace, std::span<const Method> methods,
                    const EvalConfig& config, const PredictorWeights* weights = nullptr,
                    std::string trace_id = {});

double prediction_accuracy(const AttentionTrace& trace, Method method, const EvalConfig& config,
                           const PredictorWeights* weights = nullptr);

struct SweepGrid {
  std::vector<std::size_t> history;             // H
  std::vector<std::size_t> calibration_period;  // M
  std::vector<std::size_t> block_size;          // b
  std::vector<std::size_t> budget;              // B, tokens
  std::vector<Method> methods;
  EvalConfig base;

  std::size_t cells_per_trace() const;
};

struct SweepTrace {
  std::string id;
  const AttentionTrace* trace = nullptr;
};

struct SweepRow {
  std::string trace;
  std::string method;
  std::size_t history = 0, calibration_period = 0, block_size = 0, budget = 0;
  double accuracy_pct = 0.0;
  bool failed = false;
  std::string error;

  bool operator<(const SweepRow& o) const;
};

/// Supplies predictor weights for (H, b); may throw, which fails only the
/// affected cells.
using WeightsProvider = std::function<const PredictorWeights&(std::size_t history, std::size_t block_size)>;

/// Cartesian evaluation. Cell failures are recorded and the sweep goes on.
/// Rows come back sorted by (trace, method, H, M, b, B).
std::vector<SweepRow> sweep(std::span<const SweepTrace> traces, const SweepGrid& grid,
                            const WeightsProvider& weights = {});

/// Header trace,method,H,M,b,B,accuracy_pct; failed cells carry "nan".
void write_sweep_csv(std::span<const SweepRow> rows, std::ostream& out);

}  // namespace attnpred
