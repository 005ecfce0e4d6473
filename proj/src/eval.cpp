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

#include "attnpred/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <ostream>
#include <tuple>

#include "attnpred/error.hpp"

namespace attnpred {

double recovery_rate(std::span<const float> row, const IndexSet& s) {
  double norm = 0.0;
  for (float v : row) norm += std::abs(static_cast<double>(v));
  if (!(norm > 0.0)) throw MetricError("recovery rate of a zero-norm row");
  double got = 0.0;
  for (TokenIndex i : s) {
    if (i >= row.size()) {
      throw ParameterError("index " + std::to_string(i) + " outside a row of length " +
                           std::to_string(row.size()));
    }
    got += std::abs(static_cast<double>(row[i]));
  }
  return got / norm;
}

std::size_t EvalConfig::budget_for(std::size_t prefill_len) const {
  if (budget_ratio > 0.0) {
    return std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(budget_ratio * static_cast<double>(prefill_len))));
  }
  return selector.budget;
}

double EvalReport::accuracy(Method m) const {
  for (const auto& r : results) {
    if (r.method == m) return r.accuracy_pct;
  }
  throw ParameterError("method " + std::string(method_name(m)) + " not in report");
}

namespace {

// Per-head scorer: fed the dense row of each step, returns S for the next step.
class HeadScorer {
 public:
  virtual ~HeadScorer() = default;
  virtual IndexSet select(std::int32_t step) = 0;
};

struct HeadContext {
  const AttentionTrace& trace;
  std::uint32_t layer, head;
  std::size_t budget;
  const EvalConfig& config;

  std::span<const float> row(std::int32_t s) const { return trace.row(layer, head, s); }
  std::size_t len(std::int32_t s) const { return trace.header().row_length(s); }
};

std::vector<float> restrict_row(std::span<const float> dense, const IndexSet& s) {
  std::vector<float> out(dense.size(), 0.0f);
  double sum = 0.0;
  auto keep = [&](std::size_t i) {
    if (out[i] == 0.0f && dense[i] != 0.0f) {
      out[i] = dense[i];
      sum += dense[i];
    }
  };
  for (TokenIndex i : s) {
    if (i < dense.size()) keep(i);
  }
  keep(dense.size() - 1);
  if (sum > 0.0) {
    for (float& v : out) v = static_cast<float>(v / sum);
  }
  return out;
}

class PredictorScorer final : public HeadScorer {
 public:
  PredictorScorer(const HeadContext& ctx, const PredictorWeights& w)
      : ctx_(ctx), selector_(make_config(ctx), w) {
    const auto h = static_cast<std::int32_t>(ctx.config.selector.history);
    for (std::int32_t s = std::max(ctx.trace.first_step(), -(h - 1)); s < 0; ++s) {
      selector_.prime(ctx.row(s));
    }
  }

  IndexSet select(std::int32_t step) override {
    auto dense = ctx_.row(step);
    if (step == 0 || !ctx_.config.sparse_feedback) {
      last_ = selector_.step(dense, dense);
    } else {
      const auto observed = restrict_row(dense, last_);
      last_ = selector_.step(observed, dense);
    }
    return last_;
  }

 private:
  static SelectorConfig make_config(const HeadContext& ctx) {
    SelectorConfig c = ctx.config.selector;
    c.budget = ctx.budget;
    return c;
  }

  HeadContext ctx_;
  Selector selector_;
  IndexSet last_;
};

class StreamingScorer final : public HeadScorer {
 public:
  explicit StreamingScorer(const HeadContext& ctx) : ctx_(ctx) {}
  IndexSet select(std::int32_t step) override { return select_streaming(ctx_.len(step), ctx_.budget); }

 private:
  HeadContext ctx_;
};

class H2oScorer final : public HeadScorer {
 public:
  explicit H2oScorer(const HeadContext& ctx) : ctx_(ctx) {}
  IndexSet select(std::int32_t step) override {
    const auto w = static_cast<std::int32_t>(std::max<std::size_t>(1, ctx_.config.h2o_window));
    std::vector<std::span<const float>> window;
    for (std::int32_t s = std::max(ctx_.trace.first_step(), step - w + 1); s <= step; ++s) {
      window.push_back(ctx_.row(s));
    }
    return select_h2o(window, ctx_.budget);
  }

 private:
  HeadContext ctx_;
};

class SnapKvScorer final : public HeadScorer {
 public:
  explicit SnapKvScorer(const HeadContext& ctx) : ctx_(ctx), snap_(prefill_window(ctx), ctx.budget) {}
  IndexSet select(std::int32_t step) override { return snap_.select(ctx_.len(step)); }

 private:
  static std::vector<std::span<const float>> prefill_window(const HeadContext& ctx) {
    const auto w = static_cast<std::int32_t>(std::max<std::size_t>(1, ctx.config.snapkv_window));
    std::vector<std::span<const float>> window;
    for (std::int32_t s = std::max(ctx.trace.first_step(), -w + 1); s <= 0; ++s) window.push_back(ctx.row(s));
    return window;
  }

  HeadContext ctx_;
  SnapKv snap_;
};

class QuestScorer final : public HeadScorer {
 public:
  explicit QuestScorer(const HeadContext& ctx) : ctx_(ctx) {
    if (!ctx.trace.has_qk()) throw UnsupportedError("quest needs a trace with query/key vectors");
  }
  IndexSet select(std::int32_t step) override {
    const auto t = static_cast<std::uint32_t>(ctx_.len(step));
    const auto d = ctx_.trace.head_dim();
    // The query of the row being predicted sits at position t.
    const auto summary = summarize_keys(ctx_.trace.keys(ctx_.layer, ctx_.head, t), d,
                                        ctx_.config.selector.block_size);
    return select_quest(ctx_.trace.query(ctx_.layer, ctx_.head, t), summary, ctx_.budget);
  }

 private:
  HeadContext ctx_;
};

class PrevTokenScorer final : public HeadScorer {
 public:
  explicit PrevTokenScorer(const HeadContext& ctx) : ctx_(ctx) {}
  IndexSet select(std::int32_t step) override {
    return select_prev(ctx_.row(step), ctx_.len(step), ctx_.budget);
  }

 private:
  HeadContext ctx_;
};

class PrevLayerScorer final : public HeadScorer {
 public:
  explicit PrevLayerScorer(const HeadContext& ctx) : ctx_(ctx) {}
  IndexSet select(std::int32_t step) override {
    const std::size_t t = ctx_.len(step);
    if (ctx_.layer == 0) return select_prev(std::nullopt, t, ctx_.budget);
    return select_prev(ctx_.trace.row(ctx_.layer - 1, ctx_.head, step + 1), t, ctx_.budget);
  }

 private:
  HeadContext ctx_;
};

class OracleScorer final : public HeadScorer {
 public:
  OracleScorer(const HeadContext& ctx, bool worst) : ctx_(ctx), worst_(worst) {}
  IndexSet select(std::int32_t step) override {
    auto target = ctx_.row(step + 1).first(ctx_.len(step));
    return worst_ ? select_anti_oracle(target, ctx_.budget) : select_oracle(target, ctx_.budget);
  }

 private:
  HeadContext ctx_;
  bool worst_;
};

std::unique_ptr<HeadScorer> make_scorer(Method m, const HeadContext& ctx, const PredictorWeights* w) {
  switch (m) {
    case Method::attnpredictor:
      if (!w) throw ParameterError("attnpredictor needs predictor weights");
      return std::make_unique<PredictorScorer>(ctx, *w);
    case Method::streaming_llm: return std::make_unique<StreamingScorer>(ctx);
    case Method::h2o_plus: return std::make_unique<H2oScorer>(ctx);
    case Method::snap_kv: return std::make_unique<SnapKvScorer>(ctx);
    case Method::quest: return std::make_unique<QuestScorer>(ctx);
    case Method::prev_token: return std::make_unique<PrevTokenScorer>(ctx);
    case Method::prev_layer: return std::make_unique<PrevLayerScorer>(ctx);
    case Method::oracle: return std::make_unique<OracleScorer>(ctx, false);
    case Method::anti_oracle: return std::make_unique<OracleScorer>(ctx, true);
  }
  throw ParameterError("unknown method");
}

}  // namespace

EvalReport evaluate(const AttentionTrace& trace, std::span<const Method> methods,
                    const EvalConfig& config, const PredictorWeights* weights, std::string trace_id) {
  if (methods.empty()) throw ParameterError("no methods to evaluate");
  if (trace.num_decode_steps() < 1) throw ParameterError("trace has no decode steps to score");
  if (config.skip_layers >= trace.num_layers()) throw ParameterError("every layer is skipped");
  for (Method m : methods) {
    if (m == Method::attnpredictor && !weights) throw ParameterError("attnpredictor needs predictor weights");
  }

  EvalReport report;
  report.trace_id = std::move(trace_id);
  report.config = config;
  report.budget = config.budget_for(trace.prefill_len());
  const std::int32_t steps = trace.last_step();  // scored transitions s -> s + 1, s in [0, D)

  const std::size_t nm = methods.size();
  std::vector<double> layer_sum(nm, 0.0);
  std::vector<std::vector<double>> series(nm, std::vector<double>(config.keep_series ? steps : 0, 0.0));
  std::size_t scored_heads = 0;

  for (std::uint32_t l = static_cast<std::uint32_t>(config.skip_layers); l < trace.num_layers(); ++l) {
    std::vector<double> head_sum(nm, 0.0);
    for (std::uint32_t h = 0; h < trace.num_heads(); ++h) {
      HeadContext ctx{trace, l, h, report.budget, config};
      std::vector<std::unique_ptr<HeadScorer>> scorers;
      for (Method m : methods) scorers.push_back(make_scorer(m, ctx, weights));
      std::vector<double> step_sum(nm, 0.0);
      for (std::int32_t s = 0; s < steps; ++s) {
        auto target = trace.row(l, h, s + 1).first(ctx.len(s));
        const double best = recovery_rate(target, select_oracle(target, report.budget));
        for (std::size_t i = 0; i < nm; ++i) {
          const double ratio = recovery_rate(target, scorers[i]->select(s)) / best;
          step_sum[i] += ratio;
          if (config.keep_series) series[i][s] += ratio;
        }
      }
      for (std::size_t i = 0; i < nm; ++i) head_sum[i] += step_sum[i] / steps;
      ++scored_heads;
    }
    for (std::size_t i = 0; i < nm; ++i) layer_sum[i] += head_sum[i] / trace.num_heads();
  }

  const double layers = static_cast<double>(trace.num_layers() - config.skip_layers);
  for (std::size_t i = 0; i < nm; ++i) {
    MethodResult r;
    r.method = methods[i];
    r.accuracy_pct = 100.0 * layer_sum[i] / layers;
    if (config.keep_series) {
      r.series = std::move(series[i]);
      for (double& v : r.series) v = 100.0 * v / static_cast<double>(scored_heads);
    }
    report.results.push_back(std::move(r));
  }
  return report;
}

double prediction_accuracy(const AttentionTrace& trace, Method method, const EvalConfig& config,
                           const PredictorWeights* weights) {
  const Method one[] = {method};
  return evaluate(trace, one, config, weights).results.front().accuracy_pct;
}

std::size_t SweepGrid::cells_per_trace() const {
  return history.size() * calibration_period.size() * block_size.size() * budget.size() * methods.size();
}

bool SweepRow::operator<(const SweepRow& o) const {
  return std::tie(trace, method, history, calibration_period, block_size, budget) <
         std::tie(o.trace, o.method, o.history, o.calibration_period, o.block_size, o.budget);
}

std::vector<SweepRow> sweep(std::span<const SweepTrace> traces, const SweepGrid& grid,
                            const WeightsProvider& weights) {
  if (traces.empty()) throw ParameterError("sweep needs at least one trace");
  if (grid.cells_per_trace() == 0) throw ParameterError("sweep grid is empty");

  std::vector<SweepRow> rows;
  for (const auto& tr : traces) {
    for (std::size_t hist : grid.history) {
      for (std::size_t m : grid.calibration_period) {
        for (std::size_t b : grid.block_size) {
          for (std::size_t budget : grid.budget) {
            EvalConfig cfg = grid.base;
            cfg.selector.history = hist;
            cfg.selector.calibration_period = m;
            cfg.selector.block_size = b;
            cfg.selector.budget = budget;
            cfg.budget_ratio = 0.0;
            cfg.keep_series = false;
            for (Method method : grid.methods) {
              SweepRow row;
              row.trace = tr.id;
              row.method = method_name(method);
              row.history = hist;
              row.calibration_period = m;
              row.block_size = b;
              row.budget = budget;
              try {
                if (!tr.trace) throw ParameterError("missing trace");
                const PredictorWeights* w = nullptr;
                if (method == Method::attnpredictor) {
                  if (!weights) throw ParameterError("attnpredictor needs predictor weights");
                  w = &weights(hist, b);
                }
                row.accuracy_pct = prediction_accuracy(*tr.trace, method, cfg, w);
              } catch (const std::exception& e) {
                row.failed = true;
                row.error = e.what();
                row.accuracy_pct = std::nan("");
              }
              rows.push_back(std::move(row));
            }
          }
        }
      }
    }
  }
  std::stable_sort(rows.begin(), rows.end());
  return rows;
}

void write_sweep_csv(std::span<const SweepRow> rows, std::ostream& out) {
  out << "trace,method,H,M,b,B,accuracy_pct\n";
  const auto old = out.precision(6);
  out << std::fixed;
  for (const auto& r : rows) {
    out << r.trace << ',' << r.method << ',' << r.history << ',' << r.calibration_period << ','
        << r.block_size << ',' << r.budget << ',';
    if (r.failed) {
      out << "nan";
    } else {
      out << r.accuracy_pct;
    }
    out << '\n';
  }
  out.unsetf(std::ios::floatfield);
  out.precision(old);
}

}  // namespace attnpred
