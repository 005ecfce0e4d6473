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

#include "attnpred/prefetchsim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "attnpred/error.hpp"

namespace attnpred {

namespace {

constexpr std::array<std::pair<Schedule, std::string_view>, 3> kSchedules{{
    {Schedule::cross_token, "cross_token"},
    {Schedule::cross_layer, "cross_layer"},
    {Schedule::full_offload, "full_offload"},
}};

constexpr int kReplayTokens = 6;

// Layer-by-layer prefetch: layer l's task is issued when layer l-1 starts
// computing (layer 0 when the previous token's last layer starts). Predict
// calls share one worker, transfers share one link.
double replay_layerwise(std::size_t layers, double compute, double predict, double transfer) {
  double pred_free = 0.0, bus_free = 0.0, gpu_free = 0.0;
  double prev_last_start = 0.0;
  double prev_end = 0.0, last_total = 0.0;
  std::vector<double> start(layers, 0.0);
  for (int k = 0; k < kReplayTokens; ++k) {
    for (std::size_t l = 0; l < layers; ++l) {
      const double issue = l > 0 ? start[l - 1] : prev_last_start;
      const double pe = std::max(issue, pred_free) + predict;
      pred_free = pe;
      const double xe = std::max(pe, bus_free) + transfer;
      bus_free = xe;
      start[l] = std::max(gpu_free, xe);
      gpu_free = start[l] + compute;
    }
    prev_last_start = start[layers - 1];
    last_total = gpu_free - prev_end;
    prev_end = gpu_free;
  }
  return last_total;
}

}  // namespace

std::string_view schedule_name(Schedule s) {
  for (const auto& [k, v] : kSchedules) {
    if (k == s) return v;
  }
  return "unknown";
}

Schedule parse_schedule(std::string_view name) {
  for (const auto& [k, v] : kSchedules) {
    if (v == name) return k;
  }
  throw ConfigError("unknown schedule '" + std::string(name) + "'");
}

double SimConfig::predict_ms(std::size_t n) const {
  return predict_intercept_ms + predict_per_token_ms * static_cast<double>(n);
}

double SimConfig::sparse_transfer_ms(std::size_t n) const {
  return transfer_fixed_overhead_ms + transfer_per_token_ms * static_cast<double>(n);
}

double SimConfig::full_layer_transfer_ms(std::size_t n) const {
  return transfer_fixed_overhead_ms / static_cast<double>(num_layers) +
         static_cast<double>(n) * bytes_per_token_per_layer / pcie_bandwidth;
}

void SimConfig::validate() const {
  if (num_layers < 1) throw ConfigError("num_layers must be >= 1");
  if (!(per_layer_compute_ms > 0.0)) throw ConfigError("per_layer_compute_ms must be positive");
  if (!(bytes_per_token_per_layer > 0.0)) throw ConfigError("bytes_per_token_per_layer must be positive");
  if (!(pcie_bandwidth > 0.0)) throw ConfigError("pcie_bandwidth must be positive");
  if (transfer_fixed_overhead_ms < 0.0 || predict_intercept_ms < 0.0 || predict_per_token_ms < 0.0 ||
      transfer_per_token_ms < 0.0) {
    throw ConfigError("latency coefficients must be non-negative");
  }
  if (budget < 1) throw ConfigError("budget must be >= 1");
  if (context_lengths.empty()) throw ConfigError("context_lengths must not be empty");
  for (auto n : context_lengths) {
    if (n < 1) throw ConfigError("context lengths must be >= 1");
    if (predict_ms(n) < 0.0 || sparse_transfer_ms(n) < 0.0) {
      throw ConfigError("negative latency at context " + std::to_string(n));
    }
  }
}

const std::set<std::string>& SimConfig::known_keys() {
  static const std::set<std::string> keys{
      "num_layers",           "per_layer_compute_ms",       "compute_ms",
      "predict_intercept_ms", "predict_per_token_ms",       "transfer_fixed_overhead_ms",
      "transfer_per_token_ms", "bytes_per_token_per_layer", "pcie_bandwidth",
      "budget",               "context_lengths",            "schedule"};
  return keys;
}

SimConfig SimConfig::from_config(const KvConfig& cfg) { return from_config(cfg, SimConfig{}); }

SimConfig SimConfig::from_config(const KvConfig& cfg, SimConfig d) {
  cfg.require_known(known_keys());
  const auto layers = cfg.get_int("num_layers", static_cast<std::int64_t>(d.num_layers));
  if (layers < 1) throw ConfigError("key 'num_layers': must be >= 1");
  d.num_layers = static_cast<std::size_t>(layers);
  d.per_layer_compute_ms = cfg.get_double("per_layer_compute_ms", d.per_layer_compute_ms);
  if (cfg.has("compute_ms")) {
    if (cfg.has("per_layer_compute_ms")) {
      throw ConfigError("key 'compute_ms': conflicts with per_layer_compute_ms");
    }
    d.per_layer_compute_ms = cfg.get_double("compute_ms", 0.0) / static_cast<double>(d.num_layers);
  }
  d.predict_intercept_ms = cfg.get_double("predict_intercept_ms", d.predict_intercept_ms);
  d.predict_per_token_ms = cfg.get_double("predict_per_token_ms", d.predict_per_token_ms);
  d.transfer_fixed_overhead_ms = cfg.get_double("transfer_fixed_overhead_ms", d.transfer_fixed_overhead_ms);
  d.transfer_per_token_ms = cfg.get_double("transfer_per_token_ms", d.transfer_per_token_ms);
  d.bytes_per_token_per_layer = cfg.get_double("bytes_per_token_per_layer", d.bytes_per_token_per_layer);
  d.pcie_bandwidth = cfg.get_double("pcie_bandwidth", d.pcie_bandwidth);
  const auto budget = cfg.get_int("budget", static_cast<std::int64_t>(d.budget));
  if (budget < 1) throw ConfigError("key 'budget': must be >= 1");
  d.budget = static_cast<std::size_t>(budget);
  if (cfg.has("context_lengths")) {
    d.context_lengths.clear();
    for (auto n : cfg.get_int_list("context_lengths", {})) {
      if (n < 1) throw ConfigError("key 'context_lengths': values must be >= 1");
      d.context_lengths.push_back(static_cast<std::size_t>(n));
    }
  }
  if (cfg.has("schedule")) d.schedule = parse_schedule(cfg.get_string("schedule", "cross_token"));
  d.validate();
  return d;
}

SimRow simulate_point(const SimConfig& c, Schedule schedule, std::size_t n) {
  const double compute = c.compute_ms();
  const double layers = static_cast<double>(c.num_layers);
  SimRow r;
  r.context = n;
  r.full_kv_bytes = static_cast<double>(n) * c.bytes_per_token_per_layer * layers;

  switch (schedule) {
    case Schedule::cross_token: {
      // Prefetch for token t+1 is issued when token t starts and must land
      // before t+1 begins.
      r.predict_ms = c.predict_ms(n);
      r.transfer_ms = c.sparse_transfer_ms(n);
      const double prefetch = r.predict_ms + r.transfer_ms;
      r.total_ms = std::max(compute, prefetch);
      r.resident_kv_bytes = static_cast<double>(std::min(c.budget, n)) * c.bytes_per_token_per_layer * layers;
      break;
    }
    case Schedule::cross_layer: {
      r.predict_ms = c.predict_ms(n);
      r.transfer_ms = c.sparse_transfer_ms(n);
      r.total_ms = replay_layerwise(c.num_layers, c.per_layer_compute_ms, r.predict_ms / layers,
                                    r.transfer_ms / layers);
      r.resident_kv_bytes = static_cast<double>(std::min(c.budget, n)) * c.bytes_per_token_per_layer * layers;
      break;
    }
    case Schedule::full_offload: {
      const double x = c.full_layer_transfer_ms(n);
      r.transfer_ms = x * layers;
      r.total_ms = replay_layerwise(c.num_layers, c.per_layer_compute_ms, 0.0, x);
      // Current layer plus the one being staged.
      r.resident_kv_bytes = 2.0 * static_cast<double>(n) * c.bytes_per_token_per_layer;
      break;
    }
  }
  r.wait_ms = std::max(0.0, r.total_ms - r.predict_ms - r.transfer_ms);
  r.stall_ms = std::max(0.0, r.total_ms - compute);
  if (schedule == Schedule::full_offload) {
    r.full_offload_ms = r.total_ms;
  } else {
    r.full_offload_ms =
        replay_layerwise(c.num_layers, c.per_layer_compute_ms, 0.0, c.full_layer_transfer_ms(n));
  }
  r.speedup = r.full_offload_ms / r.total_ms;
  return r;
}

SimReport simulate(const SimConfig& config) {
  config.validate();
  SimReport report;
  report.schedule = config.schedule;
  for (auto n : config.context_lengths) report.rows.push_back(simulate_point(config, config.schedule, n));
  return report;
}

double AffineFit::max_abs_residual() const {
  double m = 0.0;
  for (double r : residuals) m = std::max(m, std::abs(r));
  return m;
}

AffineFit fit_affine(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ParameterError("fit needs equal-length x and y");
  if (x.size() < 2) throw ParameterError("fit needs at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw ParameterError("fit is degenerate: all x values coincide");
  AffineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  for (std::size_t i = 0; i < x.size(); ++i) f.residuals.push_back(y[i] - (f.intercept + f.slope * x[i]));
  return f;
}

BreakdownTable reference_breakdown() {
  return {{4000, 8000, 16000, 32000}, {0.7, 1.2, 2.3, 4.5}, {2.3, 3.9, 7.6, 13.2}, {47.3, 48.6, 49.6, 50.0}};
}

FitResult fit_parameters(const BreakdownTable& table, SimConfig base) {
  const std::size_t n = table.contexts.size();
  if (table.predict_ms.size() != n || table.transfer_ms.size() != n) {
    throw ParameterError("breakdown table columns differ in length");
  }
  std::vector<double> x(table.contexts.begin(), table.contexts.end());
  FitResult out;
  out.predict = fit_affine(x, table.predict_ms);
  out.transfer = fit_affine(x, table.transfer_ms);
  out.config = base;
  out.config.predict_intercept_ms = out.predict.intercept;
  out.config.predict_per_token_ms = out.predict.slope;
  out.config.transfer_fixed_overhead_ms = out.transfer.intercept;
  out.config.transfer_per_token_ms = out.transfer.slope;
  out.config.context_lengths = table.contexts;
  return out;
}

void write_sim_csv(std::span<const SimReport> reports, std::ostream& out) {
  out << "schedule,context,predict_ms,transfer_ms,wait_ms,stall_ms,total_ms,full_offload_ms,speedup,"
         "resident_kv_bytes,full_kv_bytes\n";
  const auto old = out.precision(6);
  out << std::fixed;
  for (const auto& rep : reports) {
    for (const auto& r : rep.rows) {
      out << schedule_name(rep.schedule) << ',' << r.context << ',' << r.predict_ms << ',' << r.transfer_ms
          << ',' << r.wait_ms << ',' << r.stall_ms << ',' << r.total_ms << ',' << r.full_offload_ms << ','
          << r.speedup << ',' << std::setprecision(0) << r.resident_kv_bytes << ',' << r.full_kv_bytes
          << std::setprecision(6) << '\n';
    }
  }
  out.unsetf(std::ios::floatfield);
  out.precision(old);
}

void write_plot_data(std::span<const SimReport> reports, std::ostream& out) {
  out << "# context";
  for (const auto& rep : reports) out << ' ' << schedule_name(rep.schedule);
  out << '\n';
  if (reports.empty()) return;
  const std::size_t rows = reports.front().rows.size();
  for (const auto& rep : reports) {
    if (rep.rows.size() != rows) throw ParameterError("reports cover different context lists");
  }
  const auto old = out.precision(6);
  out << std::fixed;
  for (std::size_t i = 0; i < rows; ++i) {
    out << reports.front().rows[i].context;
    for (const auto& rep : reports) out << ' ' << rep.rows[i].total_ms;
    out << '\n';
  }
  out.unsetf(std::ios::floatfield);
  out.precision(old);
}

}  // namespace attnpred
