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

// attnpred command-line driver: synth, train, eval, sweep, sim, import.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "attnpred/baselines.hpp"
#include "attnpred/error.hpp"
#include "attnpred/eval.hpp"
#include "attnpred/kvconfig.hpp"
#include "attnpred/predictor.hpp"
#include "attnpred/prefetchsim.hpp"
#include "attnpred/synth.hpp"
#include "attnpred/trace.hpp"

namespace fs = std::filesystem;
using namespace attnpred;

namespace {

constexpr const char* kToolVersion = "0.1.0";
constexpr const char* kOutDirEnv = "ATTNPRED_OUT_DIR";

enum Exit { kOk = 0, kUsage = 2, kData = 3, kNumeric = 4 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ATTNPRED_OUT_DIR, when set, redirects every output into that directory.
fs::path output_path(const fs::path& requested) {
  fs::path p = requested;
  if (const char* dir = std::getenv(kOutDirEnv); dir && *dir) p = fs::path(dir) / requested.filename();
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  return p;
}

struct Manifest {
  std::string command;
  std::string config_path;
  std::uint64_t rng_seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  nlohmann::json extra = nlohmann::json::object();

  void write(const fs::path& beside) const {
    nlohmann::json j;
    j["command"] = command;
    j["config_path"] = config_path;
    j["rng_seed"] = rng_seed;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["tool_version"] = kToolVersion;
    if (!extra.empty()) j["parameters"] = extra;
    const fs::path path = beside.string() + ".manifest.json";
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
  }
};

KvConfig load_config(const std::string& path) {
  if (path.empty()) return KvConfig{};
  return KvConfig::load(path);
}

void require_files(const std::vector<std::string>& paths) {
  for (const auto& p : paths) {
    if (!fs::is_regular_file(p)) throw IoError("no such file: " + p);
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::vector<Method> parse_methods(const std::vector<std::string>& names) {
  std::vector<Method> out;
  for (const auto& n : names) out.push_back(parse_method(n));
  return out;
}

std::string trace_id(const std::string& path) { return fs::path(path).stem().string(); }

template <class T>
void override_if(const CLI::Option* opt, KvConfig& cfg, const std::string& key, const T& value) {
  if (opt->count() == 0) return;
  std::ostringstream os;
  if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
    for (std::size_t i = 0; i < value.size(); ++i) os << (i ? "," : "") << value[i];
  } else if constexpr (std::is_same_v<T, bool>) {
    os << (value ? "true" : "false");
  } else {
    os.precision(17);
    os << value;
  }
  cfg.set(key, os.str());
}

std::size_t get_size(const KvConfig& cfg, const std::string& key, std::size_t fallback) {
  const auto v = cfg.get_int(key, static_cast<std::int64_t>(fallback));
  if (v < 0) throw ConfigError("key '" + key + "': must be non-negative");
  return static_cast<std::size_t>(v);
}

std::vector<std::size_t> get_sizes(const KvConfig& cfg, const std::string& key) {
  std::vector<std::size_t> out;
  for (auto v : cfg.get_int_list(key, {})) {
    if (v < 1) throw ConfigError("key '" + key + "': values must be >= 1");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

EvalConfig eval_config_from(const KvConfig& cfg) {
  EvalConfig e;
  e.selector = SelectorConfig::from_config(cfg, e.selector);
  e.budget_ratio = cfg.get_double("budget_ratio", e.budget_ratio);
  e.sparse_feedback = cfg.get_bool("sparse_feedback", e.sparse_feedback);
  e.h2o_window = get_size(cfg, "h2o_window", e.h2o_window);
  e.snapkv_window = get_size(cfg, "snapkv_window", e.snapkv_window);
  e.skip_layers = get_size(cfg, "skip_layers", e.skip_layers);
  return e;
}

const std::set<std::string>& eval_keys() {
  static const std::set<std::string> keys = [] {
    std::set<std::string> k = SelectorConfig::known_keys();
    k.insert({"budget_ratio", "sparse_feedback", "h2o_window", "snapkv_window", "skip_layers", "methods",
              "weights"});
    return k;
  }();
  return keys;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string config, out;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

int cmd_synth(const SynthArgs& a) {
  KvConfig cfg = load_config(a.config);
  override_if(a.seed_opt, cfg, "rng_seed", a.seed);
  const SynthConfig sc = SynthConfig::from_config(cfg);
  const auto trace = gen_trace(sc);
  const fs::path out = output_path(a.out);
  save_trace(trace, out);
  Manifest m{"synth", a.config, sc.rng_seed, {}, {out.string()}};
  m.write(out);
  std::cout << "wrote " << out.string() << '\n';
  return kOk;
}

struct TrainArgs {
  std::string config, out, metrics;
  std::vector<std::string> traces;
  std::size_t history = 64, block_size = 16;
  double sample_ratio = 0.03, learning_rate = 1e-3;
  int epochs = 30;
  std::uint64_t seed = 0;
  CLI::Option *history_opt, *block_opt, *ratio_opt, *epochs_opt, *seed_opt, *lr_opt;
};

int cmd_train(const TrainArgs& a) {
  require_files(a.traces);
  KvConfig cfg = load_config(a.config);
  cfg.require_known({"history", "block_size", "sample_ratio", "epochs", "rng_seed", "learning_rate",
                     "batch_size", "holdout_fraction"});
  override_if(a.history_opt, cfg, "history", a.history);
  override_if(a.block_opt, cfg, "block_size", a.block_size);
  override_if(a.ratio_opt, cfg, "sample_ratio", a.sample_ratio);
  override_if(a.epochs_opt, cfg, "epochs", a.epochs);
  override_if(a.seed_opt, cfg, "rng_seed", a.seed);
  override_if(a.lr_opt, cfg, "learning_rate", a.learning_rate);

  DatasetConfig dc;
  dc.history = get_size(cfg, "history", 64);
  dc.block_size = get_size(cfg, "block_size", 16);
  dc.sample_ratio = cfg.get_double("sample_ratio", 0.03);
  dc.rng_seed = cfg.get_u64("rng_seed", 0);
  TrainConfig tc;
  tc.epochs = static_cast<int>(cfg.get_int("epochs", 30));
  tc.learning_rate = cfg.get_double("learning_rate", tc.learning_rate);
  tc.batch_size = get_size(cfg, "batch_size", tc.batch_size);
  tc.holdout_fraction = cfg.get_double("holdout_fraction", tc.holdout_fraction);
  tc.rng_seed = dc.rng_seed;
  if (tc.epochs < 1) throw ParameterError("epochs must be >= 1");

  std::vector<TrainSample> samples;
  for (const auto& p : a.traces) {
    const auto trace = load_trace(p);
    auto s = build_dataset(trace, dc);
    samples.insert(samples.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
  }
  const auto result = train(samples, tc);

  const fs::path out = output_path(a.out);
  const fs::path metrics = output_path(a.metrics.empty() ? out.string() + ".metrics.csv" : a.metrics);
  save_weights(result.weights, out);
  write_metrics_csv(result.metrics, metrics);
  Manifest m{"train", a.config, dc.rng_seed, a.traces, {out.string(), metrics.string()}};
  m.extra = {{"history", dc.history},       {"block_size", dc.block_size}, {"sample_ratio", dc.sample_ratio},
             {"epochs", tc.epochs},          {"samples", samples.size()},   {"best_epoch", result.best_epoch}};
  m.write(out);
  std::cout << "trained on " << samples.size() << " samples; best epoch " << result.best_epoch << " ("
            << result.metrics[static_cast<std::size_t>(result.best_epoch - 1)].holdout_accuracy
            << "% held-out recovery)\n";
  return kOk;
}

struct EvalArgs {
  std::string config, out, weights, methods;
  std::vector<std::string> traces;
  std::size_t budget = 0, calibration = 0, block_size = 0, history = 0, sink = 0, local = 0;
  double budget_ratio = 0.0;
  CLI::Option *budget_opt, *ratio_opt, *calib_opt, *block_opt, *history_opt, *sink_opt, *local_opt,
      *methods_opt, *weights_opt;
};

int cmd_eval(const EvalArgs& a) {
  KvConfig cfg = load_config(a.config);
  cfg.require_known(eval_keys());
  override_if(a.budget_opt, cfg, "budget", a.budget);
  override_if(a.ratio_opt, cfg, "budget_ratio", a.budget_ratio);
  override_if(a.calib_opt, cfg, "calibration_period", a.calibration);
  override_if(a.block_opt, cfg, "block_size", a.block_size);
  override_if(a.history_opt, cfg, "history", a.history);
  override_if(a.sink_opt, cfg, "sink_tokens", a.sink);
  override_if(a.local_opt, cfg, "local_tokens", a.local);
  if (a.methods_opt->count()) cfg.set("methods", a.methods);
  if (a.weights_opt->count()) cfg.set("weights", a.weights);

  const auto methods = parse_methods(split_list(cfg.get_string("methods", "oracle")));
  if (methods.empty()) throw UsageError("no methods given");
  const std::string weights_path = cfg.get_string("weights", "");
  const bool wants_predictor = std::find(methods.begin(), methods.end(), Method::attnpredictor) != methods.end();
  if (wants_predictor && weights_path.empty()) throw UsageError("attnpredictor requires --weights");
  require_files(a.traces);
  if (!weights_path.empty()) require_files({weights_path});

  const EvalConfig ec = eval_config_from(cfg);
  std::optional<PredictorWeights> weights;
  if (!weights_path.empty()) weights = load_weights(weights_path);

  std::vector<SweepRow> rows;
  for (const auto& p : a.traces) {
    const auto trace = load_trace(p);
    const auto report = evaluate(trace, methods, ec, weights ? &*weights : nullptr, trace_id(p));
    for (const auto& r : report.results) {
      SweepRow row;
      row.trace = report.trace_id;
      row.method = method_name(r.method);
      row.history = ec.selector.history;
      row.calibration_period = ec.selector.calibration_period;
      row.block_size = ec.selector.block_size;
      row.budget = report.budget;
      row.accuracy_pct = r.accuracy_pct;
      rows.push_back(std::move(row));
    }
  }
  std::sort(rows.begin(), rows.end());
  const fs::path out = output_path(a.out);
  std::ofstream os(out, std::ios::trunc);
  if (!os) throw IoError("cannot write " + out.string());
  write_sweep_csv(rows, os);
  os.close();
  auto inputs = a.traces;
  if (!weights_path.empty()) inputs.push_back(weights_path);
  Manifest m{"eval", a.config, 0, inputs, {out.string()}};
  m.write(out);
  std::cout << "wrote " << rows.size() << " rows to " << out.string() << '\n';
  return kOk;
}

struct SweepArgs {
  std::string config, out, weights;
  std::vector<std::string> traces;
};

int cmd_sweep(const SweepArgs& a) {
  KvConfig cfg = load_config(a.config);
  auto keys = eval_keys();
  keys.insert("budgets");
  cfg.require_known(keys);
  if (!a.weights.empty()) cfg.set("weights", a.weights);

  SweepGrid grid;
  grid.base = eval_config_from(cfg);
  grid.history = get_sizes(cfg, "history");
  grid.calibration_period = get_sizes(cfg, "calibration_period");
  grid.block_size = get_sizes(cfg, "block_size");
  grid.budget = get_sizes(cfg, cfg.has("budgets") ? "budgets" : "budget");
  grid.methods = parse_methods(split_list(cfg.get_string("methods", "")));
  if (grid.cells_per_trace() == 0) {
    throw UsageError("sweep grid is empty: history, calibration_period, block_size, budget and methods "
                     "all need at least one value");
  }
  if (a.traces.empty()) throw UsageError("sweep needs at least one --trace");
  require_files(a.traces);
  const std::string weights_path = cfg.get_string("weights", "");
  if (!weights_path.empty()) require_files({weights_path});

  std::vector<AttentionTrace> loaded;
  std::vector<SweepTrace> inputs;
  loaded.reserve(a.traces.size());
  for (const auto& p : a.traces) loaded.push_back(load_trace(p));
  for (std::size_t i = 0; i < a.traces.size(); ++i) inputs.push_back({trace_id(a.traces[i]), &loaded[i]});

  std::optional<PredictorWeights> weights;
  if (!weights_path.empty()) weights = load_weights(weights_path);
  WeightsProvider provider = [&](std::size_t, std::size_t) -> const PredictorWeights& {
    if (!weights) throw ParameterError("attnpredictor requires weights");
    return *weights;
  };
  const auto rows = sweep(inputs, grid, provider);

  const fs::path out = output_path(a.out);
  std::ofstream os(out, std::ios::trunc);
  if (!os) throw IoError("cannot write " + out.string());
  write_sweep_csv(rows, os);
  os.close();
  auto in = a.traces;
  if (!weights_path.empty()) in.push_back(weights_path);
  Manifest m{"sweep", a.config, 0, in, {out.string()}};
  std::size_t failed = 0;
  for (const auto& r : rows) {
    if (r.failed) {
      ++failed;
      std::cerr << "cell failed: " << r.trace << ' ' << r.method << " H=" << r.history
                << " M=" << r.calibration_period << " b=" << r.block_size << " B=" << r.budget << ": "
                << r.error << '\n';
    }
  }
  m.extra = {{"cells", rows.size()}, {"failed_cells", failed}};
  m.write(out);
  std::cout << "wrote " << rows.size() << " rows to " << out.string() << " (" << failed << " failed)\n";
  return failed ? kData : kOk;
}

struct SimArgs {
  std::string config, out, plot, schedule = "all";
};

int cmd_sim(const SimArgs& a) {
  const KvConfig cfg = load_config(a.config);
  SimConfig base = fit_parameters(reference_breakdown()).config;
  base = SimConfig::from_config(cfg, base);
  std::vector<Schedule> schedules;
  if (a.schedule == "all") {
    schedules = {Schedule::cross_token, Schedule::cross_layer, Schedule::full_offload};
  } else {
    schedules = {parse_schedule(a.schedule)};
  }
  std::vector<SimReport> reports;
  for (auto s : schedules) {
    SimConfig c = base;
    c.schedule = s;
    reports.push_back(simulate(c));
  }
  const fs::path out = output_path(a.out);
  const fs::path plot = output_path(a.plot.empty() ? out.string() + ".dat" : a.plot);
  {
    std::ofstream os(out, std::ios::trunc);
    if (!os) throw IoError("cannot write " + out.string());
    write_sim_csv(reports, os);
  }
  {
    std::ofstream os(plot, std::ios::trunc);
    if (!os) throw IoError("cannot write " + plot.string());
    write_plot_data(reports, os);
  }
  Manifest m{"sim", a.config, 0, {}, {out.string(), plot.string()}};
  m.extra = {{"num_layers", base.num_layers},
             {"compute_ms", base.compute_ms()},
             {"predict_intercept_ms", base.predict_intercept_ms},
             {"predict_per_token_ms", base.predict_per_token_ms},
             {"transfer_fixed_overhead_ms", base.transfer_fixed_overhead_ms},
             {"transfer_per_token_ms", base.transfer_per_token_ms},
             {"pcie_bandwidth", base.pcie_bandwidth}};
  m.write(out);
  for (const auto& rep : reports) {
    for (const auto& r : rep.rows) {
      std::cout << schedule_name(rep.schedule) << " n=" << r.context << " total=" << r.total_ms
                << " ms speedup=" << r.speedup << '\n';
    }
  }
  return kOk;
}

int cmd_import(const std::vector<std::string>& traces) {
  require_files(traces);
  for (const auto& p : traces) {
    const auto t = load_trace(p);
    std::cout << p << ": ok, " << t.num_layers() << " layers x " << t.num_heads() << " heads, prefill "
              << t.prefill_len() << ", " << t.num_decode_steps() << " decode steps"
              << (t.has_qk() ? ", q/k head_dim " + std::to_string(t.head_dim()) : std::string()) << '\n';
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attnpred: attention-prediction toolkit for KV-cache critical-token selection"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "generate a synthetic .att1 trace");
  synth->add_option("--config,-c", sa.config, "flat key = value config file");
  synth->add_option("--out,-o", sa.out, "output trace path")->required();
  sa.seed_opt = synth->add_option("--seed", sa.seed, "rng seed (overrides rng_seed)");

  TrainArgs ta;
  auto* trn = app.add_subcommand("train", "train the predictor on .att1 traces");
  trn->add_option("--config,-c", ta.config, "flat key = value config file");
  trn->add_option("--trace,-t", ta.traces, "input traces")->required();
  trn->add_option("--out,-o", ta.out, "output weights (APW1)")->required();
  trn->add_option("--metrics", ta.metrics, "metrics CSV (default: <out>.metrics.csv)");
  ta.history_opt = trn->add_option("--history,-H", ta.history, "history steps H");
  ta.block_opt = trn->add_option("--block-size,-b", ta.block_size, "block size b");
  ta.ratio_opt = trn->add_option("--sample-ratio", ta.sample_ratio, "fraction of candidates kept");
  ta.epochs_opt = trn->add_option("--epochs", ta.epochs, "training epochs");
  ta.seed_opt = trn->add_option("--seed", ta.seed, "rng seed");
  ta.lr_opt = trn->add_option("--learning-rate", ta.learning_rate, "Adam step size");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "score selection methods on traces");
  ev->add_option("--config,-c", ea.config, "flat key = value config file");
  ev->add_option("--trace,-t", ea.traces, "input traces")->required();
  ev->add_option("--out,-o", ea.out, "output CSV")->required();
  ea.weights_opt = ev->add_option("--weights,-w", ea.weights, "predictor weights");
  ea.methods_opt = ev->add_option("--methods,-m", ea.methods, "comma-separated method names");
  ea.budget_opt = ev->add_option("--budget,-B", ea.budget, "token budget B");
  ea.ratio_opt = ev->add_option("--budget-ratio", ea.budget_ratio, "budget as a fraction of prefill length");
  ea.calib_opt = ev->add_option("--calibration,-M", ea.calibration, "calibration period M");
  ea.block_opt = ev->add_option("--block-size,-b", ea.block_size, "block size b");
  ea.history_opt = ev->add_option("--history,-H", ea.history, "history steps H");
  ea.sink_opt = ev->add_option("--sink", ea.sink, "sink tokens");
  ea.local_opt = ev->add_option("--local", ea.local, "local tokens");

  SweepArgs wa;
  auto* sw = app.add_subcommand("sweep", "grid evaluation over H, M, b, B");
  sw->add_option("--config,-c", wa.config, "grid config file")->required();
  sw->add_option("--trace,-t", wa.traces, "input traces");
  sw->add_option("--out,-o", wa.out, "output CSV")->required();
  sw->add_option("--weights,-w", wa.weights, "predictor weights");

  SimArgs ma;
  auto* sim = app.add_subcommand("sim", "prefetch latency simulation");
  sim->add_option("--config,-c", ma.config, "simulator config file");
  sim->add_option("--out,-o", ma.out, "output CSV")->required();
  sim->add_option("--plot", ma.plot, "plot-data file (default: <out>.dat)");
  sim->add_option("--schedule", ma.schedule, "cross_token, cross_layer, full_offload or all");

  std::vector<std::string> import_traces;
  auto* imp = app.add_subcommand("import", "validate foreign .att1 files");
  imp->add_option("traces", import_traces, "trace files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*synth) return cmd_synth(sa);
    if (*trn) return cmd_train(ta);
    if (*ev) return cmd_eval(ea);
    if (*sw) return cmd_sweep(wa);
    if (*sim) return cmd_sim(ma);
    if (*imp) return cmd_import(import_traces);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const ParameterError& e) {
    std::cerr << "parameter error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const TrainingError& e) {
    std::cerr << "training error (epoch " << e.epoch() << "): " << e.what() << '\n';
    return kNumeric;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
