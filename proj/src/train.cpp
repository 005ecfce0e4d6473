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

// Dataset packaging, Adam training loop and checkpoint files for the predictor.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "attnpred/compress.hpp"
#include "attnpred/error.hpp"
#include "attnpred/predictor.hpp"
#include "attnpred/selector.hpp"
#include "byteio.hpp"

namespace attnpred {

namespace {
constexpr std::array<char, 4> kWeightsMagic{'A', 'P', 'W', '1'};
}

AttentionHistory history_at(const AttentionTrace& trace, std::uint32_t layer, std::uint32_t head,
                            std::int32_t step, std::size_t history, std::size_t block_size) {
  if (history < 1) throw ParameterError("history length must be >= 1");
  if (block_size < 1) throw ParameterError("block size must be >= 1");
  const std::size_t width = num_blocks(trace.header().row_length(step), block_size);
  AttentionHistory hist(history, width);
  for (std::size_t i = 0; i < history; ++i) {
    const std::int32_t s = step - static_cast<std::int32_t>(history - 1 - i);
    if (s < trace.first_step()) continue;
    auto r = trace.row(layer, head, s);
    auto dst = hist.row(i).first(num_blocks(r.size(), block_size));
    max_pool_into(r, block_size, dst);
  }
  return hist;
}

std::size_t count_candidates(const AttentionTrace& trace) {
  const std::size_t per_head = trace.num_decode_steps() > 0 ? trace.num_decode_steps() - 1 : 0;
  return std::size_t{trace.num_layers()} * trace.num_heads() * per_head;
}

std::vector<TrainSample> build_dataset(const AttentionTrace& trace, const DatasetConfig& config) {
  if (config.history < 1) throw ParameterError("history length H must be >= 1");
  if (config.block_size < 1) throw ParameterError("block size must be >= 1");
  if (!(config.sample_ratio > 0.0 && config.sample_ratio <= 1.0)) {
    throw ParameterError("sample_ratio must lie in (0, 1]");
  }
  if (trace.num_decode_steps() < 1) throw ParameterError("trace has no decode steps");

  struct Candidate {
    std::uint32_t layer, head;
    std::int32_t step;
  };
  std::vector<Candidate> all;
  all.reserve(count_candidates(trace));
  for (std::uint32_t l = 0; l < trace.num_layers(); ++l) {
    for (std::uint32_t h = 0; h < trace.num_heads(); ++h) {
      // Targets are decode rows 2..D; the input ends at decode step s >= 1.
      for (std::int32_t s = 1; s < trace.last_step(); ++s) all.push_back({l, h, s});
    }
  }
  std::vector<Candidate> kept;
  const auto want = std::max<std::size_t>(
      all.empty() ? 0 : 1,
      static_cast<std::size_t>(std::llround(config.sample_ratio * static_cast<double>(all.size()))));
  std::mt19937_64 rng(config.rng_seed);
  std::sample(all.begin(), all.end(), std::back_inserter(kept), want, rng);

  std::vector<TrainSample> out;
  out.reserve(kept.size());
  for (const auto& c : kept) {
    TrainSample sample;
    sample.input = history_at(trace, c.layer, c.head, c.step, config.history, config.block_size);
    const auto t = trace.header().row_length(c.step);
    auto next = trace.row(c.layer, c.head, c.step + 1).first(t);
    sample.target = max_pool(next, config.block_size).values;
    out.push_back(std::move(sample));
  }
  return out;
}

double holdout_accuracy(const PredictorWeights& weights, std::span<const TrainSample> samples,
                        double block_ratio) {
  if (samples.empty()) return 0.0;
  PredictorNet<float> net;
  net.set_weights(weights);
  double total = 0.0;
  std::size_t counted = 0;
  for (const auto& s : samples) {
    auto pred = net.forward(s.input);
    const std::size_t w = s.target.size();
    const std::size_t k = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::ceil(block_ratio * static_cast<double>(w))), 1, w);
    double got = 0.0, best = 0.0;
    for (auto i : topk(pred, k)) got += s.target[i];
    for (auto i : topk(s.target, k)) best += s.target[i];
    if (best <= 0.0) continue;
    total += got / best;
    ++counted;
  }
  return counted ? 100.0 * total / static_cast<double>(counted) : 0.0;
}

TrainResult train(std::span<const TrainSample> samples, const TrainConfig& config) {
  if (samples.empty()) throw ParameterError("no training samples");
  if (config.epochs < 1) throw ParameterError("epochs must be >= 1");
  if (config.batch_size < 1) throw ParameterError("batch size must be >= 1");
  if (!(config.learning_rate > 0.0)) throw ParameterError("learning rate must be positive");

  std::mt19937_64 rng(config.rng_seed);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_hold = static_cast<std::size_t>(
      std::llround(config.holdout_fraction * static_cast<double>(samples.size())));
  if (samples.size() >= 2) n_hold = std::clamp<std::size_t>(n_hold, 1, samples.size() - 1);
  else n_hold = 0;

  std::vector<TrainSample> holdout;
  for (std::size_t i = 0; i < n_hold; ++i) holdout.push_back(samples[order[i]]);
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_hold), order.end());
  std::span<const TrainSample> eval_set = holdout.empty() ? samples : std::span<const TrainSample>(holdout);

  TrainResult result;
  PredictorWeights w = PredictorWeights::random_init(rng());
  PredictorNet<float> net;
  std::vector<float> grad(cnn::kParamCount);
  std::vector<double> m(cnn::kParamCount, 0.0), v(cnn::kParamCount, 0.0);
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::uint64_t adam_t = 0;
  double best_acc = -1.0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < train_idx.size(); start += config.batch_size) {
      const std::size_t end = std::min(train_idx.size(), start + config.batch_size);
      net.set_weights(w);
      std::fill(grad.begin(), grad.end(), 0.0f);
      for (std::size_t i = start; i < end; ++i) {
        const auto& s = samples[train_idx[i]];
        net.forward(s.input);
        const double loss = net.backward(s.target, grad);
        if (!std::isfinite(loss)) {
          throw TrainingError("training loss became non-finite in epoch " + std::to_string(epoch),
                              epoch);
        }
        loss_sum += loss;
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      ++adam_t;
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(adam_t));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(adam_t));
      for (std::size_t p = 0; p < cnn::kParamCount; ++p) {
        const double g = grad[p] * scale;
        m[p] = beta1 * m[p] + (1.0 - beta1) * g;
        v[p] = beta2 * v[p] + (1.0 - beta2) * g * g;
        const double step = config.learning_rate * (m[p] / c1) / (std::sqrt(v[p] / c2) + eps);
        w.params[p] = static_cast<float>(w.params[p] - step);
      }
      for (float p : w.params) {
        if (!std::isfinite(p)) {
          throw TrainingError("weights diverged in epoch " + std::to_string(epoch), epoch);
        }
      }
    }
    EpochMetrics em;
    em.epoch = epoch;
    em.train_mse = loss_sum / static_cast<double>(std::max<std::size_t>(1, train_idx.size()));
    em.holdout_accuracy = holdout_accuracy(w, eval_set, config.holdout_block_ratio);
    result.metrics.push_back(em);
    if (em.holdout_accuracy > best_acc) {
      best_acc = em.holdout_accuracy;
      result.weights = w;
      result.best_epoch = epoch;
    }
  }
  return result;
}

void write_weights(const PredictorWeights& weights, std::ostream& out) {
  if (weights.params.size() != cnn::kParamCount) throw ParameterError("weight vector has the wrong size");
  out.write(kWeightsMagic.data(), kWeightsMagic.size());
  detail::put_f32s(out, weights.params);
  if (!out) throw IoError("failed writing weights");
}

PredictorWeights read_weights(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kWeightsMagic) {
    throw FormatError("not an APW1 weight checkpoint");
  }
  PredictorWeights w;
  if (!detail::get_f32s(in, w.params)) throw CorruptionError("truncated weight checkpoint");
  if (in.peek() != std::char_traits<char>::eof()) throw CorruptionError("trailing bytes after weights");
  for (float p : w.params) {
    if (!std::isfinite(p)) throw NumericError("non-finite value in weight checkpoint");
  }
  return w;
}

void save_weights(const PredictorWeights& weights, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_weights(weights, out);
}

PredictorWeights load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_weights(in);
}

void write_metrics_csv(std::span<const EpochMetrics> metrics, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "epoch,train_mse,holdout_accuracy\n";
  out.precision(9);
  for (const auto& m : metrics) out << m.epoch << ',' << m.train_mse << ',' << m.holdout_accuracy << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace attnpred
