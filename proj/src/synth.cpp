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

#include "attnpred/synth.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "attnpred/error.hpp"
#include "rng.hpp"

namespace attnpred {

void SynthConfig::validate() const {
  auto bad = [](const std::string& key, const std::string& why) {
    throw ConfigError("synth key '" + key + "': " + why);
  };
  if (head_dim == 0 || head_dim % 2 != 0) bad("head_dim", "must be a positive even number");
  if (prefill_len == 0) bad("prefill_len", "must be >= 1");
  if (decode_steps == 0) bad("decode_steps", "must be >= 1");
  if (!(query_drift >= 0.0 && query_drift <= 1.0)) bad("query_drift", "must lie in [0, 1]");
  if (!(key_drift >= 0.0 && key_drift <= 1.0)) bad("key_drift", "must lie in [0, 1]");
  if (!(rope_base > 0.0)) bad("rope_base", "must be positive");
  if (seasonal_period == 1) bad("seasonal_period", "must be 0 or >= 2");
  if (num_layers == 0) bad("num_layers", "must be >= 1");
  if (num_heads == 0) bad("num_heads", "must be >= 1");
  if (history_rows == 0 || history_rows > prefill_len) {
    bad("history_rows", "must lie in [1, prefill_len]");
  }
  if (!(qk_alignment >= 0.0 && qk_alignment <= 1.0)) bad("qk_alignment", "must lie in [0, 1]");
  if (boost_span == 0) bad("boost_span", "must be >= 1");
  if (!(logit_noise >= 0.0 && std::isfinite(logit_noise))) bad("logit_noise", "must be finite and >= 0");
  if (!std::isfinite(logit_scale)) bad("logit_scale", "must be finite");
  const std::uint32_t total = prefill_len + decode_steps;
  for (auto p : reaccess_positions) {
    if (p >= total) bad("reaccess_positions", "position " + std::to_string(p) + " beyond sequence");
  }
  for (auto p : seasonal_positions) {
    if (p >= total) bad("seasonal_positions", "position " + std::to_string(p) + " beyond sequence");
  }
}

const std::set<std::string>& SynthConfig::known_keys() {
  static const std::set<std::string> keys{
      "head_dim",       "prefill_len",        "decode_steps",    "query_drift",
      "key_drift",      "rope_base",          "seasonal_period", "reaccess_positions",
      "rng_seed",       "num_layers",         "num_heads",       "history_rows",
      "logit_scale",    "qk_alignment",       "reaccess_boost",  "seasonal_positions",
      "seasonal_boost", "diagonal_offset",    "diagonal_boost",  "boost_span",
      "logit_noise"};
  return keys;
}

SynthConfig SynthConfig::from_config(const KvConfig& cfg) {
  cfg.require_known(known_keys());
  SynthConfig c;
  auto u32 = [&](const std::string& key, std::uint32_t fallback) {
    const auto v = cfg.get_int(key, fallback);
    if (v < 0 || v > std::numeric_limits<std::uint32_t>::max()) {
      throw ConfigError("key '" + key + "': out of range");
    }
    return static_cast<std::uint32_t>(v);
  };
  auto u32_list = [&](const std::string& key) {
    std::vector<std::uint32_t> out;
    for (auto v : cfg.get_int_list(key, {})) {
      if (v < 0) throw ConfigError("key '" + key + "': negative position");
      out.push_back(static_cast<std::uint32_t>(v));
    }
    return out;
  };
  c.head_dim = u32("head_dim", c.head_dim);
  c.prefill_len = u32("prefill_len", c.prefill_len);
  c.decode_steps = u32("decode_steps", c.decode_steps);
  c.query_drift = cfg.get_double("query_drift", c.query_drift);
  c.key_drift = cfg.get_double("key_drift", c.key_drift);
  c.rope_base = cfg.get_double("rope_base", c.rope_base);
  c.seasonal_period = u32("seasonal_period", c.seasonal_period);
  c.reaccess_positions = u32_list("reaccess_positions");
  c.rng_seed = cfg.get_u64("rng_seed", c.rng_seed);
  c.num_layers = u32("num_layers", c.num_layers);
  c.num_heads = u32("num_heads", c.num_heads);
  c.history_rows = u32("history_rows", std::min(c.history_rows, c.prefill_len));
  c.logit_scale = cfg.get_double("logit_scale", c.logit_scale);
  c.qk_alignment = cfg.get_double("qk_alignment", c.qk_alignment);
  c.reaccess_boost = cfg.get_double("reaccess_boost", c.reaccess_boost);
  c.seasonal_positions = u32_list("seasonal_positions");
  c.seasonal_boost = cfg.get_double("seasonal_boost", c.seasonal_boost);
  c.diagonal_offset = u32("diagonal_offset", c.diagonal_offset);
  c.diagonal_boost = cfg.get_double("diagonal_boost", c.diagonal_boost);
  c.boost_span = u32("boost_span", c.boost_span);
  c.logit_noise = cfg.get_double("logit_noise", c.logit_noise);
  c.validate();
  return c;
}

namespace {

void normalize(std::vector<double>& v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n > 0.0) {
    for (double& x : v) x /= n;
  }
}

std::vector<double> random_unit(std::uint32_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(dim);
  for (double& x : v) x = normal(rng);
  normalize(v);
  return v;
}

}  // namespace

std::vector<std::vector<double>> gen_unit_walk(std::uint32_t dim, std::size_t count, double drift,
                                               std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<double>> seq;
  seq.reserve(count);
  if (count == 0) return seq;
  seq.push_back(random_unit(dim, rng));
  for (std::size_t t = 1; t < count; ++t) {
    auto g = random_unit(dim, rng);
    std::vector<double> next = seq.back();
    if (drift == 0.0) {
      seq.push_back(std::move(next));
      continue;
    }
    for (std::uint32_t i = 0; i < dim; ++i) next[i] += drift * g[i];
    normalize(next);
    seq.push_back(std::move(next));
  }
  return seq;
}

std::vector<std::vector<double>> gen_query_sequence(const SynthConfig& config, std::size_t count) {
  return gen_unit_walk(config.head_dim, count, config.query_drift,
                       detail::derive_seed(config.rng_seed, 0, 0, 1));
}

double lag_autocorrelation(const std::vector<std::vector<double>>& seq, std::size_t lag) {
  if (lag == 0 || seq.size() <= lag) throw ParameterError("lag must lie in [1, length)");
  double total = 0.0;
  for (std::size_t t = 0; t + lag < seq.size(); ++t) {
    const auto& a = seq[t];
    const auto& b = seq[t + lag];
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      dot += a[i] * b[i];
      na += a[i] * a[i];
      nb += b[i] * b[i];
    }
    total += dot / std::sqrt(na * nb);
  }
  return total / static_cast<double>(seq.size() - lag);
}

double calibrate_query_drift(double target_rho, std::uint32_t dim, std::size_t steps,
                             std::uint64_t seed) {
  if (!(target_rho > 0.0 && target_rho <= 1.0)) throw ParameterError("target must lie in (0, 1]");
  // Same seed for every probe.
  double lo = 0.0;
  double hi = 1.0;
  double mid = 0.5;
  for (int iter = 0; iter < 20; ++iter) {
    mid = 0.5 * (lo + hi);
    const double rho = lag_autocorrelation(gen_unit_walk(dim, steps, mid, seed), 1);
    if (std::abs(rho - target_rho) < 0.005) break;
    if (rho > target_rho) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return mid;
}

std::vector<double> rope_thetas(std::uint32_t dim, double base) {
  if (dim == 0 || dim % 2 != 0) throw ParameterError("RoPE needs an even dimension");
  std::vector<double> thetas(dim / 2);
  for (std::uint32_t m = 0; m < dim / 2; ++m) {
    thetas[m] = std::pow(base, -2.0 * static_cast<double>(m) / static_cast<double>(dim));
  }
  return thetas;
}

double rope_score(std::span<const double> q, std::span<const double> k, std::int64_t i,
                  std::int64_t j, std::span<const double> thetas) {
  if (q.size() != k.size() || q.size() % 2 != 0 || q.empty()) {
    throw ParameterError("rope_score needs equal even-length vectors");
  }
  if (thetas.size() != q.size() / 2) throw ParameterError("one theta per 2-D group required");
  const double rel = static_cast<double>(j - i);
  double score = 0.0;
  for (std::size_t m = 0; m < thetas.size(); ++m) {
    const double angle = rel * thetas[m];
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    const double k0 = k[2 * m];
    const double k1 = k[2 * m + 1];
    score += q[2 * m] * (c * k0 - s * k1) + q[2 * m + 1] * (s * k0 + c * k1);
  }
  return score;
}

double rope_score(std::span<const double> q, std::span<const double> k, std::int64_t i,
                  std::int64_t j, double rope_base) {
  if (q.size() % 2 != 0) throw ParameterError("rope_score needs an even dimension");
  return rope_score(q, k, i, j, rope_thetas(static_cast<std::uint32_t>(q.size()), rope_base));
}

void apply_rope(std::span<double> v, std::int64_t position, std::span<const double> thetas) {
  if (v.size() != 2 * thetas.size()) throw ParameterError("one theta per 2-D group required");
  for (std::size_t m = 0; m < thetas.size(); ++m) {
    const double angle = static_cast<double>(position) * thetas[m];
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    const double a = v[2 * m];
    const double b = v[2 * m + 1];
    v[2 * m] = c * a - s * b;
    v[2 * m + 1] = s * a + c * b;
  }
}

std::vector<std::uint32_t> seasonal_columns(const SynthConfig& config) {
  if (config.seasonal_period == 0) return {};
  if (!config.seasonal_positions.empty()) return config.seasonal_positions;
  std::mt19937_64 rng(detail::derive_seed(config.rng_seed, 0, 0, 7));
  std::uniform_int_distribution<std::uint32_t> pick(0, config.prefill_len - 1);
  std::vector<std::uint32_t> cols{pick(rng), pick(rng), pick(rng)};
  std::sort(cols.begin(), cols.end());
  return cols;
}

AttentionTrace gen_trace(const SynthConfig& config) {
  config.validate();
  TraceHeader header;
  header.num_layers = config.num_layers;
  header.num_heads = config.num_heads;
  header.prefill_len = config.prefill_len;
  header.num_decode_steps = config.decode_steps;
  header.has_qk = true;
  header.head_dim = config.head_dim;
  header.first_step_offset = -static_cast<std::int32_t>(config.history_rows - 1);
  AttentionTrace trace(header);

  const std::uint32_t d = config.head_dim;
  const std::uint32_t positions = header.num_positions();
  const auto thetas = rope_thetas(d, config.rope_base);
  const auto seasonal = seasonal_columns(config);
  const double align = config.qk_alignment;

  std::vector<double> logits;
  for (std::uint32_t l = 0; l < config.num_layers; ++l) {
    for (std::uint32_t h = 0; h < config.num_heads; ++h) {
      auto queries = gen_unit_walk(d, positions, config.query_drift,
                                   detail::derive_seed(config.rng_seed, l, h, 1));
      auto keys = gen_unit_walk(d, positions, config.key_drift,
                                detail::derive_seed(config.rng_seed, l, h, 2));
      if (align > 0.0) {
        for (std::uint32_t p = 0; p < positions; ++p) {
          for (std::uint32_t i = 0; i < d; ++i) {
            keys[p][i] = align * queries[p][i] + (1.0 - align) * keys[p][i];
          }
          normalize(keys[p]);
        }
      }
      for (std::uint32_t p = 0; p < positions; ++p) {
        apply_rope(queries[p], p, thetas);
        apply_rope(keys[p], p, thetas);
        auto qs = trace.query(l, h, p);
        auto ks = trace.key(l, h, p);
        for (std::uint32_t i = 0; i < d; ++i) {
          qs[i] = static_cast<float>(queries[p][i]);
          ks[i] = static_cast<float>(keys[p][i]);
        }
      }

      std::mt19937_64 noise_rng(detail::derive_seed(config.rng_seed, l, h, 3));
      std::normal_distribution<double> jitter(0.0, 1.0);
      for (std::int32_t s = trace.first_step(); s <= trace.last_step(); ++s) {
        const std::uint32_t len = header.row_length(s);
        const std::uint32_t qpos = len - 1;
        logits.assign(len, 0.0);
        const auto& q = queries[qpos];
        for (std::uint32_t j = 0; j < len; ++j) {
          double dot = 0.0;
          for (std::uint32_t i = 0; i < d; ++i) dot += q[i] * keys[j][i];
          logits[j] = config.logit_scale * dot;
        }
        if (config.logit_noise > 0.0) {
          for (double& x : logits) x += config.logit_noise * jitter(noise_rng);
        }
        auto boost = [&](std::uint32_t start, double amount) {
          for (std::uint32_t j = start; j < std::min(len, start + config.boost_span); ++j) {
            logits[j] += amount;
          }
        };
        for (auto r : config.reaccess_positions) boost(r, config.reaccess_boost);
        if (config.seasonal_period > 0) {
          const std::int32_t period = static_cast<std::int32_t>(config.seasonal_period);
          if (((s % period) + period) % period == 0) {
            for (auto c : seasonal) boost(c, config.seasonal_boost);
          }
        }
        if (config.diagonal_offset > 0 && qpos >= config.diagonal_offset) {
          boost(qpos - config.diagonal_offset, config.diagonal_boost);
        }
        const double mx = *std::max_element(logits.begin(), logits.end());
        double sum = 0.0;
        for (double& x : logits) {
          x = std::exp(x - mx);
          sum += x;
        }
        auto row = trace.row(l, h, s);
        for (std::uint32_t j = 0; j < len; ++j) row[j] = static_cast<float>(logits[j] / sum);
      }
    }
  }
  return trace;
}

DriftBoundResult drift_bound_check(const AttentionTrace& trace) {
  if (!trace.has_qk()) throw UnsupportedError("drift bound check needs query/key tensors");
  const std::uint32_t d = trace.head_dim();
  DriftBoundResult result;
  std::vector<double> dq(d);
  for (std::uint32_t l = 0; l < trace.num_layers(); ++l) {
    for (std::uint32_t h = 0; h < trace.num_heads(); ++h) {
      Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d, d);
      std::uint32_t keys_in_gram = 0;
      for (std::int32_t s = trace.first_step(); s < trace.last_step(); ++s) {
        // Scores of row s and the first t entries of row s + 1 share keys [0, t).
        const std::uint32_t t = trace.header().row_length(s);
        for (; keys_in_gram < t; ++keys_in_gram) {
          auto k = trace.key(l, h, keys_in_gram);
          Eigen::VectorXd kv(d);
          for (std::uint32_t i = 0; i < d; ++i) kv[i] = k[i];
          gram.noalias() += kv * kv.transpose();
        }
        auto q0 = trace.query(l, h, t - 1);
        auto q1 = trace.query(l, h, t);
        double dq_norm2 = 0.0;
        for (std::uint32_t i = 0; i < d; ++i) {
          dq[i] = static_cast<double>(q1[i]) - static_cast<double>(q0[i]);
          dq_norm2 += dq[i] * dq[i];
        }
        double da_norm2 = 0.0;
        for (std::uint32_t j = 0; j < t; ++j) {
          auto k = trace.key(l, h, j);
          double v = 0.0;
          for (std::uint32_t i = 0; i < d; ++i) v += dq[i] * static_cast<double>(k[i]);
          da_norm2 += v * v;
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
        const double sigma = std::sqrt(std::max(0.0, eig.eigenvalues().maxCoeff()));
        const double bound = std::sqrt(dq_norm2) * sigma;
        const double da = std::sqrt(da_norm2);
        ++result.pairs_checked;
        if (da > bound + 1e-6) ++result.violations;
        if (bound > 0.0) result.max_ratio = std::max(result.max_ratio, da / bound);
      }
    }
  }
  return result;
}

}  // namespace attnpred
