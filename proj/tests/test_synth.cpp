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

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "attnpred/baselines.hpp"
#include "attnpred/error.hpp"
#include "attnpred/synth.hpp"

using namespace attnpred;

TEST_CASE("zero drift gives a constant query walk") {
  auto walk = gen_unit_walk(16, 50, 0.0, 3);
  CHECK(lag_autocorrelation(walk, 1) == 1.0);
  for (const auto& v : walk) CHECK(v == walk.front());
}

TEST_CASE("walk vectors are unit norm") {
  for (const auto& v : gen_unit_walk(8, 100, 0.4, 1)) {
    double n = 0;
    for (double x : v) n += x * x;
    CHECK(std::abs(n - 1.0) < 1e-12);
  }
}

TEST_CASE("bisection hits lag-1 autocorrelation 0.87") {
  SynthConfig c;
  c.query_drift = calibrate_query_drift(0.87, c.head_dim, 2000, 17);
  c.rng_seed = 99;  // a different walk than the one used to calibrate
  auto rho = lag_autocorrelation(gen_query_sequence(c, 2000), 1);
  CHECK(std::abs(rho - 0.87) <= 0.02);
}

TEST_CASE("autocorrelation decays with lag for positive drift") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (double drift : {0.05, 0.2, 0.6}) {
      auto walk = gen_unit_walk(32, 400, drift, seed);
      CHECK(lag_autocorrelation(walk, 50) < lag_autocorrelation(walk, 1));
    }
  }
}

TEST_CASE("lag-1 autocorrelation falls as drift grows") {
  double prev = 1.0;
  for (double drift : {0.05, 0.1, 0.2, 0.4, 0.8}) {
    double rho = lag_autocorrelation(gen_unit_walk(32, 2000, drift, 4), 1);
    CHECK(rho < prev);
    prev = rho;
  }
}

TEST_CASE("rope score examples") {
  std::vector<double> e{1.0, 0.0};
  CHECK(rope_score(e, e, 3, 3, 10000.0) == 1.0);
  std::vector<double> theta{std::numbers::pi / 2};
  CHECK(std::abs(rope_score(e, e, 0, 1, theta)) < 1e-15);
  std::vector<double> odd{1.0, 0.0, 0.0};
  CHECK_THROWS_AS(rope_score(odd, odd, 0, 0, 10000.0), ParameterError);
}

TEST_CASE("rope score matches rotated dot products") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  auto thetas = rope_thetas(8, 10000.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> q(8), k(8);
    for (auto& x : q) x = g(rng);
    for (auto& x : k) x = g(rng);
    std::int64_t i = static_cast<std::int64_t>(rng() % 500), j = static_cast<std::int64_t>(rng() % 500);
    auto qr = q, kr = k;
    apply_rope(qr, i, thetas);
    apply_rope(kr, j, thetas);
    // The score of a query at i against a key at j, written with a rotation of k by (j - i).
    double direct = std::inner_product(qr.begin(), qr.end(), kr.begin(), 0.0);
    CHECK(rope_score(q, k, i, j, thetas) == doctest::Approx(direct).epsilon(1e-9));
  }
}

TEST_CASE("rope score depends only on relative position") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> q(16), k(16);
    for (auto& x : q) x = g(rng);
    for (auto& x : k) x = g(rng);
    std::int64_t i = static_cast<std::int64_t>(rng() % 1000);
    std::int64_t j = i + static_cast<std::int64_t>(rng() % 1000);
    double a = rope_score(q, k, i, j, 10000.0);
    CHECK(std::abs(a - rope_score(q, k, i + 5, j + 5, 10000.0)) <= 1e-9);
  }
}

namespace {
SynthConfig small_config() {
  SynthConfig c;
  c.head_dim = 16;
  c.prefill_len = 128;
  c.decode_steps = 48;
  c.history_rows = 8;
  c.num_heads = 2;
  c.rng_seed = 21;
  return c;
}

std::size_t argmax(std::span<const float> r) {
  return static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
}
}  // namespace

TEST_CASE("generated rows sum to one and the trace validates") {
  auto c = small_config();
  c.seasonal_period = 4;
  c.reaccess_positions = {3, 50};
  c.logit_noise = 0.5;
  auto t = gen_trace(c);
  CHECK(t.has_qk());
  CHECK(t.first_step() == -7);
  t.validate();
  for (std::uint32_t h = 0; h < t.num_heads(); ++h)
    for (std::int32_t s = t.first_step(); s <= t.last_step(); ++s) {
      auto r = t.row(0, h, s);
      double sum = std::accumulate(r.begin(), r.end(), 0.0);
      CHECK(std::abs(sum - 1.0) <= 1e-5);
    }
}

TEST_CASE("gen_trace is deterministic in the seed") {
  auto c = small_config();
  c.seasonal_period = 3;
  c.logit_noise = 0.3;
  CHECK(gen_trace(c) == gen_trace(c));
  auto d = c;
  d.rng_seed = 22;
  CHECK_FALSE(gen_trace(c) == gen_trace(d));
}

TEST_CASE("re-accessed position stays in the oracle top-16") {
  auto c = small_config();
  c.num_heads = 4;
  c.reaccess_positions = {7};
  int hits = 0, total = 0;
  auto t = gen_trace(c);
  for (std::uint32_t h = 0; h < t.num_heads(); ++h)
    for (std::int32_t s = 1; s <= t.last_step(); ++s) {
      auto top = select_oracle(t.row(0, h, s), 16);
      hits += std::binary_search(top.begin(), top.end(), 7u);
      ++total;
    }
  CHECK(hits > 0.9 * total);
}

TEST_CASE("seasonal columns peak at the period lag") {
  auto c = small_config();
  c.num_heads = 1;
  c.decode_steps = 120;
  c.seasonal_period = 6;
  auto t = gen_trace(c);
  for (auto col : seasonal_columns(c)) {
    std::vector<double> x;
    for (std::int32_t s = 0; s <= t.last_step(); ++s) x.push_back(t.row(0, 0, s)[col]);
    double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    for (auto& v : x) v -= mean;
    auto acf = [&](std::size_t lag) {
      double num = 0, den = 0;
      for (std::size_t i = 0; i < x.size(); ++i) den += x[i] * x[i];
      for (std::size_t i = 0; i + lag < x.size(); ++i) num += x[i] * x[i + lag];
      return num / den;
    };
    std::size_t best = 1;
    for (std::size_t lag = 2; lag <= 10; ++lag)
      if (acf(lag) > acf(best)) best = lag;
    CHECK(best == 6);
  }
}

TEST_CASE("aligned keys without boosts give a diagonal argmax") {
  auto c = small_config();
  c.num_heads = 4;
  c.qk_alignment = 1.0;
  auto t = gen_trace(c);
  int near = 0, total = 0;
  for (std::uint32_t h = 0; h < t.num_heads(); ++h)
    for (std::int32_t s = 0; s <= t.last_step(); ++s) {
      auto r = t.row(0, h, s);
      std::size_t q = r.size() - 1;
      near += argmax(r) + 8 >= q;
      ++total;
    }
  CHECK(near >= 0.8 * total);
}

TEST_CASE("drift bound holds on generated traces") {
  auto c = small_config();
  c.query_drift = 0.5;
  c.seasonal_period = 2;
  auto r = drift_bound_check(gen_trace(c));
  CHECK(r.pairs_checked == 2 * (48 + 7));
  CHECK(r.violations == 0);
  CHECK(r.max_ratio <= 1.0);
  CHECK(r.max_ratio > 0.0);
}

namespace {
AttentionTrace two_step_trace(std::uint32_t prefill, std::uint32_t d) {
  TraceHeader h;
  h.num_layers = 1;
  h.num_heads = 1;
  h.prefill_len = prefill;
  h.num_decode_steps = 1;
  h.has_qk = true;
  h.head_dim = d;
  AttentionTrace t(h);
  for (std::int32_t s = 0; s <= 1; ++s) {
    auto r = t.row(0, 0, s);
    for (auto& v : r) v = 1.0f / static_cast<float>(r.size());
  }
  return t;
}
}  // namespace

TEST_CASE("unchanged query gives ratio zero") {
  auto t = two_step_trace(10, 4);
  std::mt19937_64 rng(2);
  std::normal_distribution<float> g;
  for (std::uint32_t p = 0; p < 11; ++p)
    for (auto& v : t.key(0, 0, p)) v = g(rng);
  for (std::uint32_t i = 0; i < 4; ++i) t.query(0, 0, 10)[i] = t.query(0, 0, 9)[i] = g(rng);
  auto r = drift_bound_check(t);
  CHECK(r.max_ratio == 0.0);
  CHECK(r.violations == 0);
}

TEST_CASE("query step along the top singular vector reaches the bound") {
  const std::uint32_t p = 40, d = 8;
  auto t = two_step_trace(p, d);
  std::mt19937_64 rng(4);
  std::normal_distribution<float> g;
  Eigen::MatrixXd k(p, d);
  for (std::uint32_t j = 0; j < p + 1; ++j)
    for (std::uint32_t i = 0; i < d; ++i) {
      t.key(0, 0, j)[i] = g(rng);
      if (j < p) k(j, i) = t.key(0, 0, j)[i];
    }
  // Power iteration on K^T K.
  Eigen::VectorXd v = Eigen::VectorXd::Ones(d);
  for (int it = 0; it < 500; ++it) v = (k.transpose() * (k * v)).normalized();
  for (std::uint32_t i = 0; i < d; ++i) {
    t.query(0, 0, p - 1)[i] = g(rng);
    t.query(0, 0, p)[i] = t.query(0, 0, p - 1)[i] + static_cast<float>(0.5 * v[i]);
  }
  auto r = drift_bound_check(t);
  CHECK(r.max_ratio >= 0.99);
  CHECK(r.max_ratio <= 1.0 + 1e-6);
}

TEST_CASE("drift check needs query and key tensors") {
  TraceHeader h;
  h.num_layers = 1;
  h.num_heads = 1;
  h.prefill_len = 2;
  AttentionTrace t(h);
  CHECK_THROWS_AS(drift_bound_check(t), UnsupportedError);
}

TEST_CASE("config validation and parsing") {
  std::istringstream in("head_dim = 32\nseasonal_period = 4\nreaccess_positions = 1,2\nlogit_noise = 0.5\n");
  auto c = SynthConfig::from_config(KvConfig::parse(in));
  CHECK(c.head_dim == 32);
  CHECK(c.seasonal_period == 4);
  CHECK(c.reaccess_positions == std::vector<std::uint32_t>{1, 2});
  CHECK(c.logit_noise == 0.5);

  SynthConfig bad;
  bad.head_dim = 7;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.seasonal_period = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.query_drift = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.reaccess_positions = {bad.prefill_len + bad.decode_steps};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
