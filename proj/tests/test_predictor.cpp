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

#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <vector>

#include "attnpred/error.hpp"
#include "attnpred/predictor.hpp"
#include "support/reference_cnn.hpp"

using namespace attnpred;

namespace {
template <typename Real>
BasicHistory<Real> random_history(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  BasicHistory<Real> x(h, w);
  for (auto& v : x.grid) v = static_cast<Real>(u(rng));
  return x;
}

std::vector<double> as_double(const std::vector<float>& v) { return {v.begin(), v.end()}; }
}  // namespace

TEST_CASE("parameter count is 4833") {
  PredictorWeights w;
  CHECK(w.param_count() == 4833);
  CHECK(16 * (9 + 1) + 32 * (16 * 9 + 1) + (32 + 1) == 4833);
  CHECK(w.conv_b_weight().size() == 32 * 16 * 9);
}

TEST_CASE("zero history with zero biases gives zero output") {
  auto w = PredictorWeights::random_init(1);
  for (auto& b : w.conv_a_bias()) b = 0;
  for (auto& b : w.conv_b_bias()) b = 0;
  w.conv_1d_bias() = 0;
  AttentionHistory x(6, 9);
  auto y = forward(w, x);
  REQUIRE(y.size() == 9);
  for (float v : y) CHECK(v == 0.0f);
}

TEST_CASE("forward matches the loop oracle, including the mean over history") {
  std::mt19937_64 rng(2);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{1, 1}, {3, 7}, {8, 12}, {16, 40}}) {
    auto weights = PredictorWeights::random_init(h * 31 + w);
    auto x = random_history<float>(h, w, rng);
    auto y = forward(weights, x);
    auto expect = ref::forward(as_double(weights.params), as_double(x.grid), static_cast<int>(h),
                               static_cast<int>(w));
    REQUIRE(y.size() == w);
    for (std::size_t j = 0; j < w; ++j) CHECK(y[j] == doctest::Approx(expect.y[j]).epsilon(1e-4));
  }
}

TEST_CASE("one weight set serves every width") {
  auto weights = PredictorWeights::random_init(3);
  std::mt19937_64 rng(3);
  PredictorNet<float> net;
  net.set_weights(weights);
  for (std::size_t w : {10, 100, 1000}) {
    auto y = net.forward(random_history<float>(16, w, rng));
    CHECK(y.size() == w);
    for (float v : y) CHECK(std::isfinite(v));
  }
}

TEST_CASE("output at a column depends only on its neighbourhood") {
  // Two conv layers give a receptive field of 5 columns.
  auto weights = PredictorWeights::random_init(4);
  std::mt19937_64 rng(4);
  auto x = random_history<float>(5, 30, rng);
  auto y0 = forward(weights, x);
  for (std::size_t i = 0; i < 5; ++i) x.at(i, 0) += 1.0f;
  auto y1 = forward(weights, x);
  for (std::size_t j = 3; j < 30; ++j) CHECK(y0[j] == y1[j]);
}

TEST_CASE("target equal to the output gives zero gradient") {
  auto weights = BasicWeights<double>::random_init(5);
  std::mt19937_64 rng(5);
  auto x = random_history<double>(8, 12, rng);
  auto y = forward(weights, x);
  auto g = backward(weights, x, std::span<const double>(y));
  CHECK(g.loss == 0.0);
  for (double v : g.grad.params) CHECK(v == 0.0);
}

TEST_CASE("doubling the residual doubles the output bias gradient") {
  auto weights = BasicWeights<double>::random_init(6);
  std::mt19937_64 rng(6);
  auto x = random_history<double>(4, 10, rng);
  auto y = forward(weights, x);
  std::vector<double> t1(y.size()), t2(y.size());
  std::normal_distribution<double> g;
  for (std::size_t j = 0; j < y.size(); ++j) {
    double r = g(rng);
    t1[j] = y[j] - r;
    t2[j] = y[j] - 2 * r;
  }
  auto g1 = backward(weights, x, std::span<const double>(t1));
  auto g2 = backward(weights, x, std::span<const double>(t2));
  CHECK(g2.grad.conv_1d_bias() == doctest::Approx(2 * g1.grad.conv_1d_bias()).epsilon(1e-12));
  CHECK(g2.loss == doctest::Approx(4 * g1.loss).epsilon(1e-12));
}

TEST_CASE("analytic gradient matches central differences") {
  std::mt19937_64 rng(7);
  auto weights = BasicWeights<double>::random_init(7);
  const int h = 4, w = 6;
  auto x = random_history<double>(h, w, rng);
  ref::center_biases(weights.params, x.grid, h, w);
  std::vector<double> target(w);
  std::uniform_real_distribution<double> u(0, 1);
  for (auto& v : target) v = u(rng);
  auto g = backward(weights, x, std::span<const double>(target));
  auto fd = ref::numeric_gradient(weights.params, x.grid, h, w, target, 1e-3);
  int bad = 0;
  for (std::size_t i = 0; i < fd.size(); ++i) {
    double a = g.grad.params[i], n = fd[i];
    double rel = std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
    bad += rel > 1e-3;
  }
  CHECK(bad == 0);
}

TEST_CASE("float and double engines agree") {
  auto wf = PredictorWeights::random_init(8);
  BasicWeights<double> wd;
  wd.params.assign(wf.params.begin(), wf.params.end());
  std::mt19937_64 rng(8);
  auto xd = random_history<double>(6, 20, rng);
  AttentionHistory xf(6, 20);
  for (std::size_t i = 0; i < xd.grid.size(); ++i) xf.grid[i] = static_cast<float>(xd.grid[i]);
  auto yf = forward(wf, xf);
  auto yd = forward(wd, xd);
  for (std::size_t j = 0; j < yf.size(); ++j) CHECK(yf[j] == doctest::Approx(yd[j]).epsilon(1e-4));
}

TEST_CASE("non-finite inputs and weights are numeric errors") {
  auto weights = PredictorWeights::random_init(9);
  AttentionHistory x(2, 3);
  x.at(1, 1) = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(forward(weights, x), NumericError);
  weights.params[17] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(forward(weights, AttentionHistory(2, 3)), NumericError);
  PredictorNet<float> net;
  CHECK_THROWS_AS(net.forward(AttentionHistory(2, 3)), StateError);
}

TEST_CASE("random init respects fan-in bounds and is seeded") {
  auto a = PredictorWeights::random_init(10);
  CHECK(a == PredictorWeights::random_init(10));
  CHECK_FALSE(a == PredictorWeights::random_init(11));
  for (float v : a.conv_a_weight()) CHECK(std::abs(v) <= 1.0f / 3.0f);
  for (float v : a.conv_b_weight()) CHECK(std::abs(v) <= 1.0f / 12.0f);
}

TEST_CASE("weights round trip through the checkpoint format") {
  auto a = PredictorWeights::random_init(12);
  std::stringstream buf;
  write_weights(a, buf);
  CHECK(buf.str().size() == 4 + 4 * 4833);
  CHECK(read_weights(buf) == a);
  std::istringstream bad("NOPE");
  CHECK_THROWS_AS(read_weights(bad), FormatError);
  std::istringstream shortfile(std::string("APW1") + std::string(10, '\0'));
  CHECK_THROWS_AS(read_weights(shortfile), CorruptionError);
}
