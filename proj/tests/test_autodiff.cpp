// Copyright 2026 The vibkit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "gradcheck.hpp"
#include "vibkit/error.hpp"
#include "vibkit/nn.hpp"

using namespace vibkit;
using namespace vibkit::ad;
using T64 = Tensor<double>;

TEST_CASE("every op matches central differences") {
  for (const auto& r : gradcheck::check_all_ops()) {
    INFO(r.op << " max rel err " << r.max_rel_err);
    CHECK(r.cases >= 10);
    CHECK(r.max_rel_err < 1e-4);
  }
}

TEST_CASE("mse value and gradient") {
  auto a = T64::from({3}, {1, 2, 3});
  CHECK(mse(a, a.clone()).item() == 0.0);

  auto pred = T64::from({1}, {3.0}, true);
  auto target = T64::from({1}, {1.0});
  auto loss = mse(pred, target);
  CHECK(loss.item() == doctest::Approx(4.0));
  loss.backward();
  CHECK(pred.grad()[0] == doctest::Approx(4.0).epsilon(1e-12));
  const double eps = 1e-5;
  const double fd = (std::pow(3.0 + eps - 1.0, 2) - std::pow(3.0 - eps - 1.0, 2)) / (2 * eps);
  CHECK(pred.grad()[0] == doctest::Approx(fd).epsilon(1e-8));
}

TEST_CASE("relu values and subgradient at zero") {
  auto x = T64::from({3}, {-2.0, 5.0, 0.0}, true);
  auto y = relu(x);
  CHECK(y.values()[0] == 0.0);
  CHECK(y.values()[1] == 5.0);
  sum(y).backward();
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
  CHECK(x.grad()[2] == 0.0);
}

TEST_CASE("sum gives a gradient of ones") {
  auto x = T64::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  sum(x).backward();
  for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward contract") {
  auto x = T64::from({2}, {1.0, 2.0}, true);
  CHECK_THROWS_AS(mul(x, x).backward(), ShapeError);
  auto loss = sum(mul(x, x));
  loss.backward();
  CHECK(x.grad()[1] == 4.0);
  CHECK_THROWS_AS(loss.backward(), Error);
  // Accumulates across separate graphs.
  sum(x).backward();
  CHECK(x.grad()[1] == 5.0);
}

TEST_CASE("shape errors name both shapes") {
  auto a = T64::zeros({2, 3});
  auto b = T64::zeros({3, 2});
  try {
    add(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(2, 3)") != std::string::npos);
    CHECK(msg.find("(3, 2)") != std::string::npos);
  }
  CHECK_THROWS_AS(T64::from({2, 2}, {1.0}), ShapeError);
}

TEST_CASE("non-finite results abort") {
  auto x = T64::from({1}, {1e300});
  CHECK_THROWS_AS(mul(x, x), NonFiniteError);
}

TEST_CASE("gru with zero weights halves the state") {
  const std::size_t h = 4;
  auto x = T64::from({1, 1, 2}, {0.3, -0.7});
  auto h0 = T64::from({1, h}, {1.0, -2.0, 0.5, 3.0});
  auto out = gru(x, T64::zeros({3 * h, 2}), T64::zeros({3 * h, h}), T64::zeros({3 * h}),
                 T64::zeros({3 * h}), h0);
  CHECK(out.shape() == Shape{1, 1, h});
  for (std::size_t i = 0; i < h; ++i) CHECK(out.values()[i] == 0.5 * h0.values()[i]);
  CHECK_THROWS_AS(gru(T64::zeros({0, 1, 2}), T64::zeros({3 * h, 2}), T64::zeros({3 * h, h}),
                      T64::zeros({3 * h}), T64::zeros({3 * h}), T64()),
                  ShapeError);
}

TEST_CASE("gru final-state gradient, 3 steps, dim 4") {
  Rng rng(5);
  std::vector<T64> in = {gradcheck::randn_like({3, 1, 4}, rng), gradcheck::randn_like({12, 4}, rng),
                         gradcheck::randn_like({12, 4}, rng), gradcheck::randn_like({12}, rng),
                         gradcheck::randn_like({12}, rng), gradcheck::randn_like({1, 4}, rng)};
  auto loss = [](const std::vector<T64>& x) {
    auto seq = gru(x[0], x[1], x[2], x[3], x[4], x[5]);
    auto last = select0(seq, 2);
    return sum(mul(last, last));
  };
  CHECK(gradcheck::check(loss, in) < 1e-4);
}

TEST_CASE("adam") {
  ParamSet<double> ps;
  auto w = ps.constant("w", {1}, 0.5);
  SUBCASE("zero gradient leaves parameters unchanged") {
    w.mutable_grad()[0] = 0.0;
    adam_step(ps.items(), AdamConfig{}, 1);
    CHECK(w.values()[0] == 0.5);
  }
  SUBCASE("first step with unit gradient moves by lr") {
    w.mutable_grad()[0] = 1.0;
    adam_step(ps.items(), AdamConfig{}, 1);
    // m_hat = v_hat = 1, so the step is lr / (1 + eps).
    CHECK(w.values()[0] == doctest::Approx(0.5 - 0.001 / (1.0 + 1e-8)).epsilon(1e-14));
  }
  SUBCASE("descends a convex quadratic") {
    auto f = [&] { return mul(w, w); };
    double prev = f().item();
    for (long t = 1; t <= 2; ++t) {
      ps.zero_grad();
      f().backward();
      adam_step(ps.items(), AdamConfig{}, t);
      const double now = f().item();
      CHECK(now < prev);
      prev = now;
    }
  }
  CHECK_THROWS_AS(adam_step(ps.items(), AdamConfig{}, 0), ConfigError);
}

TEST_CASE("parameter names are unique and moments start at zero") {
  ParamSet<float> ps;
  Rng rng(1);
  ps.uniform("a", {2, 2}, 0.5, rng);
  CHECK_THROWS_AS(ps.constant("a", {1}, 0.0f), ConfigError);
  for (float m : ps.items()[0].m) CHECK(m == 0.0f);
}

TEST_CASE("dropout") {
  Rng rng(3);
  auto x = T64::full({20000}, 2.0);
  SUBCASE("eval mode is the identity") {
    auto y = dropout(x, 0.5, false, rng);
    CHECK(y.node() == x.node());
  }
  SUBCASE("p = 0 is the identity in train mode") {
    auto y = dropout(x, 0.0, true, rng);
    CHECK(y.node() == x.node());
  }
  SUBCASE("inverted scaling preserves the mean") {
    auto y = dropout(x, 0.5, true, rng);
    double acc = 0.0;
    std::size_t zeros = 0;
    for (double v : y.values()) {
      acc += v;
      zeros += v == 0.0;
      CHECK((v == 0.0 || v == 4.0));
    }
    CHECK(acc / 20000.0 == doctest::Approx(2.0).epsilon(0.03));
    CHECK(zeros > 9500);
    CHECK(zeros < 10500);
  }
  CHECK_THROWS_AS(dropout(x, 1.0, true, rng), ConfigError);
}

TEST_CASE("batchnorm train mode normalizes each channel") {
  Rng rng(9);
  auto x = gradcheck::randn_like({4, 3, 5, 6}, rng, -3.0, 7.0);
  BatchNormStats<double> stats;
  auto y = batchnorm2d(x, T64::full({3}, 1.0), T64::zeros({3}), stats, true, 0.1, 0.0);
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0.0, ss = 0.0;
    for (std::size_t b = 0; b < 4; ++b) {
      for (std::size_t i = 0; i < 30; ++i) s += y.values()[(b * 3 + c) * 30 + i];
    }
    const double m = s / 120.0;
    for (std::size_t b = 0; b < 4; ++b) {
      for (std::size_t i = 0; i < 30; ++i) {
        const double d = y.values()[(b * 3 + c) * 30 + i] - m;
        ss += d * d;
      }
    }
    CHECK(std::abs(m) < 1e-6);
    CHECK(std::abs(ss / 120.0 - 1.0) < 1e-6);
  }
  // Running stats moved a tenth of the way from (0, 1).
  CHECK(stats.mean.size() == 3);
  CHECK(stats.var[0] != 1.0);
}

TEST_CASE("concat then split recovers inputs bitwise") {
  Rng rng(4);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    auto a = gradcheck::randn_like({2, 3, 4}, rng);
    Shape sb = {2, 3, 4};
    sb[axis] = 5;
    auto b = gradcheck::randn_like(sb, rng);
    auto parts = split(concat<double>({a, b}, axis), {a.dim(axis), b.dim(axis)}, axis);
    REQUIRE(parts.size() == 2);
    CHECK(parts[0].shape() == a.shape());
    CHECK(parts[1].shape() == b.shape());
    CHECK(std::equal(a.values().begin(), a.values().end(), parts[0].values().begin()));
    CHECK(std::equal(b.values().begin(), b.values().end(), parts[1].values().begin()));
  }
}

TEST_CASE("no-grad guard records nothing") {
  auto x = T64::from({2}, {1.0, 2.0}, true);
  {
    NoGradGuard guard;
    auto y = mul(x, x);
    CHECK_FALSE(y.requires_grad());
  }
  CHECK(mul(x, x).requires_grad());
}

TEST_CASE("tensor json fixtures round trip") {
  auto t = T64::from({2, 2}, {0.1, 1.0 / 3.0, -2.5e-17, 7.0});
  auto back = tensor_from_json<double>(nlohmann::json::parse(tensor_to_json(t).dump()));
  CHECK(back.shape() == t.shape());
  CHECK(std::equal(t.values().begin(), t.values().end(), back.values().begin()));
  CHECK_THROWS_AS(tensor_from_json<double>(nlohmann::json{{"shape", {2}}}), SchemaError);
}
