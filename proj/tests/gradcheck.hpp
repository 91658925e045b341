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

// Central finite-difference gradient checks shared by the unit tests and the
// acceptance runner.

#ifndef VIBKIT_TESTS_GRADCHECK_HPP_
#define VIBKIT_TESTS_GRADCHECK_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "vibkit/ops.hpp"
#include "vibkit/random.hpp"
#include "vibkit/tensor.hpp"

namespace gradcheck {

using vibkit::Rng;
using vibkit::ad::NoGradGuard;
using vibkit::ad::Shape;
using Tensor = vibkit::ad::Tensor<double>;
using Loss = std::function<Tensor(const std::vector<Tensor>&)>;

// Below 1e-7 in magnitude the comparison is effectively absolute; that is
// where round-off in the difference quotient takes over.
inline double rel_err(double a, double n) {
  const double denom = std::max({std::abs(a), std::abs(n), 1e-7});
  return std::abs(a - n) / denom;
}

struct Report {
  double max_rel_err = 0.0;
  std::size_t central = 0;    // both probes on the same smooth piece as x
  std::size_t one_sided = 0;  // one probe crossed a relu/max-pool kink
  std::size_t skipped = 0;    // both probes crossed a kink
};

// Compares backward() against finite differences over the elements of every
// input. Each probe pair is fingerprinted with a BranchTrace; when one probe
// lands on a different piece of a piecewise-linear op, the difference on the
// clean side is used instead of the central one. `max_per_input` > 0 checks a
// seeded random subset.
inline Report check_report(const Loss& f, const std::vector<Tensor>& inputs, double eps = 1e-5,
                           std::size_t max_per_input = 0, std::uint64_t seed = 1) {
  for (auto t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  f(inputs).backward();
  std::vector<std::vector<double>> analytic;
  for (const auto& t : inputs) {
    auto g = t.grad();
    analytic.emplace_back(g.begin(), g.end());
    if (analytic.back().empty()) analytic.back().assign(t.numel(), 0.0);
  }
  NoGradGuard guard;
  vibkit::ad::BranchTrace trace;
  auto probe = [&](std::uint64_t& fp) {
    trace.reset();
    const double v = f(inputs).item();
    fp = trace.fingerprint();
    return v;
  };
  std::uint64_t fp0 = 0;
  const double base = probe(fp0);
  Rng rng(seed);
  Report rep;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor t = inputs[k];
    auto w = t.mutable_values();
    std::vector<std::size_t> idx(w.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (max_per_input > 0 && idx.size() > max_per_input) {
      for (std::size_t i = 0; i < max_per_input; ++i) {
        std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
      }
      idx.resize(max_per_input);
    }
    for (std::size_t i : idx) {
      const double orig = w[i];
      std::uint64_t fp_up = 0, fp_down = 0;
      w[i] = orig + eps;
      const double up = probe(fp_up);
      w[i] = orig - eps;
      const double down = probe(fp_down);
      w[i] = orig;
      double numeric = 0.0;
      if (fp_up == fp0 && fp_down == fp0) {
        numeric = (up - down) / (2.0 * eps);
        ++rep.central;
      } else {
        // Second-order one-sided stencil over [x, x + s * eps], kept only
        // if its midpoint is also on x's piece.
        const double s = fp_up == fp0 ? 1.0 : -1.0;
        std::uint64_t fp_mid = 0;
        w[i] = orig + s * 0.5 * eps;
        const double mid = (fp_up == fp0 || fp_down == fp0) ? probe(fp_mid) : 0.0;
        w[i] = orig;
        if ((fp_up != fp0 && fp_down != fp0) || fp_mid != fp0) {
          ++rep.skipped;
          continue;
        }
        const double far = s > 0 ? up : down;
        numeric = s * (-3.0 * base + 4.0 * mid - far) / eps;
        ++rep.one_sided;
      }
      rep.max_rel_err = std::max(rep.max_rel_err, rel_err(analytic[k][i], numeric));
    }
  }
  return rep;
}

inline double check(const Loss& f, const std::vector<Tensor>& inputs, double eps = 1e-5,
                    std::size_t max_per_input = 0, std::uint64_t seed = 1) {
  return check_report(f, inputs, eps, max_per_input, seed).max_rel_err;
}

inline Tensor randn_like(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(vibkit::ad::numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v));
}

// Values bounded away from zero, for ops with a kink there.
inline Tensor away_from_zero(Shape shape, Rng& rng) {
  std::vector<double> v(vibkit::ad::numel(shape));
  for (double& x : v) x = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.05, 1.0);
  return Tensor::from(std::move(shape), std::move(v));
}

// Distinct values (spacing >= 0.01) in random order, for max-pooling.
inline Tensor distinct(Shape shape, Rng& rng) {
  const std::size_t n = vibkit::ad::numel(shape);
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = 0.01 * static_cast<double>(i);
  for (std::size_t i = n; i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
  return Tensor::from(std::move(shape), std::move(v));
}

inline std::size_t dim(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + rng.below(hi - lo + 1);
}

inline Shape random_shape(Rng& rng, std::size_t max_rank = 4) {
  Shape s(dim(rng, 1, max_rank));
  for (auto& d : s) d = dim(rng, 1, 4);
  return s;
}

// Weighted sum so every output element has a distinct, O(1) influence.
inline Tensor weighted(const Tensor& y, const Tensor& w) {
  return vibkit::ad::sum(vibkit::ad::mul(y, w));
}

struct OpResult {
  std::string op;
  int cases = 0;
  double max_rel_err = 0.0;
};

template <typename Build>
OpResult run_cases(const std::string& name, int cases, std::uint64_t seed, Build build) {
  OpResult r{name, cases, 0.0};
  Rng rng(seed);
  for (int c = 0; c < cases; ++c) {
    std::vector<Tensor> inputs;
    Loss loss = build(rng, inputs);
    r.max_rel_err = std::max(r.max_rel_err, check(loss, inputs));
  }
  return r;
}

// Every differentiable op over `cases` random shapes.
inline std::vector<OpResult> check_all_ops(std::uint64_t seed = 11, int cases = 10) {
  namespace ad = vibkit::ad;
  std::vector<OpResult> out;
  auto elementwise = [&](const std::string& name, auto op) {
    out.push_back(run_cases(name, cases, seed, [&](Rng& rng, std::vector<Tensor>& in) {
      Shape s = random_shape(rng);
      in = {randn_like(s, rng), randn_like(s, rng)};
      Tensor w = randn_like(s, rng);
      return Loss([=](const std::vector<Tensor>& x) { return weighted(op(x[0], x[1]), w); });
    }));
  };
  elementwise("add", [](const Tensor& a, const Tensor& b) { return ad::add(a, b); });
  elementwise("sub", [](const Tensor& a, const Tensor& b) { return ad::sub(a, b); });
  elementwise("mul", [](const Tensor& a, const Tensor& b) { return ad::mul(a, b); });

  auto unary = [&](const std::string& name, auto op, bool kink) {
    out.push_back(run_cases(name, cases, seed, [&](Rng& rng, std::vector<Tensor>& in) {
      Shape s = random_shape(rng);
      in = {kink ? away_from_zero(s, rng) : randn_like(s, rng, -2.0, 2.0)};
      Tensor w = randn_like(op(in[0]).shape(), rng);
      return Loss([=](const std::vector<Tensor>& x) { return weighted(op(x[0]), w); });
    }));
  };
  unary("scale", [](const Tensor& a) { return ad::scale(a, -1.7); }, false);
  unary("relu", [](const Tensor& a) { return ad::relu(a); }, true);
  unary("sigmoid", [](const Tensor& a) { return ad::sigmoid(a); }, false);
  unary("tanh", [](const Tensor& a) { return ad::tanh(a); }, false);
  unary("flatten", [](const Tensor& a) { return ad::flatten(a); }, false);

  auto reduction = [&](const std::string& name, auto op) {
    out.push_back(run_cases(name, cases, seed, [&](Rng& rng, std::vector<Tensor>& in) {
      in = {randn_like(random_shape(rng), rng)};
      return Loss([=](const std::vector<Tensor>& x) {
        return ad::mul(op(x[0]), op(x[0]));  // squared, so the gradient depends on x
      });
    }));
  };
  reduction("sum", [](const Tensor& a) { return ad::sum(a); });
  reduction("mean", [](const Tensor& a) { return ad::mean(a); });

  out.push_back(run_cases("matmul", cases, seed, [&](Rng& rng, std::vector<Tensor>& in) {
    const std::size_t m = dim(rng, 1, 5), k = dim(rng, 1, 5), n = dim(rng, 1, 5);
    in = {randn_like({m, k}, rng), randn_like({k, n}, rng)};
    Tensor w = randn_like({m, n}, rng);
    return Loss([=](const std::vector<Tensor>& x) { return weighted(ad::matmul(x[0], x[1]), w); });
  }));

  out.push_back(run_cases("linear", cases, seed, [&](Rng& rng, std::vector<Tensor>& in) {
    const std::size_t b = dim(rng, 1, 4), i = dim(rng, 1, 5), o = dim(rng, 1, 5);
    in = {randn_like({b, i}, rng), randn_like({o, i}, rng), randn_like({o}, rng)};
    Tensor w = randn_like({b, o}, rng);
    return Loss([=](const std::vector<Tensor>& x) {
      return weighted(ad::linear(x[0], x[1], x[2]), w);
    });
  }));

  out.push_back(run_cases("conv2d", cases, seed, [&](Rng& rng, std::vector<Tensor>& in) {
    const std::size_t b = dim(rng, 1, 2), c = dim(rng, 1, 3), o = dim(rng, 1, 3);
    const std::size_t k = dim(rng, 1, 3);
    const int stride = static_cast<int>(dim(rng, 1, 2));
    const int pad = static_cast<int>(dim(rng, 0, k / 2));
    const std::size_t h = dim(rng, k, 7), w_ = dim(rng, k, 7);
    in = {randn_like({b, c, h, w_}, rng), randn_like({o, c, k, k}, rng), randn_like({o}, rng)};
    const std::size_t ho = (h + 2 * pad - k) / stride + 1, wo = (w_ + 2 * pad - k) / stride + 1;
    Tensor w = randn_like({b, o, ho, wo}, rng);
    return Loss([=](const std::vector<Tensor>& x) {
      return weighted(ad::conv2d(x[0], x[1], x[2], stride, pad), w);
    });
  }));

  for (bool training : {true, false}) {
    out.push_back(run_cases(training ? "batchnorm2d(train)" : "batchnorm2d(eval)", cases, seed,
                            [&](Rng& rng, std::vector<Tensor>& in) {
      const std::size_t b = dim(rng, 2, 3), c = dim(rng, 1, 3);
      const std::size_t h = dim(rng, 1, 4), w_ = dim(rng, 1, 4);
      in = {randn_like({b, c, h, w_}, rng), randn_like({c}, rng, 0.5, 1.5), randn_like({c}, rng)};
      Tensor w = randn_like({b, c, h, w_}, rng);
      ad::BatchNormStats<double> base;
      for (std::size_t i = 0; i < c; ++i) {
        base.mean.push_back(rng.uniform(-0.5, 0.5));
        base.var.push_back(rng.uniform(0.5, 2.0));
      }
      return Loss([=](const std::vector<Tensor>& x) {
        ad::BatchNormStats<double> stats = base;
        return weighted(ad::batchnorm2d(x[0], x[1], x[2], stats, training), w);
      });
    }));
  }

  out.push_back(run_cases("maxpool2d", cases, seed, [&](Rng& rng, std::vector<Tensor>& in) {
    const std::size_t b = dim(rng, 1, 2), c = dim(rng, 1, 2);
    const int k = static_cast<int>(dim(rng, 1, 3)), s = static_cast<int>(dim(rng, 1, 2));
    const int pad = static_cast<int>(dim(rng, 0, static_cast<std::size_t>(k) / 2));
    const std::size_t h = dim(rng, k, 6), w_ = dim(rng, k, 6);
    in = {distinct({b, c, h, w_}, rng)};
    const std::size_t ho = (h + 2 * pad - k) / s + 1, wo = (w_ + 2 * pad - k) / s + 1;
    Tensor w = randn_like({b, c, ho, wo}, rng);
    return Loss([=](const std::vector<Tensor>& x) {
      return weighted(ad::maxpool2d(x[0], k, s, pad), w);
    });
  }));

  out.push_back(run_cases("avgpool2d", cases, seed, [&](Rng& rng, std::vector<Tensor>& in) {
    const std::size_t b = dim(rng, 1, 2), c = dim(rng, 1, 2);
    const int k = static_cast<int>(dim(rng, 1, 3)), s = static_cast<int>(dim(rng, 1, 2));
    const std::size_t h = dim(rng, k, 6), w_ = dim(rng, k, 6);
    in = {randn_like({b, c, h, w_}, rng)};
    Tensor w = randn_like({b, c, (h - k) / s + 1, (w_ - k) / s + 1}, rng);
    return Loss([=](const std::vector<Tensor>& x) {
      return weighted(ad::avgpool2d(x[0], k, s), w);
    });
  }));

  out.push_back(run_cases("global_avgpool", cases, seed, [&](Rng& rng, std::vector<Tensor>& in) {
    const std::size_t b = dim(rng, 1, 3), c = dim(rng, 1, 3);
    in = {randn_like({b, c, dim(rng, 1, 5), dim(rng, 1, 5)}, rng)};
    Tensor w = randn_like({b, c}, rng);
    return Loss([=](const std::vector<Tensor>& x) { return weighted(ad::global_avgpool(x[0]), w); });
  }));

  out.push_back(run_cases("reshape", cases, seed, [&](Rng& rng, std::vector<Tensor>& in) {
    const std::size_t a = dim(rng, 1, 4), b = dim(rng, 1, 4), c = dim(rng, 1, 4);
    in = {randn_like({a, b, c}, rng)};
    Tensor w = randn_like({c, a * b}, rng);
    return Loss([=](const std::vector<Tensor>& x) {
      return weighted(ad::reshape(x[0], {c, a * b}), w);
    });
  }));

  out.push_back(run_cases("swap01", cases, seed, [&](Rng& rng, std::vector<Tensor>& in) {
    Shape s = random_shape(rng);
    if (s.size() < 2) s.push_back(dim(rng, 1, 4));
    in = {randn_like(s, rng)};
    Shape t = s;
    std::swap(t[0], t[1]);
    Tensor w = randn_like(t, rng);
    return Loss([=](const std::vector<Tensor>& x) { return weighted(ad::swap01(x[0]), w); });
  }));

  out.push_back(run_cases("select0", cases, seed, [&](Rng& rng, std::vector<Tensor>& in) {
    Shape s = random_shape(rng);
    if (s.size() < 2) s.push_back(dim(rng, 1, 4));
    const std::size_t i = rng.below(s[0]);
    in = {randn_like(s, rng)};
    Tensor w = randn_like(Shape(s.begin() + 1, s.end()), rng);
    return Loss([=](const std::vector<Tensor>& x) { return weighted(ad::select0(x[0], i), w); });
  }));

  out.push_back(run_cases("concat", cases, seed, [&](Rng& rng, std::vector<Tensor>& in) {
    Shape s = random_shape(rng);
    const std::size_t axis = rng.below(s.size());
    Shape s2 = s;
    s2[axis] = dim(rng, 1, 3);
    in = {randn_like(s, rng), randn_like(s2, rng)};
    Shape so = s;
    so[axis] += s2[axis];
    Tensor w = randn_like(so, rng);
    return Loss([=](const std::vector<Tensor>& x) {
      return weighted(ad::concat<double>({x[0], x[1]}, axis), w);
    });
  }));

  out.push_back(run_cases("split", cases, seed, [&](Rng& rng, std::vector<Tensor>& in) {
    Shape s = random_shape(rng);
    const std::size_t axis = rng.below(s.size());
    s[axis] = dim(rng, 2, 5);
    const std::size_t first = dim(rng, 1, s[axis] - 1);
    std::vector<std::size_t> sizes = {first, s[axis] - first};
    in = {randn_like(s, rng)};
    Shape s0 = s, s1 = s;
    s0[axis] = sizes[0];
    s1[axis] = sizes[1];
    Tensor w0 = randn_like(s0, rng), w1 = randn_like(s1, rng);
    return Loss([=](const std::vector<Tensor>& x) {
      auto parts = ad::split(x[0], sizes, axis);
      return ad::add(weighted(parts[0], w0), weighted(parts[1], w1));
    });
  }));

  out.push_back(run_cases("dropout", cases, seed, [&](Rng& rng, std::vector<Tensor>& in) {
    Shape s = random_shape(rng);
    const std::uint64_t mask_seed = rng.next_u64();
    in = {randn_like(s, rng)};
    Tensor w = randn_like(s, rng);
    return Loss([=](const std::vector<Tensor>& x) {
      Rng mask(mask_seed);  // same mask on every evaluation
      return weighted(ad::dropout(x[0], 0.3, true, mask), w);
    });
  }));

  out.push_back(run_cases("mse", cases, seed, [&](Rng& rng, std::vector<Tensor>& in) {
    Shape s = random_shape(rng);
    in = {randn_like(s, rng), randn_like(s, rng)};
    return Loss([](const std::vector<Tensor>& x) { return ad::mse(x[0], x[1]); });
  }));

  out.push_back(run_cases("gru", cases, seed, [&](Rng& rng, std::vector<Tensor>& in) {
    const std::size_t t = dim(rng, 1, 4), b = dim(rng, 1, 3), i = dim(rng, 1, 4);
    const std::size_t h = dim(rng, 1, 4);
    in = {randn_like({t, b, i}, rng),      randn_like({3 * h, i}, rng),
          randn_like({3 * h, h}, rng),     randn_like({3 * h}, rng),
          randn_like({3 * h}, rng),        randn_like({b, h}, rng)};
    Tensor w = randn_like({t, b, h}, rng);
    return Loss([=](const std::vector<Tensor>& x) {
      return weighted(ad::gru(x[0], x[1], x[2], x[3], x[4], x[5]), w);
    });
  }));

  // Composite graph from the backward() contract.
  out.push_back(run_cases("conv-bn-relu-linear-mse", cases, seed,
                          [&](Rng& rng, std::vector<Tensor>& in) {
    const std::size_t b = dim(rng, 2, 3), c = dim(rng, 1, 2), o = dim(rng, 1, 3);
    const std::size_t h = dim(rng, 3, 5), w_ = dim(rng, 3, 5);
    in = {randn_like({b, c, h, w_}, rng), randn_like({o, c, 3, 3}, rng),
          randn_like({o}, rng, 0.5, 1.5), randn_like({o}, rng),
          randn_like({2, o * h * w_}, rng), randn_like({2}, rng)};
    Tensor target = randn_like({b, 2}, rng);
    return Loss([=](const std::vector<Tensor>& x) {
      ad::BatchNormStats<double> stats;
      Tensor y = ad::conv2d(x[0], x[1], Tensor(), 1, 1);
      y = ad::relu(ad::batchnorm2d(y, x[2], x[3], stats, true));
      return ad::mse(ad::linear(ad::flatten(y), x[4], x[5]), target);
    });
  }));
  return out;
}

}  // namespace gradcheck

#endif  // VIBKIT_TESTS_GRADCHECK_HPP_
