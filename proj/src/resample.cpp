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

#include "vibkit/resample.hpp"

#include <cmath>
#include <numbers>

namespace vibkit::dsp {
namespace {

constexpr double kKaiserBeta = 8.0;

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

constexpr int kTableSteps = 512;  // entries per input sample

double kaiser_exact(double d) {
  const double r = d / kSincHalfTaps;
  if (r <= -1.0 || r >= 1.0) return 0.0;
  return std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(1.0 - r * r)) /
         std::cyl_bessel_i(0.0, kKaiserBeta);
}

// Window sampled on [0, half_taps], linearly interpolated; symmetric.
const std::vector<double>& kaiser_table() {
  static const std::vector<double> table = [] {
    std::vector<double> t(kSincHalfTaps * kTableSteps + 2);
    for (std::size_t i = 0; i < t.size(); ++i) {
      t[i] = kaiser_exact(static_cast<double>(i) / kTableSteps);
    }
    return t;
  }();
  return table;
}

double kaiser(double d) {
  const double a = std::abs(d) * kTableSteps;
  if (a >= kSincHalfTaps * kTableSteps) return 0.0;
  const auto i = static_cast<std::size_t>(a);
  const double f = a - static_cast<double>(i);
  const auto& t = kaiser_table();
  return t[i] + f * (t[i + 1] - t[i]);
}

}  // namespace

std::vector<double> resample_stretch(std::span<const double> x, double step,
                                     std::size_t out_len) {
  const auto n = static_cast<long>(x.size());
  if (step == 1.0 && out_len == x.size()) {
    return std::vector<double>(x.begin(), x.end());
  }
  const double cutoff = step > 1.0 ? 1.0 / step : 1.0;
  std::vector<double> y(out_len, 0.0);
  for (std::size_t j = 0; j < out_len; ++j) {
    const double pos = static_cast<double>(j) * step;
    const auto base = static_cast<long>(std::floor(pos));
    double acc = 0.0, wsum = 0.0;
    for (long i = base - kSincHalfTaps + 1; i <= base + kSincHalfTaps; ++i) {
      const double d = pos - static_cast<double>(i);
      const double h = cutoff * sinc(cutoff * d) * kaiser(d);
      wsum += h;
      if (i >= 0 && i < n) acc += h * x[static_cast<std::size_t>(i)];
    }
    y[j] = wsum != 0.0 ? acc / wsum : 0.0;
  }
  return y;
}

}  // namespace vibkit::dsp
