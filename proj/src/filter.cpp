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

#include "vibkit/filter.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace vibkit::dsp {
namespace {

using cd = std::complex<double>;
constexpr double kPi = std::numbers::pi;

enum class Numerator { kLowpass, kHighpass, kBandpass };

void check_design(int order, double f, double fs) {
  if (order < 2 || order % 2 != 0) {
    throw std::invalid_argument("Butterworth order must be even and >= 2");
  }
  if (!(f > 0.0) || !(f < fs / 2.0)) {
    throw std::invalid_argument("filter edge must lie inside (0, fs/2)");
  }
}

// Unit-cutoff analog prototype poles with positive imaginary part.
std::vector<cd> prototype_upper_poles(int order) {
  std::vector<cd> poles;
  for (int k = 0; k < order; ++k) {
    cd p = std::polar(1.0, kPi * (2.0 * k + order + 1) / (2.0 * order));
    if (p.imag() > 0) poles.push_back(p);
  }
  return poles;
}

double prewarp(double f, double fs) { return 2.0 * fs * std::tan(kPi * f / fs); }

cd bilinear(cd s, double fs) { return (2.0 * fs + s) / (2.0 * fs - s); }

Sos sections_from_poles(const std::vector<cd>& upper_z_poles, Numerator num) {
  Sos sos;
  for (const cd& z : upper_z_poles) {
    Biquad q;
    switch (num) {
      case Numerator::kLowpass: q.b0 = 1; q.b1 = 2; q.b2 = 1; break;
      case Numerator::kHighpass: q.b0 = 1; q.b1 = -2; q.b2 = 1; break;
      case Numerator::kBandpass: q.b0 = 1; q.b1 = 0; q.b2 = -1; break;
    }
    q.a1 = -2.0 * z.real();
    q.a2 = std::norm(z);
    sos.push_back(q);
  }
  return sos;
}

void normalize_gain(Sos& sos, double ref_hz, double fs) {
  const double g = std::abs(frequency_response(sos, ref_hz, fs));
  sos.front().b0 /= g;
  sos.front().b1 /= g;
  sos.front().b2 /= g;
}

}  // namespace

Sos butter_lowpass(int order, double cutoff_hz, double sample_rate) {
  check_design(order, cutoff_hz, sample_rate);
  const double wc = prewarp(cutoff_hz, sample_rate);
  std::vector<cd> zp;
  for (const cd& p : prototype_upper_poles(order)) {
    zp.push_back(bilinear(wc * p, sample_rate));
  }
  Sos sos = sections_from_poles(zp, Numerator::kLowpass);
  normalize_gain(sos, 0.0, sample_rate);
  return sos;
}

Sos butter_highpass(int order, double cutoff_hz, double sample_rate) {
  check_design(order, cutoff_hz, sample_rate);
  const double wc = prewarp(cutoff_hz, sample_rate);
  std::vector<cd> zp;
  for (const cd& p : prototype_upper_poles(order)) {
    // wc / p has negative imaginary part; keep the upper conjugate.
    zp.push_back(std::conj(bilinear(wc / p, sample_rate)));
  }
  Sos sos = sections_from_poles(zp, Numerator::kHighpass);
  normalize_gain(sos, sample_rate / 2.0, sample_rate);
  return sos;
}

Sos butter_bandpass(int order, double low_hz, double high_hz,
                    double sample_rate) {
  check_design(order, low_hz, sample_rate);
  check_design(order, high_hz, sample_rate);
  if (!(low_hz < high_hz)) {
    throw std::invalid_argument("bandpass requires low edge < high edge");
  }
  const double w1 = prewarp(low_hz, sample_rate);
  const double w2 = prewarp(high_hz, sample_rate);
  const double w0 = std::sqrt(w1 * w2);
  const double bw = w2 - w1;
  std::vector<cd> zp;
  for (const cd& p : prototype_upper_poles(order)) {
    const cd half = p * bw / 2.0;
    const cd disc = std::sqrt(half * half - w0 * w0);
    for (const cd& s : {half + disc, half - disc}) {
      cd z = bilinear(s, sample_rate);
      zp.push_back(z.imag() >= 0 ? z : std::conj(z));
    }
  }
  Sos sos = sections_from_poles(zp, Numerator::kBandpass);
  const double center_hz =
      std::atan(w0 / (2.0 * sample_rate)) * sample_rate / kPi;
  normalize_gain(sos, center_hz, sample_rate);
  return sos;
}

std::complex<double> frequency_response(const Sos& sos, double freq_hz,
                                        double sample_rate) {
  const cd zinv = std::polar(1.0, -2.0 * kPi * freq_hz / sample_rate);
  cd h = 1.0;
  for (const Biquad& q : sos) {
    h *= (q.b0 + zinv * (q.b1 + zinv * q.b2)) /
         (1.0 + zinv * (q.a1 + zinv * q.a2));
  }
  return h;
}

namespace {

struct State {
  double z1 = 0, z2 = 0;
};

void run(const Sos& sos, std::vector<State>& st, std::vector<double>& y) {
  for (std::size_t s = 0; s < sos.size(); ++s) {
    const Biquad& q = sos[s];
    double z1 = st[s].z1, z2 = st[s].z2;
    for (double& v : y) {
      const double x = v;
      const double out = q.b0 * x + z1;
      z1 = q.b1 * x - q.a1 * out + z2;
      z2 = q.b2 * x - q.a2 * out;
      v = out;
    }
    st[s] = {z1, z2};
  }
}

// Samples until the slowest pole has decayed by 1e-12.
std::size_t settle_length(const Sos& sos) {
  double r = 0.0;
  for (const Biquad& q : sos) r = std::max(r, std::sqrt(std::abs(q.a2)));
  if (r <= 0.0) return 8;
  const double n = std::log(1e-12) / std::log(r);
  return static_cast<std::size_t>(std::min(std::ceil(n), 1e6)) + 8;
}

}  // namespace

std::vector<double> sosfilt(const Sos& sos, std::span<const double> x) {
  std::vector<double> y(x.begin(), x.end());
  std::vector<State> st(sos.size());
  run(sos, st, y);
  return y;
}

std::vector<double> sosfiltfilt(const Sos& sos, std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  // The signal is silent outside its support: zero-extend by the filter's
  // settling length so both passes see their full transients.
  const std::size_t pad = settle_length(sos);
  std::vector<double> ext(n + 2 * pad, 0.0);
  std::copy(x.begin(), x.end(), ext.begin() + static_cast<long>(pad));

  std::vector<State> st(sos.size());
  run(sos, st, ext);
  std::reverse(ext.begin(), ext.end());
  st.assign(sos.size(), State{});
  run(sos, st, ext);
  std::reverse(ext.begin(), ext.end());
  return std::vector<double>(ext.begin() + static_cast<long>(pad),
                             ext.begin() + static_cast<long>(pad + n));
}

}  // namespace vibkit::dsp
