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

#ifndef VIBKIT_FILTER_HPP_
#define VIBKIT_FILTER_HPP_

#include <complex>
#include <span>
#include <vector>

namespace vibkit::dsp {

// Normalized second-order section (a0 == 1), direct form II transposed.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0;
  double a1 = 0, a2 = 0;
};

using Sos = std::vector<Biquad>;

// Digital Butterworth designs via the bilinear transform with prewarping.
// `order` is the prototype order; bandpass designs have 2 * order poles.
// Edges are in Hz and must lie strictly inside (0, sample_rate / 2).
Sos butter_lowpass(int order, double cutoff_hz, double sample_rate);
Sos butter_highpass(int order, double cutoff_hz, double sample_rate);
Sos butter_bandpass(int order, double low_hz, double high_hz,
                    double sample_rate);

std::complex<double> frequency_response(const Sos& sos, double freq_hz,
                                        double sample_rate);

// Causal filtering from rest.
std::vector<double> sosfilt(const Sos& sos, std::span<const double> x);

// Forward-backward filtering of the zero-extended signal, cropped back to
// the input length. Zero phase; magnitude response squared.
std::vector<double> sosfiltfilt(const Sos& sos, std::span<const double> x);

}  // namespace vibkit::dsp

#endif  // VIBKIT_FILTER_HPP_
