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

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "vibkit/error.hpp"
#include "vibkit/filter.hpp"
#include "vibkit/mechano.hpp"
#include "vibkit/random.hpp"
#include "vibkit/resample.hpp"
#include "vibkit/tacton.hpp"

using namespace vibkit;

namespace {

Waveform tone_wave(double hz, std::size_t n, double amp = 1.0) {
  return Waveform{oracle::tone(hz, 1000, n, amp), 1000, Units::kG};
}

Waveform random_wave(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  Waveform w{std::vector<double>(n), 1000, Units::kG};
  for (double& v : w.samples) v = rng.uniform(-1.0, 1.0);
  return w;
}

// Reference STFT frame: reflect padding, periodic Hann, naive DFT.
std::vector<std::complex<double>> reference_frame(const std::vector<double>& x,
                                                  int frame) {
  const long n = static_cast<long>(x.size());
  std::vector<double> seg(500);
  for (int k = 0; k < 500; ++k) {
    long i = frame * 50L - 250 + k;
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
    const double hann = 0.5 - 0.5 * std::cos(2 * oracle::kPi * k / 500.0);
    seg[k] = hann * x[static_cast<std::size_t>(i)];
  }
  return oracle::naive_dft(seg);
}

}  // namespace

TEST_CASE("Butterworth designs match the closed-form magnitude") {
  const double fs = 1000;
  const auto lp = dsp::butter_lowpass(4, 5.0, fs);
  const auto hp = dsp::butter_highpass(4, 40.0, fs);
  const auto bp = dsp::butter_bandpass(4, 3.0, 100.0, fs);
  const auto lp8 = dsp::butter_lowpass(8, 450.0, 10000);
  CHECK(lp.size() == 2);
  CHECK(bp.size() == 4);
  CHECK(lp8.size() == 4);
  for (double f : {0.5, 2.0, 5.0, 20.0, 40.0, 60.0, 100.0, 150.0, 300.0, 480.0}) {
    CAPTURE(f);
    CHECK(std::abs(dsp::frequency_response(lp, f, fs)) ==
          doctest::Approx(oracle::butter_lowpass_mag(4, 5.0, f, fs)).epsilon(1e-9).scale(1e-12));
    CHECK(std::abs(dsp::frequency_response(hp, f, fs)) ==
          doctest::Approx(oracle::butter_highpass_mag(4, 40.0, f, fs)).epsilon(1e-9).scale(1e-12));
    CHECK(std::abs(dsp::frequency_response(bp, f, fs)) ==
          doctest::Approx(oracle::butter_bandpass_mag(4, 3.0, 100.0, f, fs)).epsilon(1e-9).scale(1e-12));
    CHECK(std::abs(dsp::frequency_response(lp8, 10 * f, 10000)) ==
          doctest::Approx(oracle::butter_lowpass_mag(8, 450.0, 10 * f, 10000)).epsilon(1e-9).scale(1e-12));
  }
  CHECK(std::abs(dsp::frequency_response(lp, 5.0, fs)) ==
        doctest::Approx(std::sqrt(0.5)));
}

TEST_CASE("all designs are stable") {
  for (const auto& sos :
       {dsp::butter_bandpass(4, 3.0, 100.0, 1000), dsp::butter_bandpass(4, 15.0, 400.0, 1000),
        dsp::butter_highpass(4, 40.0, 1000), dsp::butter_lowpass(4, 5.0, 1000)}) {
    for (const auto& q : sos) {
      // Both roots of z^2 + a1 z + a2 inside the unit circle.
      CHECK(q.a2 < 1.0);
      CHECK(std::abs(q.a1) < 1.0 + q.a2);
    }
  }
}

TEST_CASE("channel filters") {
  SUBCASE("zero in, zero out") {
    const Waveform z{std::vector<double>(6000, 0.0), 1000, Units::kG};
    for (Channel c : {Channel::kRA1, Channel::kRA2, Channel::kSA1, Channel::kSA2}) {
      for (double v : channel_filter(z, c).samples) CHECK(v == 0.0);
    }
  }
  SUBCASE("RA1 passes 60 Hz") {
    const double predicted =
        std::pow(oracle::butter_bandpass_mag(4, 3.0, 100.0, 60.0, 1000), 2);
    CHECK(predicted >= 0.7);
    const Waveform w = tone_wave(60.0, 6000);
    const Waveform y = channel_filter(w, Channel::kRA1);
    const double ratio = oracle::rms(y.samples) / oracle::rms(w.samples);
    CHECK(ratio >= 0.7);
    CHECK(oracle::rms(y.samples, 500, 5500) / oracle::rms(w.samples, 500, 5500) ==
          doctest::Approx(predicted).epsilon(1e-3));
  }
  SUBCASE("SA1 rejects 60 Hz") {
    const double predicted =
        std::pow(oracle::butter_lowpass_mag(4, 5.0, 60.0, 1000), 2);
    CHECK(predicted <= 0.01);
    const Waveform w = tone_wave(60.0, 6000);
    const Waveform y = channel_filter(w, Channel::kSA1);
    CHECK(oracle::rms(y.samples) <= 0.01 * oracle::rms(w.samples));
  }
  SUBCASE("wrong rate") {
    Waveform w = tone_wave(60.0, 100);
    w.sample_rate = 10000;
    CHECK_THROWS_AS(channel_filter(w, Channel::kRA1), RateError);
  }
}

TEST_CASE("zero-phase filtering has no group delay") {
  // Hann-windowed 150 Hz burst centred at 3 s.
  std::vector<double> x(6000, 0.0);
  for (int i = 0; i < 400; ++i) {
    const double win = 0.5 - 0.5 * std::cos(2 * oracle::kPi * i / 400.0);
    x[2800 + i] = win * std::sin(2 * oracle::kPi * 150.0 * i / 1000.0);
  }
  const Waveform w{x, 1000, Units::kG};
  for (Channel c : {Channel::kRA1, Channel::kRA2, Channel::kSA2}) {
    const Waveform y = channel_filter(w, c);
    int best_lag = 0;
    double best = -INFINITY;
    for (int lag = -20; lag <= 20; ++lag) {
      double acc = 0.0;
      for (int i = 100; i < 5900; ++i) acc += x[i] * y.samples[i + lag];
      if (acc > best) {
        best = acc;
        best_lag = lag;
      }
    }
    CAPTURE(to_string(c));
    CHECK(std::abs(best_lag) <= 1);
  }
}

TEST_CASE("sosfiltfilt on short inputs") {
  const auto lp = dsp::butter_lowpass(4, 5.0, 1000);
  CHECK(dsp::sosfiltfilt(lp, std::vector<double>{}).empty());
  const auto one = dsp::sosfiltfilt(lp, std::vector<double>{2.0});
  REQUIRE(one.size() == 1);
  CHECK(std::isfinite(one[0]));
  // Linear in the input.
  const auto x = oracle::tone(3.0, 1000, 700);
  auto x2 = x;
  for (double& v : x2) v *= -3.0;
  const auto y = dsp::sosfiltfilt(lp, x), y2 = dsp::sosfiltfilt(lp, x2);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y2[i] == doctest::Approx(-3.0 * y[i]));
}

TEST_CASE("stft geometry") {
  const StftFrames fr = stft(random_wave(1, 6000));
  CHECK(fr.bins == 251);
  CHECK(fr.frames == 121);
  CHECK(fr.data.size() == 251u * 121u);
  CHECK(stft(random_wave(2, 5000)).frames == 101);
  const StftFrames z = stft(Waveform{std::vector<double>(6000, 0.0), 1000, Units::kG});
  for (const auto& v : z.data) CHECK(std::abs(v) == 0.0);
}

TEST_CASE("stft of a 100 Hz tone peaks at bin 50") {
  const Waveform w = tone_wave(100.0, 6000);
  const StftFrames fr = stft(w);
  for (int f = 0; f < fr.frames; ++f) {
    int best = 0;
    for (int b = 0; b < fr.bins; ++b) {
      if (std::abs(fr.at(b, f)) > std::abs(fr.at(best, f))) best = b;
    }
    CAPTURE(f);
    // Reflect padding flips the sine's phase inside the first and last two
    // windows, which notches bin 50; there the naive frame DFT decides.
    const auto ref = reference_frame(w.samples, f);
    int ref_best = 0;
    for (int b = 0; b < fr.bins; ++b) {
      if (std::abs(ref[b]) > std::abs(ref[ref_best])) ref_best = b;
    }
    CHECK(best == ref_best);
    if (f >= 2 && f <= fr.frames - 3) CHECK(best == 50);
  }
}

TEST_CASE("stft matches a naive per-frame DFT") {
  for (std::uint64_t seed : {11u, 12u}) {
    const Waveform w = random_wave(seed, 6000);
    const StftFrames fr = stft(w);
    double worst = 0.0;
    for (int f = 0; f < fr.frames; f += 7) {
      const auto ref = reference_frame(w.samples, f);
      for (int b = 0; b < fr.bins; ++b) {
        const double err = std::abs(fr.at(b, f) - ref[b]) / std::abs(ref[b]);
        worst = std::max(worst, err);
      }
    }
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("mechano spectrogram shapes") {
  const Waveform w = random_wave(3, 2000);
  const auto two = mechano_spectrograms(w, parse_channels("ra1,ra2"));
  CHECK(two.channels.size() == 2);
  CHECK(two.data.size() == 2u * 251u * 121u);
  CHECK(mechano_spectrograms(w, parse_channels("unfiltered")).data.size() ==
        251u * 121u);
  const auto four = mechano_spectrograms(w, parse_channels("sa2,ra2,sa1,ra1"));
  CHECK(four.channels ==
        std::vector<Channel>{Channel::kRA1, Channel::kRA2, Channel::kSA1, Channel::kSA2});
  CHECK(four.data.size() == 4u * 251u * 121u);
  for (double v : four.data) {
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0);
  }
  CHECK_THROWS_AS(mechano_spectrograms(random_wave(4, 6001), parse_channels("ra1")),
                  TooLong);
  CHECK_THROWS_AS(parse_channels("ra1,unfiltered"), SchemaError);
  CHECK_THROWS_AS(parse_channels("ra3"), SchemaError);
}

TEST_CASE("mechano spectrograms are positively homogeneous") {
  const Waveform w = random_wave(5, 4000);
  Waveform scaled = w;
  for (double& v : scaled.samples) v *= 2.5;
  const auto a = mechano_spectrograms(w, parse_channels("ra1,ra2,sa1,sa2"));
  const auto b = mechano_spectrograms(scaled, parse_channels("ra1,ra2,sa1,sa2"));
  double amax = 0.0;
  for (double v : a.data) amax = std::max(amax, v);
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    // Relative error with a floor at 1e-4 of the largest magnitude.
    CHECK(std::abs(b.data[i] - 2.5 * a.data[i]) <= 1e-9 * 2.5 * std::max(a.data[i], 1e-4 * amax));
  }
}

TEST_CASE("spectrogram files") {
  const auto dir = std::filesystem::temp_directory_path() / "vibkit_test_spec";
  std::filesystem::create_directories(dir);
  const auto s = mechano_spectrograms(random_wave(6, 1000), parse_channels("ra1,ra2"));
  write_spectrogram(dir / "s.f32", s);
  CHECK(std::filesystem::file_size(dir / "s.f32") == 4 * s.data.size());
  const auto r = read_spectrogram(dir / "s.f32");
  CHECK(r.channels == s.channels);
  CHECK(r.bins == 251);
  CHECK(r.frames == 121);
  for (std::size_t i = 0; i < s.data.size(); i += 97) {
    CHECK(r.data[i] == static_cast<double>(static_cast<float>(s.data[i])));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("windowed-sinc resampler") {
  const auto x = oracle::tone(100.0, 1000, 1000);
  SUBCASE("identity") {
    CHECK(dsp::resample_stretch(x, 1.0, x.size()) == x);
  }
  SUBCASE("speed-up shifts frequency") {
    const auto y = dsp::resample_stretch(x, 1.15, 870);
    const double f = oracle::dominant_frequency(y, 1000);
    CHECK(std::abs(f - 115.0) <= 1000.0 / 870);
    // In-band level is preserved away from the edges.
    CHECK(oracle::rms(y, 100, 770) == doctest::Approx(std::sqrt(0.5)).epsilon(2e-3));
  }
  SUBCASE("slow-down") {
    const auto y = dsp::resample_stretch(x, 0.9, 1111);
    CHECK(std::abs(oracle::dominant_frequency(y, 1000) - 90.0) <= 1000.0 / 1111);
  }
  SUBCASE("integer positions reproduce samples for step 1") {
    // Non-identity length forces the kernel path.
    const auto y = dsp::resample_stretch(x, 1.0, 900);
    for (std::size_t i = 40; i < 860; ++i) CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-9).scale(1e-12));
  }
}
