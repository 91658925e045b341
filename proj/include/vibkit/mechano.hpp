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

#ifndef VIBKIT_MECHANO_HPP_
#define VIBKIT_MECHANO_HPP_

#include <complex>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "vibkit/waveform.hpp"

namespace vibkit {

// Mechanoreceptive channels and their pass bands:
//   RA1 (Meissner)  3-100 Hz      RA2 (Pacinian) 40-500 Hz
//   SA1 (Merkel)    lowpass 5 Hz  SA2 (Ruffini)  15-400 Hz
// kUnfiltered passes the waveform through unchanged.
enum class Channel { kRA1, kRA2, kSA1, kSA2, kUnfiltered };

std::string to_string(Channel c);
Channel channel_from_string(const std::string& s);

// Parses "ra1,ra2", "unfiltered", "ra1,ra2,sa1,sa2"; returns canonical order.
// "unfiltered" cannot be combined with receptor channels.
std::vector<Channel> parse_channels(const std::string& list);
std::string channels_to_string(const std::vector<Channel>& channels);

inline constexpr int kPipelineRate = 1000;
inline constexpr std::size_t kPaddedLength = 6000;
inline constexpr int kStftWindow = 500;  // 0.5 s
inline constexpr int kStftHop = 50;      // 0.05 s
inline constexpr int kStftBins = kStftWindow / 2 + 1;  // 251, 2 Hz apart
inline constexpr int kPaddedFrames =
    static_cast<int>(kPaddedLength) / kStftHop + 1;  // 121

// Zero-phase channel filter; requires a 1 kHz waveform (RateError).
Waveform channel_filter(const Waveform& w, Channel ch);

// One-sided complex STFT, bin-major: data[bin * frames + frame].
struct StftFrames {
  int bins = kStftBins;
  int frames = 0;
  std::vector<std::complex<double>> data;

  std::complex<double> at(int bin, int frame) const {
    return data[static_cast<std::size_t>(bin) * frames + frame];
  }
};

// Centered STFT: reflect-padded by half a window on each side, periodic Hann
// window of 500 samples, hop 50, no extra zero padding. A signal of length L
// yields L / 50 + 1 frames.
StftFrames stft(const Waveform& w);

// The periodic Hann window used by stft().
const std::vector<double>& stft_window();

// C x 251 x 121 linear STFT magnitudes, C-order (channel, freq, time).
struct SpectrogramStack {
  std::vector<Channel> channels;
  int bins = kStftBins;
  int frames = kPaddedFrames;
  std::vector<double> data;

  std::size_t plane() const { return static_cast<std::size_t>(bins) * frames; }
  double at(std::size_t c, int bin, int frame) const {
    return data[c * plane() + static_cast<std::size_t>(bin) * frames + frame];
  }
};

// Zero-pads to 6000 samples, filters each channel, takes |STFT|.
// Throws TooLong for inputs over 6000 samples and RateError off 1 kHz.
SpectrogramStack mechano_spectrograms(const Waveform& w,
                                      const std::vector<Channel>& channels);

// Little-endian float32 (channel, freq, time) plus a JSON sidecar
// {channels, shape, window_s, hop_s}.
void write_spectrogram(const std::filesystem::path& path,
                       const SpectrogramStack& s);
SpectrogramStack read_spectrogram(const std::filesystem::path& path);

}  // namespace vibkit

#endif  // VIBKIT_MECHANO_HPP_
