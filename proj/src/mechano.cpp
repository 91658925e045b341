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

#include "vibkit/mechano.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <numbers>
#include <sstream>

#include "vibkit/binio.hpp"
#include "vibkit/error.hpp"
#include "vibkit/filter.hpp"
#include "vibkit/tacton.hpp"

namespace vibkit {
namespace {

constexpr int kFilterOrder = 4;

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

// Planning is not thread safe; executing a plan on other aligned buffers is.
class Fft500 {
 public:
  static const Fft500& get() {
    static const Fft500 instance;
    return instance;
  }

  void run(double* in, fftw_complex* out) const {
    fftw_execute_dft_r2c(plan_, in, out);
  }

 private:
  Fft500() {
    std::unique_ptr<double, FftwFree> in(fftw_alloc_real(kStftWindow));
    std::unique_ptr<fftw_complex, FftwFree> out(fftw_alloc_complex(kStftBins));
    plan_ = fftw_plan_dft_r2c_1d(kStftWindow, in.get(), out.get(),
                                 FFTW_ESTIMATE);
  }
  fftw_plan plan_;
};

const dsp::Sos& channel_sos(Channel ch) {
  static const dsp::Sos ra1 = dsp::butter_bandpass(kFilterOrder, 3.0, 100.0, kPipelineRate);
  // 500 Hz is Nyquist at 1 kHz, so the RA2 band is a highpass.
  static const dsp::Sos ra2 = dsp::butter_highpass(kFilterOrder, 40.0, kPipelineRate);
  static const dsp::Sos sa1 = dsp::butter_lowpass(kFilterOrder, 5.0, kPipelineRate);
  static const dsp::Sos sa2 = dsp::butter_bandpass(kFilterOrder, 15.0, 400.0, kPipelineRate);
  switch (ch) {
    case Channel::kRA1: return ra1;
    case Channel::kRA2: return ra2;
    case Channel::kSA1: return sa1;
    case Channel::kSA2: return sa2;
    case Channel::kUnfiltered: break;
  }
  throw std::logic_error("unfiltered channel has no filter");
}

void require_pipeline_rate(const Waveform& w) {
  if (w.sample_rate != kPipelineRate) {
    throw RateError("expected a " + std::to_string(kPipelineRate) +
                    " Hz waveform, got " + std::to_string(w.sample_rate) + " Hz");
  }
}

// numpy-style "reflect" index (edge sample not repeated).
std::size_t reflect_index(long i, long n) {
  if (n == 1) return 0;
  const long period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < n ? i : period - i);
}

}  // namespace

std::string to_string(Channel c) {
  switch (c) {
    case Channel::kRA1: return "ra1";
    case Channel::kRA2: return "ra2";
    case Channel::kSA1: return "sa1";
    case Channel::kSA2: return "sa2";
    case Channel::kUnfiltered: return "unfiltered";
  }
  return "?";
}

Channel channel_from_string(const std::string& s) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(),
                 [](unsigned char ch) { return std::tolower(ch); });
  for (Channel c : {Channel::kRA1, Channel::kRA2, Channel::kSA1, Channel::kSA2,
                    Channel::kUnfiltered}) {
    if (to_string(c) == l) return c;
  }
  throw SchemaError("unknown channel '" + s + "'");
}

std::vector<Channel> parse_channels(const std::string& list) {
  std::vector<Channel> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const Channel c = channel_from_string(item);
    if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
  }
  if (out.empty()) throw SchemaError("empty channel list");
  const bool unfiltered =
      std::find(out.begin(), out.end(), Channel::kUnfiltered) != out.end();
  if (unfiltered && out.size() > 1) {
    throw SchemaError("'unfiltered' cannot be combined with other channels");
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string channels_to_string(const std::vector<Channel>& channels) {
  std::string s;
  for (Channel c : channels) {
    if (!s.empty()) s += ",";
    s += to_string(c);
  }
  return s;
}

Waveform channel_filter(const Waveform& w, Channel ch) {
  require_pipeline_rate(w);
  if (ch == Channel::kUnfiltered) return w;
  Waveform out = w;
  out.samples = dsp::sosfiltfilt(channel_sos(ch), w.samples);
  return out;
}

const std::vector<double>& stft_window() {
  static const std::vector<double> window = [] {
    std::vector<double> h(kStftWindow);
    for (int n = 0; n < kStftWindow; ++n) {
      h[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / kStftWindow);
    }
    return h;
  }();
  return window;
}

StftFrames stft(const Waveform& w) {
  require_pipeline_rate(w);
  const long n = static_cast<long>(w.samples.size());
  StftFrames out;
  out.frames = static_cast<int>(n / kStftHop + 1);
  out.data.assign(static_cast<std::size_t>(kStftBins) * out.frames, {0.0, 0.0});
  if (n == 0) return out;

  const std::vector<double>& window = stft_window();
  std::unique_ptr<double, FftwFree> buf(fftw_alloc_real(kStftWindow));
  std::unique_ptr<fftw_complex, FftwFree> spec(fftw_alloc_complex(kStftBins));
  const long half = kStftWindow / 2;
  for (int f = 0; f < out.frames; ++f) {
    const long start = static_cast<long>(f) * kStftHop - half;
    for (int k = 0; k < kStftWindow; ++k) {
      buf.get()[k] = window[k] * w.samples[reflect_index(start + k, n)];
    }
    Fft500::get().run(buf.get(), spec.get());
    for (int b = 0; b < kStftBins; ++b) {
      out.data[static_cast<std::size_t>(b) * out.frames + f] = {spec.get()[b][0],
                                                              spec.get()[b][1]};
    }
  }
  return out;
}

SpectrogramStack mechano_spectrograms(const Waveform& w,
                                      const std::vector<Channel>& channels) {
  require_pipeline_rate(w);
  if (channels.empty()) throw SchemaError("no spectrogram channels requested");
  const Waveform padded = zero_pad(w, kPaddedLength);
  SpectrogramStack s;
  s.channels = channels;
  s.data.resize(channels.size() * s.plane());
  for (std::size_t c = 0; c < channels.size(); ++c) {
    const StftFrames fr = stft(channel_filter(padded, channels[c]));
    for (std::size_t i = 0; i < s.plane(); ++i) {
      s.data[c * s.plane() + i] = std::abs(fr.data[i]);
    }
  }
  return s;
}

void write_spectrogram(const std::filesystem::path& path,
                       const SpectrogramStack& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  std::vector<float> f(s.data.begin(), s.data.end());
  binio::write_f32_le(out, f);
  std::vector<std::string> names;
  for (Channel c : s.channels) names.push_back(to_string(c));
  nlohmann::json side = {
      {"channels", names},
      {"shape", {s.channels.size(), s.bins, s.frames}},
      {"window_s", kStftWindow / static_cast<double>(kPipelineRate)},
      {"hop_s", kStftHop / static_cast<double>(kPipelineRate)}};
  std::ofstream js(sidecar_path(path));
  if (!js) throw IoError("cannot write sidecar for " + path.string());
  js << side.dump(2) << "\n";
}

SpectrogramStack read_spectrogram(const std::filesystem::path& path) {
  std::ifstream js(sidecar_path(path));
  if (!js) throw IoError("missing sidecar " + sidecar_path(path).string());
  SpectrogramStack s;
  try {
    nlohmann::json side;
    js >> side;
    for (const auto& c : side.at("channels")) {
      s.channels.push_back(channel_from_string(c.get<std::string>()));
    }
    const auto shape = side.at("shape").get<std::vector<int>>();
    if (shape.size() != 3 || shape[0] != static_cast<int>(s.channels.size())) {
      throw SchemaError("spectrogram shape does not match channel list");
    }
    s.bins = shape[1];
    s.frames = shape[2];
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("bad spectrogram sidecar: " + std::string(e.what()));
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<float> f(s.channels.size() * s.plane());
  if (!binio::read_f32_le(in, f)) {
    throw IoError(path.string() + ": truncated spectrogram data");
  }
  s.data.assign(f.begin(), f.end());
  return s;
}

}  // namespace vibkit
