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

#ifndef VIBKIT_WAVEFORM_HPP_
#define VIBKIT_WAVEFORM_HPP_

#include <filesystem>
#include <string>
#include <vector>

namespace vibkit {

enum class Units { kNormalized, kG };

std::string to_string(Units u);
Units units_from_string(const std::string& s);

// Peak acceleration (G) that a normalized amplitude of 1 maps to.
inline constexpr double kDefaultDeviceGain = 0.3;

// Uniformly sampled single-axis acceleration signal.
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 1000;
  Units units = Units::kNormalized;

  std::size_t size() const { return samples.size(); }
  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// Throws ValidationError on a non-positive rate or a non-finite sample.
void check_waveform(const Waveform& w);

// Normalized amplitude -> G using the device gain. G input is returned as-is.
Waveform to_acceleration(const Waveform& w,
                         double device_gain = kDefaultDeviceGain);

double rms(const std::vector<double>& x);
double peak(const std::vector<double>& x);

// Raw little-endian float32 samples at `path` plus a JSON sidecar at
// `path + ".json"` holding {sample_rate, units, length}.
void write_waveform(const std::filesystem::path& path, const Waveform& w);
Waveform read_waveform(const std::filesystem::path& path);

// One sample per line.
void write_waveform_csv(const std::filesystem::path& path, const Waveform& w);

std::filesystem::path sidecar_path(const std::filesystem::path& path);

}  // namespace vibkit

#endif  // VIBKIT_WAVEFORM_HPP_
