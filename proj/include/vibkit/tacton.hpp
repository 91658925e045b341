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

#ifndef VIBKIT_TACTON_HPP_
#define VIBKIT_TACTON_HPP_

#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "vibkit/waveform.hpp"

namespace vibkit {

// Length of one rhythmic pulse slot in seconds.
inline constexpr double kPulseSlotSeconds = 0.03125;

// Carrier band the model was trained on; specs outside get a warning.
inline constexpr double kModelBandLowHz = 80.0;
inline constexpr double kModelBandHighHz = 230.0;
inline constexpr double kPeakWarningG = 0.3;

// E(t) = A |sin(2 pi f_e t)| (or A when f_e == 0), F(t) = f_c.
struct SinusoidalSpec {
  double amplitude = 1.0;
  double carrier_freq = 155.0;
  double envelope_freq = 0.0;
  double duration = 1.0;
};

// E(t) = A R(floor(t / 31.25 ms)), F(t) = f_c.
struct RhythmicSpec {
  double amplitude = 1.0;
  double carrier_freq = 155.0;
  std::vector<int> pulses;

  double duration() const { return pulses.size() * kPulseSlotSeconds; }
};

struct Breakpoint {
  double t = 0.0;
  double value = 0.0;
};

// Piecewise-linear envelope and frequency tracks.
struct ComplexSpec {
  std::vector<Breakpoint> envelope_track;
  std::vector<Breakpoint> frequency_track;
  double duration = 1.0;
};

using TactonSpec = std::variant<SinusoidalSpec, RhythmicSpec, ComplexSpec>;

std::string family_name(const TactonSpec& spec);
double spec_duration(const TactonSpec& spec);

struct ValidationReport {
  bool ok = true;
  std::vector<std::string> violations;
  std::vector<std::string> warnings;
};

ValidationReport validate(const TactonSpec& spec,
                          double device_gain = kDefaultDeviceGain);

// Samples E(t) sin(phi(t)) at t = k / sample_rate in normalized amplitude.
// Throws ValidationError listing the violated invariants.
Waveform synthesize(const TactonSpec& spec, int sample_rate);

// Anti-aliased decimation by an integer factor. Throws UnsupportedRatio when
// target_rate does not divide the source rate.
Waveform downsample(const Waveform& w, int target_rate);

// Appends zeros up to target_len. Throws TooLong instead of truncating.
Waveform zero_pad(const Waveform& w, std::size_t target_len);

nlohmann::json to_json(const TactonSpec& spec);
// Throws SchemaError on a malformed document.
TactonSpec spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ValidationReport& r);

}  // namespace vibkit

#endif  // VIBKIT_TACTON_HPP_
