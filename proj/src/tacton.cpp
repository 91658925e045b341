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

#include "vibkit/tacton.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "vibkit/error.hpp"
#include "vibkit/filter.hpp"

namespace vibkit {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

bool finite(double v) { return std::isfinite(v); }

void check_track(const std::vector<Breakpoint>& track, const std::string& name,
                 double duration, bool unit_range,
                 std::vector<std::string>& violations) {
  if (track.size() < 2) {
    violations.push_back(name + ": at least 2 breakpoints");
    return;
  }
  for (const Breakpoint& b : track) {
    if (!finite(b.t) || !finite(b.value)) {
      violations.push_back(name + ": finite values");
      return;
    }
  }
  for (std::size_t i = 1; i < track.size(); ++i) {
    if (!(track[i].t > track[i - 1].t)) {
      violations.push_back(name + ": t strictly increasing");
      break;
    }
  }
  if (track.front().t != 0.0) {
    violations.push_back(name + ": first breakpoint at t = 0");
  }
  if (std::abs(track.back().t - duration) > 1e-9) {
    violations.push_back(name + ": last breakpoint at t = duration");
  }
  for (const Breakpoint& b : track) {
    if (unit_range && (b.value < 0.0 || b.value > 1.0)) {
      violations.push_back(name + ": values in [0, 1]");
      break;
    }
    if (!unit_range && !(b.value > 0.0)) {
      violations.push_back(name + ": values > 0");
      break;
    }
  }
}

void check_amplitude_carrier(double amplitude, double carrier,
                             ValidationReport& r) {
  if (!finite(amplitude) || amplitude < 0.0 || amplitude > 1.0) {
    r.violations.push_back("amplitude in [0, 1]");
  }
  if (!finite(carrier) || !(carrier > 0.0)) {
    r.violations.push_back("carrier_freq > 0");
  }
}

void band_warning(double hz, ValidationReport& r) {
  if (hz < kModelBandLowHz || hz > kModelBandHighHz) {
    std::ostringstream msg;
    msg << "carrier frequency " << hz << " Hz outside the model band ["
        << kModelBandLowHz << ", " << kModelBandHighHz
        << "] Hz; predictions are less reliable";
    r.warnings.push_back(msg.str());
  }
}

void peak_warning(double envelope_peak, double gain, ValidationReport& r) {
  const double g = envelope_peak * gain;
  if (g > kPeakWarningG) {
    std::ostringstream msg;
    msg << "peak acceleration " << g << " G exceeds " << kPeakWarningG << " G";
    r.warnings.push_back(msg.str());
  }
}

// Linear interpolation; holds the end values outside the track.
double interp(const std::vector<Breakpoint>& track, double t) {
  if (t <= track.front().t) return track.front().value;
  if (t >= track.back().t) return track.back().value;
  auto it = std::upper_bound(
      track.begin(), track.end(), t,
      [](double v, const Breakpoint& b) { return v < b.t; });
  const Breakpoint& hi = *it;
  const Breakpoint& lo = *(it - 1);
  const double f = (t - lo.t) / (hi.t - lo.t);
  return lo.value + f * (hi.value - lo.value);
}

std::size_t sample_count(double duration, int rate) {
  return static_cast<std::size_t>(std::llround(duration * rate));
}

}  // namespace

std::string family_name(const TactonSpec& spec) {
  return std::visit(Overloaded{[](const SinusoidalSpec&) { return "sinusoidal"; },
                               [](const RhythmicSpec&) { return "rhythmic"; },
                               [](const ComplexSpec&) { return "complex"; }},
                    spec);
}

double spec_duration(const TactonSpec& spec) {
  return std::visit(Overloaded{[](const SinusoidalSpec& s) { return s.duration; },
                               [](const RhythmicSpec& s) { return s.duration(); },
                               [](const ComplexSpec& s) { return s.duration; }},
                    spec);
}

ValidationReport validate(const TactonSpec& spec, double device_gain) {
  ValidationReport r;
  std::visit(
      Overloaded{
          [&](const SinusoidalSpec& s) {
            check_amplitude_carrier(s.amplitude, s.carrier_freq, r);
            if (!finite(s.envelope_freq) || s.envelope_freq < 0.0) {
              r.violations.push_back("envelope_freq >= 0");
            }
            if (!finite(s.duration) || !(s.duration > 0.0)) {
              r.violations.push_back("duration > 0");
            }
            if (finite(s.carrier_freq) && s.carrier_freq > 0.0) {
              band_warning(s.carrier_freq, r);
            }
            peak_warning(s.amplitude, device_gain, r);
          },
          [&](const RhythmicSpec& s) {
            check_amplitude_carrier(s.amplitude, s.carrier_freq, r);
            if (s.pulses.empty()) r.violations.push_back("pulses non-empty");
            for (int p : s.pulses) {
              if (p != 0 && p != 1) {
                r.violations.push_back("pulse values in {0, 1}");
                break;
              }
            }
            if (finite(s.carrier_freq) && s.carrier_freq > 0.0) {
              band_warning(s.carrier_freq, r);
            }
            peak_warning(s.amplitude, device_gain, r);
          },
          [&](const ComplexSpec& s) {
            if (!finite(s.duration) || !(s.duration > 0.0)) {
              r.violations.push_back("duration > 0");
            }
            check_track(s.envelope_track, "envelope_track", s.duration, true,
                        r.violations);
            check_track(s.frequency_track, "frequency_track", s.duration, false,
                        r.violations);
            double lo = INFINITY, hi = -INFINITY, env = 0.0;
            for (const Breakpoint& b : s.frequency_track) {
              lo = std::min(lo, b.value);
              hi = std::max(hi, b.value);
            }
            for (const Breakpoint& b : s.envelope_track) {
              env = std::max(env, b.value);
            }
            if (!s.frequency_track.empty() && lo > 0.0) {
              band_warning(lo, r);
              if (hi != lo) band_warning(hi, r);
            }
            peak_warning(env, device_gain, r);
          }},
      spec);
  r.ok = r.violations.empty();
  return r;
}

Waveform synthesize(const TactonSpec& spec, int sample_rate) {
  if (sample_rate <= 0) {
    throw ValidationError("sample_rate must be positive");
  }
  const ValidationReport report = validate(spec);
  if (!report.ok) {
    std::string msg = "invalid tacton spec:";
    for (const auto& v : report.violations) msg += " [" + v + "]";
    throw ValidationError(msg);
  }
  Waveform w;
  w.sample_rate = sample_rate;
  w.units = Units::kNormalized;
  const double dt = 1.0 / sample_rate;

  std::visit(
      Overloaded{
          [&](const SinusoidalSpec& s) {
            const std::size_t n = sample_count(s.duration, sample_rate);
            w.samples.resize(n);
            for (std::size_t k = 0; k < n; ++k) {
              const double t = static_cast<double>(k) * dt;
              const double env =
                  s.envelope_freq == 0.0
                      ? s.amplitude
                      : s.amplitude * std::abs(std::sin(kTwoPi * s.envelope_freq * t));
              w.samples[k] = env * std::sin(kTwoPi * s.carrier_freq * t);
            }
          },
          [&](const RhythmicSpec& s) {
            const double slot = kPulseSlotSeconds * sample_rate;
            const std::size_t n = static_cast<std::size_t>(
                std::llround(static_cast<double>(s.pulses.size()) * slot));
            w.samples.assign(n, 0.0);
            for (std::size_t p = 0; p < s.pulses.size(); ++p) {
              if (s.pulses[p] == 0) continue;
              const auto begin = static_cast<std::size_t>(
                  std::llround(static_cast<double>(p) * slot));
              const auto end = std::min(
                  n, static_cast<std::size_t>(
                         std::llround(static_cast<double>(p + 1) * slot)));
              for (std::size_t k = begin; k < end; ++k) {
                const double t = static_cast<double>(k) * dt;
                w.samples[k] = s.amplitude * std::sin(kTwoPi * s.carrier_freq * t);
              }
            }
          },
          [&](const ComplexSpec& s) {
            const std::size_t n = sample_count(s.duration, sample_rate);
            w.samples.resize(n);
            double phase = 0.0;
            double prev_f = interp(s.frequency_track, 0.0);
            for (std::size_t k = 0; k < n; ++k) {
              const double t = static_cast<double>(k) * dt;
              const double f = interp(s.frequency_track, t);
              if (k > 0) phase += kTwoPi * dt * 0.5 * (prev_f + f);
              prev_f = f;
              w.samples[k] = interp(s.envelope_track, t) * std::sin(phase);
            }
          }},
      spec);
  return w;
}

Waveform downsample(const Waveform& w, int target_rate) {
  if (target_rate <= 0 || w.sample_rate % target_rate != 0) {
    throw UnsupportedRatio("cannot downsample " + std::to_string(w.sample_rate) +
                           " Hz to " + std::to_string(target_rate) +
                           " Hz: target must divide the source rate");
  }
  if (target_rate == w.sample_rate) return w;
  const std::size_t factor = static_cast<std::size_t>(w.sample_rate / target_rate);
  const dsp::Sos lp = dsp::butter_lowpass(8, 0.45 * target_rate, w.sample_rate);
  const std::vector<double> filtered = dsp::sosfiltfilt(lp, w.samples);
  Waveform out;
  out.sample_rate = target_rate;
  out.units = w.units;
  out.samples.reserve((filtered.size() + factor - 1) / factor);
  for (std::size_t i = 0; i < filtered.size(); i += factor) {
    out.samples.push_back(filtered[i]);
  }
  return out;
}

Waveform zero_pad(const Waveform& w, std::size_t target_len) {
  if (w.samples.size() > target_len) {
    throw TooLong("waveform has " + std::to_string(w.samples.size()) +
                  " samples, more than the padded length " +
                  std::to_string(target_len));
  }
  Waveform out = w;
  out.samples.resize(target_len, 0.0);
  return out;
}

nlohmann::json to_json(const TactonSpec& spec) {
  using nlohmann::json;
  auto track = [](const std::vector<Breakpoint>& t) {
    json a = json::array();
    for (const Breakpoint& b : t) a.push_back({{"t", b.t}, {"value", b.value}});
    return a;
  };
  return std::visit(
      Overloaded{[](const SinusoidalSpec& s) -> json {
                   return {{"type", "sinusoidal"},
                           {"amplitude", s.amplitude},
                           {"carrier_freq", s.carrier_freq},
                           {"envelope_freq", s.envelope_freq},
                           {"duration", s.duration}};
                 },
                 [](const RhythmicSpec& s) -> json {
                   return {{"type", "rhythmic"},
                           {"amplitude", s.amplitude},
                           {"carrier_freq", s.carrier_freq},
                           {"pulses", s.pulses}};
                 },
                 [&](const ComplexSpec& s) -> json {
                   return {{"type", "complex"},
                           {"envelope_track", track(s.envelope_track)},
                           {"frequency_track", track(s.frequency_track)},
                           {"duration", s.duration}};
                 }},
      spec);
}

TactonSpec spec_from_json(const nlohmann::json& j) {
  auto track = [](const nlohmann::json& a) {
    std::vector<Breakpoint> out;
    for (const auto& b : a) {
      out.push_back({b.at("t").get<double>(), b.at("value").get<double>()});
    }
    return out;
  };
  try {
    const std::string type = j.at("type").get<std::string>();
    if (type == "sinusoidal") {
      SinusoidalSpec s;
      s.amplitude = j.at("amplitude").get<double>();
      s.carrier_freq = j.at("carrier_freq").get<double>();
      s.envelope_freq = j.value("envelope_freq", 0.0);
      s.duration = j.at("duration").get<double>();
      return s;
    }
    if (type == "rhythmic") {
      RhythmicSpec s;
      s.amplitude = j.at("amplitude").get<double>();
      s.carrier_freq = j.at("carrier_freq").get<double>();
      s.pulses = j.at("pulses").get<std::vector<int>>();
      return s;
    }
    if (type == "complex") {
      ComplexSpec s;
      s.envelope_track = track(j.at("envelope_track"));
      s.frequency_track = track(j.at("frequency_track"));
      s.duration = j.at("duration").get<double>();
      return s;
    }
    throw SchemaError("unknown tacton type '" + type +
                      "' (expected sinusoidal, rhythmic or complex)");
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed tacton spec: ") + e.what());
  }
}

nlohmann::json to_json(const ValidationReport& r) {
  return {{"ok", r.ok}, {"violations", r.violations}, {"warnings", r.warnings}};
}

}  // namespace vibkit
