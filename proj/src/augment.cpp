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

#include "vibkit/augment.hpp"

#include <algorithm>
#include <cmath>

#include "vibkit/error.hpp"
#include "vibkit/resample.hpp"

namespace vibkit {
namespace {

void check_bound(const char* what, double value, double bound) {
  if (!std::isfinite(value) || std::abs(value) > bound) {
    throw BoundViolation(std::string(what) + " " + std::to_string(value) +
                         " exceeds bound " + std::to_string(bound));
  }
}

std::string compact(AugmentMethod m) {
  std::string s;
  if (m.has(kNoise)) s += "N";
  if (m.has(kSpeed)) s += "S";
  if (m.has(kAmplitude)) s += "A";
  return s;
}

}  // namespace

void AugmentConfig::check() const {
  if (!(noise_bound >= 0) || !(speed_bound >= 0) || !(amplitude_bound >= 0)) {
    throw ConfigError("augmentation bounds must be >= 0");
  }
  if (speed_bound >= 1.0) throw ConfigError("speed_bound must be < 1");
  if (duration_change_cap && !(*duration_change_cap >= 0)) {
    throw ConfigError("duration_change_cap must be >= 0");
  }
  if (repetitions < 1) throw ConfigError("repetitions must be >= 1");
}

std::string AugmentMethod::name() const {
  std::string s;
  auto add = [&](const char* part) {
    if (!s.empty()) s += "+";
    s += part;
  };
  if (has(kNoise)) add("N");
  if (has(kSpeed)) add("S");
  if (has(kAmplitude)) add("A");
  return s;
}

AugmentMethod AugmentMethod::parse(const std::string& name) {
  for (AugmentMethod m : all_methods()) {
    if (m.name() == name || compact(m) == name) return m;
  }
  throw SchemaError("unknown augmentation method '" + name + "'");
}

const std::array<AugmentMethod, 7>& all_methods() {
  static constexpr std::array<AugmentMethod, 7> kMethods = {
      AugmentMethod(kNoise),
      AugmentMethod(kSpeed),
      AugmentMethod(kAmplitude),
      AugmentMethod(kNoise | kSpeed),
      AugmentMethod(kNoise | kAmplitude),
      AugmentMethod(kSpeed | kAmplitude),
      AugmentMethod(kNoise | kSpeed | kAmplitude)};
  return kMethods;
}

Waveform inject_noise(const Waveform& w, double a, Rng& rng, double bound) {
  check_bound("noise amplitude", a, bound);
  const double amp = std::abs(a);
  Waveform out = w;
  if (amp == 0.0) return out;
  for (double& v : out.samples) {
    const double in = v;
    double y = in + rng.uniform(-amp, amp);
    // Rounding of the sum can overshoot by an ulp; pull back inside.
    while (std::abs(y - in) > amp) y = std::nextafter(y, in);
    v = y;
  }
  return out;
}

Waveform change_speed(const Waveform& w, double b, double bound) {
  check_bound("speed change", b, bound);
  if (b == 0.0) return w;
  const double step = 1.0 + b;
  const auto out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(w.samples.size()) / step));
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.units = w.units;
  out.samples = dsp::resample_stretch(w.samples, step, out_len);
  return out;
}

Waveform change_amplitude(const Waveform& w, double c, double bound) {
  check_bound("amplitude change", c, bound);
  Waveform out = w;
  if (c == 0.0) return out;
  const double scale = 1.0 + c;
  for (double& v : out.samples) v *= scale;
  return out;
}

double effective_speed_bound(const AugmentConfig& cfg, double duration_s) {
  if (!cfg.duration_change_cap || duration_s <= 0.0) return cfg.speed_bound;
  const double cap = *cfg.duration_change_cap;
  return std::min(cfg.speed_bound, cap / (duration_s + cap));
}

AugmentResult augment_record(const Waveform& w, AugmentMethod method,
                             const AugmentConfig& cfg, Rng& rng) {
  AugmentResult r;
  if (method.has(kNoise)) r.draw.a = rng.uniform(0.0, cfg.noise_bound);
  if (method.has(kSpeed)) {
    const double eff = effective_speed_bound(cfg, w.duration());
    r.draw.b = rng.uniform(-eff, eff);
  }
  if (method.has(kAmplitude)) {
    r.draw.c = rng.uniform(-cfg.amplitude_bound, cfg.amplitude_bound);
  }
  r.waveform = w;
  if (r.draw.a) r.waveform = inject_noise(r.waveform, *r.draw.a, rng, cfg.noise_bound);
  if (r.draw.b) r.waveform = change_speed(r.waveform, *r.draw.b, cfg.speed_bound);
  if (r.draw.c) {
    r.waveform = change_amplitude(r.waveform, *r.draw.c, cfg.amplitude_bound);
  }
  return r;
}

std::size_t augmented_count(std::size_t n, int repetitions) {
  return n * (7 * static_cast<std::size_t>(repetitions) + 1);
}

std::vector<AugmentedRecord> augment_dataset(
    const std::vector<std::pair<std::string, Waveform>>& records,
    const AugmentConfig& cfg) {
  cfg.check();
  if (records.empty()) throw ConfigError("augment_dataset: no input records");
  std::vector<AugmentedRecord> out;
  out.reserve(augmented_count(records.size(), cfg.repetitions));
  for (const auto& [id, w] : records) {
    AugmentedRecord orig;
    orig.out_id = id;
    orig.src_id = id;
    orig.waveform = w;
    out.push_back(std::move(orig));
    for (AugmentMethod m : all_methods()) {
      for (int rep = 1; rep <= cfg.repetitions; ++rep) {
        AugmentedRecord rec;
        rec.src_id = id;
        rec.method = m;
        rec.out_id = id + "__" + compact(m) + "__r" + std::to_string(rep);
        rec.seed_path = std::to_string(cfg.rng_seed) + "/" + id + "/" +
                        compact(m) + "/" + std::to_string(rep);
        Rng rng(derive_seed(cfg.rng_seed, rec.seed_path));
        AugmentResult res = augment_record(w, m, cfg, rng);
        rec.draw = res.draw;
        rec.waveform = std::move(res.waveform);
        out.push_back(std::move(rec));
      }
    }
  }
  return out;
}

nlohmann::json provenance_json(const AugmentedRecord& r) {
  auto opt = [](const std::optional<double>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  return {{"out_id", r.out_id},
          {"src_id", r.src_id},
          {"method", r.method ? r.method->name() : "original"},
          {"a", opt(r.draw.a)},
          {"b", opt(r.draw.b)},
          {"c", opt(r.draw.c)},
          {"seed_path", r.seed_path}};
}

}  // namespace vibkit
