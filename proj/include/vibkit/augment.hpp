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

#ifndef VIBKIT_AUGMENT_HPP_
#define VIBKIT_AUGMENT_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "vibkit/random.hpp"
#include "vibkit/waveform.hpp"

namespace vibkit {

// Perception-derived bounds. Noise stays under the absolute limen near
// 200 Hz; speed and amplitude stay under the frequency and intensity JNDs.
struct AugmentConfig {
  double noise_bound = 0.0006;    // G
  double speed_bound = 0.15;      // ratio
  std::optional<double> duration_change_cap;  // seconds, e.g. 0.010
  double amplitude_bound = 0.10;  // ratio
  int repetitions = 2;
  std::uint64_t rng_seed = 0;

  void check() const;
};

// Bit flags for the three operators.
enum AugmentOp : unsigned { kNoise = 1u, kSpeed = 2u, kAmplitude = 4u };

// One of the seven non-empty operator combinations.
class AugmentMethod {
 public:
  constexpr explicit AugmentMethod(unsigned ops) : ops_(ops) {}

  unsigned ops() const { return ops_; }
  bool has(AugmentOp op) const { return (ops_ & op) != 0; }
  // "N", "S", "A", "N+S", "N+A", "S+A", "N+S+A".
  std::string name() const;
  static AugmentMethod parse(const std::string& name);

  friend bool operator==(AugmentMethod, AugmentMethod) = default;

 private:
  unsigned ops_;
};

// Listed singles first, then pairs, then the triple.
const std::array<AugmentMethod, 7>& all_methods();

// Parameters actually drawn for one augmented record. Absent when the
// corresponding operator was not applied.
struct AugmentDraw {
  std::optional<double> a;  // noise amplitude (G)
  std::optional<double> b;  // speed change ratio
  std::optional<double> c;  // amplitude change ratio
};

// Adds per-sample uniform noise in [-|a|, |a|]. Each output deviates from
// its input by at most |a|, exactly, in double precision.
Waveform inject_noise(const Waveform& w, double a, Rng& rng,
                      double bound = AugmentConfig{}.noise_bound);

// Plays the signal at (1 + b) times the original speed: duration is divided
// by (1 + b) and every frequency multiplied by it.
Waveform change_speed(const Waveform& w, double b,
                      double bound = AugmentConfig{}.speed_bound);

// Scales every sample by (1 + c).
Waveform change_amplitude(const Waveform& w, double c,
                          double bound = AugmentConfig{}.amplitude_bound);

// Largest admissible |b| for a signal of the given duration. With the
// duration cap enabled, |b| is further limited so the duration changes by
// at most the cap in either direction.
double effective_speed_bound(const AugmentConfig& cfg, double duration_s);

struct AugmentResult {
  Waveform waveform;
  AugmentDraw draw;
};

// Applies the method's operators once each, in the order noise, speed,
// amplitude, with parameters drawn uniformly inside the bounds.
AugmentResult augment_record(const Waveform& w, AugmentMethod method,
                             const AugmentConfig& cfg, Rng& rng);

struct AugmentedRecord {
  std::string out_id;
  std::string src_id;
  std::optional<AugmentMethod> method;  // empty for the original
  AugmentDraw draw;
  std::string seed_path;
  Waveform waveform;
};

// n * (7 * repetitions + 1).
std::size_t augmented_count(std::size_t n, int repetitions);

// Keeps every original and emits 7 * repetitions variants per record. Each
// variant's random stream derives from (seed, record id, method, repetition).
std::vector<AugmentedRecord> augment_dataset(
    const std::vector<std::pair<std::string, Waveform>>& records,
    const AugmentConfig& cfg);

// One provenance line: {out_id, src_id, method, a, b, c, seed_path}.
nlohmann::json provenance_json(const AugmentedRecord& r);

}  // namespace vibkit

#endif  // VIBKIT_AUGMENT_HPP_
