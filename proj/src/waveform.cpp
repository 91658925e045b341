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

#include "vibkit/waveform.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "vibkit/binio.hpp"
#include "vibkit/error.hpp"

namespace vibkit {

std::string to_string(Units u) { return u == Units::kG ? "G" : "normalized"; }

Units units_from_string(const std::string& s) {
  if (s == "G" || s == "g") return Units::kG;
  if (s == "normalized") return Units::kNormalized;
  throw SchemaError("unknown units '" + s + "' (expected G or normalized)");
}

void check_waveform(const Waveform& w) {
  if (w.sample_rate <= 0) {
    throw ValidationError("sample_rate must be positive, got " +
                          std::to_string(w.sample_rate));
  }
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    if (!std::isfinite(w.samples[i])) {
      throw ValidationError("non-finite sample at index " + std::to_string(i));
    }
  }
}

Waveform to_acceleration(const Waveform& w, double device_gain) {
  if (w.units == Units::kG) return w;
  Waveform out = w;
  for (double& v : out.samples) v *= device_gain;
  out.units = Units::kG;
  return out;
}

double rms(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

double peak(const std::vector<double>& x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}


void write_waveform(const std::filesystem::path& path, const Waveform& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  std::vector<float> f(w.samples.begin(), w.samples.end());
  binio::write_f32_le(out, f);
  nlohmann::json side = {{"sample_rate", w.sample_rate},
                         {"units", to_string(w.units)},
                         {"length", w.samples.size()}};
  std::ofstream js(sidecar_path(path));
  if (!js) throw IoError("cannot write sidecar for " + path.string());
  js << side.dump(2) << "\n";
}

Waveform read_waveform(const std::filesystem::path& path) {
  std::ifstream js(sidecar_path(path));
  if (!js) throw IoError("missing sidecar " + sidecar_path(path).string());
  nlohmann::json side;
  try {
    js >> side;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("bad waveform sidecar: " + std::string(e.what()));
  }
  Waveform w;
  std::size_t length = 0;
  try {
    w.sample_rate = side.at("sample_rate").get<int>();
    w.units = units_from_string(side.value("units", std::string("G")));
    length = side.at("length").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("bad waveform sidecar: " + std::string(e.what()));
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<float> f(length);
  if (!binio::read_f32_le(in, f)) {
    throw IoError(path.string() + ": expected " + std::to_string(length) +
                  " float32 samples");
  }
  w.samples.assign(f.begin(), f.end());
  check_waveform(w);
  return w;
}

void write_waveform_csv(const std::filesystem::path& path, const Waveform& w) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.precision(17);
  for (double v : w.samples) out << v << "\n";
}

}  // namespace vibkit
