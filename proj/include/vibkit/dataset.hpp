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

#ifndef VIBKIT_DATASET_HPP_
#define VIBKIT_DATASET_HPP_

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "vibkit/tacton.hpp"
#include "vibkit/waveform.hpp"

namespace vibkit {

// Roughness, valence, arousal on the 0-100 scale.
struct RatingTriple {
  double roughness = 0.0;
  double valence = 0.0;
  double arousal = 0.0;

  std::array<double, 3> as_array() const { return {roughness, valence, arousal}; }
  static RatingTriple from_array(const std::array<double, 3>& a) {
    return {a[0], a[1], a[2]};
  }
  RatingTriple clamped() const;
  friend bool operator==(const RatingTriple&, const RatingTriple&) = default;
};

inline constexpr std::array<const char*, 3> kDimensionNames = {"roughness", "valence",
                                                               "arousal"};

// Throws ValidationError unless every value lies in [0, 100].
void check_ratings(const RatingTriple& r);

nlohmann::json to_json(const RatingTriple& r);  // {"r", "v", "a"}
RatingTriple rating_from_json(const nlohmann::json& j);

struct DatasetRecord {
  std::string record_id;
  std::string tacton_id;
  std::string source = "synthetic";  // "synthetic" or "external"
  std::optional<std::string> device_label;
  std::filesystem::path waveform_path;
  std::optional<std::filesystem::path> spectrogram_path;
  RatingTriple ratings;
  std::optional<RatingTriple> rating_sd;
  // Operator combination for augmented variants ("N+S", ...).
  std::optional<std::string> augmentation;
};

nlohmann::json to_json(const DatasetRecord& r);
// Relative paths resolve against `base`. Throws SchemaError with the field
// name on malformed input and ValidationError on out-of-range ratings.
DatasetRecord record_from_json(const nlohmann::json& j,
                               const std::filesystem::path& base = {});

// JSON lines, one record per line. Paths are written as given.
void write_manifest(const std::filesystem::path& path,
                    const std::vector<DatasetRecord>& records);
std::vector<DatasetRecord> read_manifest(const std::filesystem::path& path);

enum class LabelAggregation { kPerDevice, kGlobalMean };
LabelAggregation label_aggregation_from_string(const std::string& s);

// kGlobalMean replaces each record's ratings with the mean over all records
// sharing its tacton_id; kPerDevice leaves them untouched.
std::vector<DatasetRecord> aggregate_labels(std::vector<DatasetRecord> records,
                                            LabelAggregation mode);

// Features behind the synthetic rating oracle.
struct OracleFeatures {
  double envelope_index = 0.0;  // e in [0, 1]
  double centroid = 0.0;        // s, spectral centroid / 500 Hz
  double magnitude = 0.0;       // m, RMS / device-gain peak
};

OracleFeatures oracle_features(const Waveform& w);
RatingTriple oracle_ratings(const OracleFeatures& f);

// Deterministic stand-in for human ratings; `w` is the spec synthesized at
// 1 kHz (either units).
RatingTriple synthetic_oracle(const TactonSpec& spec, const Waveform& w);

struct DimensionMetrics {
  double rmse = 0.0;
  std::optional<double> within_sd;
};

struct Metrics {
  std::array<DimensionMetrics, 3> per_dim;
  double rmse_avg = 0.0;
  std::optional<double> within_sd_avg;
  std::size_t count = 0;
};

// Per-dimension RMSE; within-SD proportions only when `sds` is given.
Metrics evaluate(const std::vector<RatingTriple>& preds,
                 const std::vector<RatingTriple>& truths,
                 const std::vector<RatingTriple>* sds = nullptr);

std::array<double, 3> rmse(const std::vector<RatingTriple>& preds,
                           const std::vector<RatingTriple>& truths);
std::array<double, 3> within_sd(const std::vector<RatingTriple>& preds,
                                const std::vector<RatingTriple>& means,
                                const std::vector<RatingTriple>& sds);

// {"count", "per_dim": {dim: {rmse, within_sd}}, "averages": {rmse, within_sd}}
nlohmann::json to_json(const Metrics& m);
// Header "dimension,rmse,within_sd", one row per dimension plus "average".
std::string metrics_csv(const Metrics& m);

// Fold index (0..k-1) per item; sizes differ by at most one and the first
// n % k folds are the larger ones.
std::vector<int> kfold_split(std::size_t n, int k, std::uint64_t seed);

// Folds over groups: items sharing a group id always land in the same fold.
std::vector<int> kfold_groups(const std::vector<std::string>& groups, int k,
                              std::uint64_t seed);

// Linear-baseline inputs, all computed on the zero-padded 6 s model view:
// RMS, magnitude-spectrum centroid (Hz), active duration (s), envelope
// modulation (std / mean of 50 ms frame RMS), peak.
inline constexpr std::array<const char*, 5> kBaselineFeatureNames = {
    "rms", "spectral_centroid_hz", "duration_s", "envelope_modulation", "peak"};
std::array<double, 5> baseline_features(const Waveform& w);

struct LinearModel {
  // Row per output dimension: intercept then one weight per feature.
  std::vector<std::vector<double>> coef;
  bool ridge_fallback = false;

  std::vector<double> predict(const std::vector<double>& x) const;
};

// Ordinary least squares with intercept per output column. Falls back to
// ridge (lambda = 1e-6) when the design matrix is rank deficient.
LinearModel fit_linear(const std::vector<std::vector<double>>& x,
                       const std::vector<std::vector<double>>& y);

struct BaselineResult {
  Metrics metrics;
  LinearModel model;
  std::vector<RatingTriple> predictions;
};

BaselineResult linear_baseline(const std::vector<std::vector<double>>& train_x,
                               const std::vector<RatingTriple>& train_y,
                               const std::vector<std::vector<double>>& test_x,
                               const std::vector<RatingTriple>& test_y);

struct CorpusItem {
  std::string id;
  TactonSpec spec;
  Waveform waveform;  // 1 kHz, G
  RatingTriple ratings;
};

// Family counts for n records in the 54:60:40 proportion, largest remainder.
std::array<std::size_t, 3> family_counts(std::size_t n);

// Sinusoidal, rhythmic and complex specs over the design ranges, synthesized
// at 10 kHz, downsampled to 1 kHz, converted to G and labelled by the oracle.
std::vector<CorpusItem> generate_corpus(std::size_t n, std::uint64_t seed);

double pearson(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace vibkit

#endif  // VIBKIT_DATASET_HPP_
