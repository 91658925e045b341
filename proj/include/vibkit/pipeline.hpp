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

// File-based pipeline stages shared by the command-line tools, the HTTP
// service and the acceptance runner.

#ifndef VIBKIT_PIPELINE_HPP_
#define VIBKIT_PIPELINE_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "vibkit/augment.hpp"
#include "vibkit/dataset.hpp"
#include "vibkit/mechano.hpp"
#include "vibkit/tacton.hpp"
#include "vibkit/vibnet.hpp"

namespace vibkit {

namespace fs = std::filesystem;

// A spec as the model sees it: synthesized at 10 kHz, decimated to 1 kHz,
// scaled to G.
Waveform render_for_model(const TactonSpec& spec);

// Writes waves/<id>.f32, specs/<id>.json and manifest.jsonl under `dir`.
// Returns the manifest path.
fs::path gen_corpus(const fs::path& dir, std::size_t n, std::uint64_t seed);

// Augments every record of `manifest` into `dir` (waves/, manifest.jsonl,
// provenance.jsonl). Variants inherit ratings and tacton ids.
fs::path augment_manifest(const fs::path& manifest, const fs::path& dir,
                          const AugmentConfig& cfg);

// Writes one spectrogram stack (of the waveform in G) per record to
// `dir`/specs and a manifest
// pointing at them.
fs::path process_manifest(const fs::path& manifest, const fs::path& dir,
                          const std::vector<Channel>& channels);

// Every *.f32 waveform in `in_dir` -> `out_dir`/<stem>.spec. Returns the
// number of files written.
std::size_t process_directory(const fs::path& in_dir, const fs::path& out_dir,
                              const std::vector<Channel>& channels);

// Reuses a stored spectrogram when its channels match, otherwise computes
// one from the waveform.
RawExample load_example(const DatasetRecord& r, const std::vector<Channel>& channels);

struct TrainRequest {
  VibNetConfig config = VibNetConfig::desk();
  TrainOptions options;
  int folds = 0;  // 0 or 1: no cross-validation
  LabelAggregation aggregation = LabelAggregation::kPerDevice;
};

struct TrainOutcome {
  std::optional<CvResult> cv;
  Metrics train_metrics;
  std::size_t records = 0;
  std::size_t parameters = 0;
};

// Optional k-fold CV grouped by tacton id (validation on originals only),
// then a final fit on every record, saved to `checkpoint`.
TrainOutcome train_from_manifest(const fs::path& manifest, const TrainRequest& req,
                                 const fs::path& checkpoint);
nlohmann::json to_json(const TrainOutcome& t);

// [{record_id, ratings, raw}] for every record of the manifest.
nlohmann::json predict_manifest(const LoadedModel& model, const fs::path& manifest);

// {record_id, ratings, sd?} entries from a predictions array (.json) or a
// manifest (.jsonl).
struct LabelledRow {
  std::string record_id;
  RatingTriple ratings;
  std::optional<RatingTriple> sd;
};
std::vector<LabelledRow> read_labelled(const fs::path& path);

// Matches rows by record id. Throws ValidationError on a missing id.
Metrics evaluate_files(const fs::path& predictions, const fs::path& truth);

struct PipelineOptions {
  std::size_t train_records = 12;
  std::size_t test_records = 6;
  int repetitions = 1;
  VibNetConfig config = VibNetConfig::desk();
  TrainOptions train;
  std::uint64_t seed = 7;
};

// gen-corpus -> augment -> process -> train -> predict -> eval inside
// `dir`. Returns the metrics report text, also written to dir/metrics.json.
std::string run_pipeline(const fs::path& dir, const PipelineOptions& opts);

}  // namespace vibkit

#endif  // VIBKIT_PIPELINE_HPP_
