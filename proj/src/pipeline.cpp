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

#include "vibkit/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "vibkit/error.hpp"

namespace vibkit {

using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json parse_json(const std::string& text, const fs::path& path) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

fs::path relative_to(const fs::path& target, const fs::path& dir) {
  return fs::proximate(fs::absolute(target), fs::absolute(dir));
}

template <typename T>
TrainOutcome fit_and_save(const std::vector<RawExample>& examples, const TrainRequest& req,
                          const fs::path& checkpoint) {
  std::vector<const RawExample*> all;
  for (const auto& e : examples) all.push_back(&e);
  VibNet<T> model(req.config);
  model.normalization = fit_normalization(all);
  const auto set = prepare(all, model.normalization);
  train(model, set, nullptr, req.options);
  TrainOutcome out;
  out.train_metrics = evaluate_model(model, set);
  out.records = examples.size();
  out.parameters = model.params().scalar_count();
  if (!checkpoint.empty()) {
    if (checkpoint.has_parent_path()) fs::create_directories(checkpoint.parent_path());
    save_checkpoint(model, checkpoint);
  }
  return out;
}

}  // namespace

Waveform render_for_model(const TactonSpec& spec) {
  return to_acceleration(downsample(synthesize(spec, 10000), kPipelineRate));
}

fs::path gen_corpus(const fs::path& dir, std::size_t n, std::uint64_t seed) {
  fs::create_directories(dir / "waves");
  fs::create_directories(dir / "specs");
  std::vector<DatasetRecord> records;
  for (const auto& item : generate_corpus(n, seed)) {
    const fs::path wave = fs::path("waves") / (item.id + ".f32");
    write_waveform(dir / wave, item.waveform);
    write_text(dir / "specs" / (item.id + ".json"), to_json(item.spec).dump(2) + "\n");
    DatasetRecord r;
    r.record_id = item.id;
    r.tacton_id = item.id;
    r.source = "synthetic";
    r.waveform_path = wave;
    r.ratings = item.ratings;
    records.push_back(std::move(r));
  }
  write_manifest(dir / "manifest.jsonl", records);
  return dir / "manifest.jsonl";
}

fs::path augment_manifest(const fs::path& manifest, const fs::path& dir,
                          const AugmentConfig& cfg) {
  const auto records = read_manifest(manifest);
  std::map<std::string, const DatasetRecord*> by_id;
  std::vector<std::pair<std::string, Waveform>> inputs;
  for (const auto& r : records) {
    if (!by_id.emplace(r.record_id, &r).second) {
      throw ValidationError("duplicate record_id " + r.record_id);
    }
    inputs.emplace_back(r.record_id, read_waveform(r.waveform_path));
  }
  fs::create_directories(dir / "waves");
  std::vector<DatasetRecord> out;
  std::ostringstream provenance;
  for (const auto& a : augment_dataset(inputs, cfg)) {
    DatasetRecord r = *by_id.at(a.src_id);
    r.record_id = a.out_id;
    r.waveform_path = fs::path("waves") / (a.out_id + ".f32");
    r.spectrogram_path.reset();
    r.augmentation = a.method ? std::optional(a.method->name()) : std::nullopt;
    write_waveform(dir / r.waveform_path, a.waveform);
    provenance << provenance_json(a).dump() << '\n';
    out.push_back(std::move(r));
  }
  write_manifest(dir / "manifest.jsonl", out);
  write_text(dir / "provenance.jsonl", provenance.str());
  return dir / "manifest.jsonl";
}

fs::path process_manifest(const fs::path& manifest, const fs::path& dir,
                          const std::vector<Channel>& channels) {
  auto records = read_manifest(manifest);
  fs::create_directories(dir / "specs");
  for (auto& r : records) {
    const fs::path spec = fs::path("specs") / (r.record_id + ".spec");
    const Waveform w = to_acceleration(read_waveform(r.waveform_path));
    write_spectrogram(dir / spec, mechano_spectrograms(w, channels));
    r.waveform_path = relative_to(r.waveform_path, dir);
    r.spectrogram_path = spec;
  }
  write_manifest(dir / "manifest.jsonl", records);
  return dir / "manifest.jsonl";
}

std::size_t process_directory(const fs::path& in_dir, const fs::path& out_dir,
                              const std::vector<Channel>& channels) {
  if (!fs::is_directory(in_dir)) throw IoError("not a directory: " + in_dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(in_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".f32") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  fs::create_directories(out_dir);
  for (const auto& f : files) {
    write_spectrogram(out_dir / (f.stem().string() + ".spec"),
                      mechano_spectrograms(to_acceleration(read_waveform(f)), channels));
  }
  return files.size();
}

RawExample load_example(const DatasetRecord& r, const std::vector<Channel>& channels) {
  const Waveform w = read_waveform(r.waveform_path);
  if (r.spectrogram_path) {
    SpectrogramStack s = read_spectrogram(*r.spectrogram_path);
    if (s.channels == channels) {
      if (w.sample_rate != kPipelineRate) {
        throw RateError("model input must be sampled at 1000 Hz, got " +
                        std::to_string(w.sample_rate));
      }
      RawExample ex;
      ex.waveform = zero_pad(to_acceleration(w), kPaddedLength);
      ex.spectrogram = std::move(s);
      ex.target = r.ratings;
      return ex;
    }
  }
  return make_example(w, channels, r.ratings);
}

TrainOutcome train_from_manifest(const fs::path& manifest, const TrainRequest& req,
                                 const fs::path& checkpoint) {
  req.config.check();
  const auto records = aggregate_labels(read_manifest(manifest), req.aggregation);
  if (records.empty()) throw ValidationError("manifest has no records: " + manifest.string());
  const auto channels = parse_channels(req.config.channels);
  std::vector<RawExample> examples;
  std::vector<std::string> groups;
  std::vector<bool> original;
  for (const auto& r : records) {
    examples.push_back(load_example(r, channels));
    groups.push_back(r.tacton_id);
    original.push_back(!r.augmentation.has_value());
  }
  std::optional<CvResult> cv;
  if (req.folds > 1) {
    cv = cross_validate(req.config, examples, groups, req.folds, req.options, &original);
  }
  TrainOutcome out = req.config.precision == Precision::kFloat32
                         ? fit_and_save<float>(examples, req, checkpoint)
                         : fit_and_save<double>(examples, req, checkpoint);
  out.cv = std::move(cv);
  return out;
}

json to_json(const TrainOutcome& t) {
  json j = {{"records", t.records},
            {"parameters", t.parameters},
            {"train_metrics", to_json(t.train_metrics)}};
  if (t.cv) j["cross_validation"] = to_json(*t.cv);
  return j;
}

json predict_manifest(const LoadedModel& model, const fs::path& manifest) {
  const auto records = read_manifest(manifest);
  const auto channels = parse_channels(model.config().channels);
  std::vector<RawExample> examples;
  for (const auto& r : records) examples.push_back(load_example(r, channels));
  std::vector<const RawExample*> ptrs;
  for (const auto& e : examples) ptrs.push_back(&e);
  const auto preds = model.predict(prepare(ptrs, model.normalization()));
  json out = json::array();
  for (std::size_t i = 0; i < records.size(); ++i) {
    out.push_back({{"record_id", records[i].record_id},
                   {"ratings", to_json(preds[i].clamped())},
                   {"raw", to_json(preds[i])}});
  }
  return out;
}

std::vector<LabelledRow> read_labelled(const fs::path& path) {
  std::vector<LabelledRow> rows;
  if (path.extension() == ".jsonl") {
    for (const auto& r : read_manifest(path)) rows.push_back({r.record_id, r.ratings, r.rating_sd});
    return rows;
  }
  const json j = parse_json(read_text(path), path);
  if (!j.is_array()) throw SchemaError(path.string() + ": expected an array of rows");
  for (const auto& row : j) {
    if (!row.is_object() || !row.contains("record_id") || !row["record_id"].is_string() ||
        !row.contains("ratings")) {
      throw SchemaError(path.string() + ": each row needs record_id and ratings");
    }
    LabelledRow r;
    r.record_id = row["record_id"].get<std::string>();
    r.ratings = rating_from_json(row["ratings"]);
    if (row.contains("sd") && !row["sd"].is_null()) r.sd = rating_from_json(row["sd"]);
    rows.push_back(std::move(r));
  }
  return rows;
}

Metrics evaluate_files(const fs::path& predictions, const fs::path& truth) {
  const auto preds = read_labelled(predictions);
  std::map<std::string, LabelledRow> truth_by_id;
  for (auto& r : read_labelled(truth)) truth_by_id.emplace(r.record_id, std::move(r));
  std::vector<RatingTriple> p, t, sd;
  bool all_sd = true;
  for (const auto& row : preds) {
    const auto it = truth_by_id.find(row.record_id);
    if (it == truth_by_id.end()) {
      throw ValidationError("no ground truth for record " + row.record_id);
    }
    p.push_back(row.ratings);
    t.push_back(it->second.ratings);
    if (it->second.sd) {
      sd.push_back(*it->second.sd);
    } else {
      all_sd = false;
    }
  }
  return evaluate(p, t, all_sd && !sd.empty() ? &sd : nullptr);
}

std::string run_pipeline(const fs::path& dir, const PipelineOptions& opts) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto corpus = gen_corpus(dir / "corpus", opts.train_records, opts.seed);
  const auto test = gen_corpus(dir / "test", opts.test_records, derive_seed(opts.seed, "test"));

  AugmentConfig aug;
  aug.repetitions = opts.repetitions;
  aug.rng_seed = opts.seed;
  const auto augmented = augment_manifest(corpus, dir / "augmented", aug);

  const auto channels = parse_channels(opts.config.channels);
  const auto processed = process_manifest(augmented, dir / "processed", channels);
  const auto test_processed = process_manifest(test, dir / "test_processed", channels);

  TrainRequest req;
  req.config = opts.config;
  req.config.seed = opts.seed;
  req.options = opts.train;
  req.options.seed = opts.seed;
  const auto outcome = train_from_manifest(processed, req, dir / "model.ckpt");
  write_text(dir / "train_report.json", to_json(outcome).dump(2) + "\n");

  const auto model = load_checkpoint(dir / "model.ckpt");
  write_text(dir / "predictions.json", predict_manifest(*model, test_processed).dump(2) + "\n");
  const auto metrics = evaluate_files(dir / "predictions.json", test_processed);
  const std::string report = to_json(metrics).dump(2) + "\n";
  write_text(dir / "metrics.json", report);
  write_text(dir / "metrics.csv", metrics_csv(metrics));
  return report;
}

}  // namespace vibkit
