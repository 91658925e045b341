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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>
#include <set>
#include <sstream>

#include "vibkit/error.hpp"
#include "vibkit/pipeline.hpp"

using namespace vibkit;

namespace {

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("vibkit_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

VibNetConfig small_config() {
  auto c = VibNetConfig::tiny();
  c.precision = Precision::kFloat32;
  return c;
}

}  // namespace

TEST_CASE("gen-corpus writes a readable manifest") {
  const auto dir = temp_dir("gen");
  const auto manifest = gen_corpus(dir, 5, 3);
  const auto records = read_manifest(manifest);
  REQUIRE(records.size() == 5);
  for (const auto& r : records) {
    CHECK(fs::exists(r.waveform_path));
    CHECK(fs::exists(dir / "specs" / (r.record_id + ".json")));
    CHECK(r.tacton_id == r.record_id);
    CHECK_NOTHROW(check_ratings(r.ratings));
    const auto w = read_waveform(r.waveform_path);
    CHECK(w.sample_rate == 1000);
    CHECK(w.units == Units::kG);
  }
}

TEST_CASE("augment stage emits n * (7 * reps + 1) records with provenance") {
  const auto dir = temp_dir("aug");
  const auto manifest = gen_corpus(dir / "c", 3, 4);
  AugmentConfig cfg;
  cfg.repetitions = 2;
  cfg.rng_seed = 9;
  const auto out = augment_manifest(manifest, dir / "a", cfg);
  const auto records = read_manifest(out);
  CHECK(records.size() == 45);
  std::set<std::string> ids;
  std::size_t originals = 0;
  for (const auto& r : records) {
    ids.insert(r.record_id);
    if (!r.augmentation) ++originals;
    CHECK(fs::exists(r.waveform_path));
  }
  CHECK(ids.size() == 45);
  CHECK(originals == 3);
  std::ifstream prov(dir / "a" / "provenance.jsonl");
  std::size_t lines = 0;
  for (std::string line; std::getline(prov, line);) ++lines;
  CHECK(lines == 45);
}

TEST_CASE("process stage stores spectrograms that match recomputation") {
  const auto dir = temp_dir("proc");
  const auto manifest = gen_corpus(dir / "c", 2, 5);
  const auto ch = parse_channels("RA1,RA2");
  const auto out = process_manifest(manifest, dir / "p", ch);
  for (const auto& r : read_manifest(out)) {
    REQUIRE(r.spectrogram_path.has_value());
    const auto stored = read_spectrogram(*r.spectrogram_path);
    CHECK(stored.channels == ch);
    CHECK(stored.data.size() == 2u * 251 * 121);
    const auto fresh = mechano_spectrograms(read_waveform(r.waveform_path), ch);
    for (std::size_t i = 0; i < fresh.data.size(); ++i) {
      REQUIRE(stored.data[i] == static_cast<double>(static_cast<float>(fresh.data[i])));
    }
  }
  CHECK(process_directory(dir / "c" / "waves", dir / "specs", ch) == 2);
  CHECK_THROWS_AS(process_directory(dir / "nope", dir / "specs", ch), IoError);
}

TEST_CASE("stored spectrograms are reused only when channels match") {
  const auto dir = temp_dir("reuse");
  const auto manifest = gen_corpus(dir / "c", 1, 6);
  const auto out = process_manifest(manifest, dir / "p", parse_channels("RA1"));
  const auto r = read_manifest(out).at(0);
  const auto same = load_example(r, parse_channels("RA1"));
  const auto other = load_example(r, parse_channels("RA1,RA2"));
  CHECK(same.spectrogram.data == read_spectrogram(*r.spectrogram_path).data);
  CHECK(other.spectrogram.channels.size() == 2);
}

TEST_CASE("evaluate_files matches rows by id") {
  const auto dir = temp_dir("eval");
  {
    std::ofstream p(dir / "p.json");
    p << R"([{"record_id":"b","ratings":{"r":10,"v":20,"a":30}},
             {"record_id":"a","ratings":{"r":0,"v":0,"a":0}}])";
    std::ofstream t(dir / "t.json");
    t << R"([{"record_id":"a","ratings":{"r":3,"v":0,"a":0}},
             {"record_id":"b","ratings":{"r":14,"v":20,"a":30}}])";
    std::ofstream bad(dir / "bad.json");
    bad << R"([{"id":"a"}])";
    std::ofstream missing(dir / "m.json");
    missing << R"([{"record_id":"zz","ratings":{"r":0,"v":0,"a":0}}])";
  }
  const auto m = evaluate_files(dir / "p.json", dir / "t.json");
  CHECK(m.count == 2);
  CHECK(m.per_dim[0].rmse == doctest::Approx(std::sqrt(12.5)));
  CHECK(m.per_dim[1].rmse == 0.0);
  CHECK_THROWS_AS(evaluate_files(dir / "bad.json", dir / "t.json"), SchemaError);
  CHECK_THROWS_AS(evaluate_files(dir / "m.json", dir / "t.json"), ValidationError);
  CHECK_THROWS_AS(evaluate_files(dir / "absent.json", dir / "t.json"), IoError);
}

TEST_CASE("train stage writes a loadable checkpoint and a CV report") {
  const auto dir = temp_dir("train");
  const auto manifest = gen_corpus(dir / "c", 10, 8);
  TrainRequest req;
  req.config = small_config();
  req.options.epochs = 1;
  req.options.batch_size = 4;
  req.folds = 5;
  const auto outcome = train_from_manifest(manifest, req, dir / "m.ckpt");
  REQUIRE(outcome.cv.has_value());
  CHECK(outcome.cv->folds.size() == 5);
  CHECK(outcome.records == 10);
  const auto model = load_checkpoint(dir / "m.ckpt");
  CHECK(model->parameter_count() == outcome.parameters);
  const auto preds = predict_manifest(*model, manifest);
  CHECK(preds.size() == 10);
  CHECK(preds[0].contains("raw"));
}

TEST_CASE("full pipeline is byte-for-byte reproducible") {
  PipelineOptions opts;
  opts.train_records = 6;
  opts.test_records = 3;
  opts.repetitions = 1;
  opts.config = small_config();
  opts.train.epochs = 1;
  opts.train.batch_size = 8;
  const auto a = run_pipeline(temp_dir("pipe_a"), opts);
  const auto b = run_pipeline(temp_dir("pipe_b"), opts);
  CHECK(a == b);
  CHECK(slurp(fs::temp_directory_path() / "vibkit_test_pipe_a" / "predictions.json") ==
        slurp(fs::temp_directory_path() / "vibkit_test_pipe_b" / "predictions.json"));
  opts.seed = 8;
  CHECK(run_pipeline(temp_dir("pipe_c"), opts) != a);
}
