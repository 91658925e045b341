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

#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "model_check.hpp"
#include "vibkit/dataset.hpp"
#include "vibkit/error.hpp"
#include "vibkit/tacton.hpp"
#include "vibkit/vibnet.hpp"

using namespace vibkit;
namespace ad = vibkit::ad;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("vibkit_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

std::vector<RawExample> examples(std::size_t n, const std::string& channels, std::uint64_t seed) {
  const auto ch = parse_channels(channels);
  std::vector<RawExample> out;
  for (const auto& item : generate_corpus(n, seed)) {
    out.push_back(make_example(item.waveform, ch, item.ratings));
  }
  return out;
}

std::vector<const RawExample*> pointers(const std::vector<RawExample>& ex) {
  std::vector<const RawExample*> out;
  for (const auto& e : ex) out.push_back(&e);
  return out;
}

template <typename T>
ad::Tensor<T> random_tensor(ad::Shape shape, Rng& rng) {
  std::vector<T> v(ad::numel(shape));
  for (T& x : v) x = static_cast<T>(rng.uniform(-1, 1));
  return ad::Tensor<T>::from(std::move(shape), std::move(v));
}

template <typename T>
std::pair<ad::Tensor<T>, ad::Tensor<T>> random_inputs(const VibNetConfig& cfg, std::size_t B,
                                                      Rng& rng) {
  return {random_tensor<T>({B, kPaddedLength}, rng),
          random_tensor<T>({B, static_cast<std::size_t>(cfg.input_channels()),
                            static_cast<std::size_t>(kStftBins),
                            static_cast<std::size_t>(kPaddedFrames)},
                           rng)};
}

template <typename T>
std::vector<T> values(const ad::Tensor<T>& t) {
  auto v = t.values();
  return {v.begin(), v.end()};
}

template <typename T>
std::vector<T> flat_params(const VibNet<T>& m) {
  std::vector<T> out;
  for (const auto& p : m.params().items()) {
    auto v = p.tensor.values();
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

bool same_bits(const std::vector<RatingTriple>& a, const std::vector<RatingTriple>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::memcmp(&a[i], &b[i], sizeof(RatingTriple)) != 0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("desk configuration builds with a 3-output map") {
  VibNet<float> m(VibNetConfig::desk());
  const auto* out = m.params().find("out.weight");
  REQUIRE(out != nullptr);
  CHECK(out->tensor.shape() == ad::Shape{3, 16});
  CHECK(m.params().find("out.bias")->tensor.shape() == ad::Shape{3});
  CHECK(m.params().scalar_count() == 37635);
  CHECK(VibNetConfig::desk().conv_layers() == 10);
}

TEST_CASE("parameter count depends on the config, not the seed") {
  auto a = VibNetConfig::desk();
  auto b = a;
  b.seed = 12345;
  VibNet<float> ma(a), mb(b);
  CHECK(ma.params().scalar_count() == mb.params().scalar_count());
  CHECK(flat_params(ma) != flat_params(mb));
  VibNet<float> mc(a);
  CHECK(flat_params(ma) == flat_params(mc));
}

TEST_CASE("input channels set the stem width") {
  for (const auto& [channels, n] : std::vector<std::pair<std::string, std::size_t>>{
           {"RA1", 1}, {"RA1,RA2", 2}, {"RA1,RA2,SA1,SA2", 4}}) {
    auto cfg = VibNetConfig::desk();
    cfg.channels = channels;
    VibNet<float> m(cfg);
    CHECK(m.params().find("cnn.stem.conv")->tensor.shape() == ad::Shape{16, n, 7, 7});
  }
}

TEST_CASE("reference configuration has 154 convolution layers") {
  const auto ref = VibNetConfig::reference();
  CHECK(ref.conv_layers() == 154);
  CHECK(ref.gru_hidden == 1024);
  CHECK(ref.head_dims == std::vector<int>{1024, 128, 16});
  CHECK_NOTHROW(ref.check());
}

TEST_CASE("invalid configurations are rejected") {
  auto bad = [](auto edit) {
    auto c = VibNetConfig::desk();
    edit(c);
    return c;
  };
  CHECK_THROWS_AS(bad([](VibNetConfig& c) { c.gru_layers = 0; }).check(), ConfigError);
  CHECK_THROWS_AS(bad([](VibNetConfig& c) { c.gru_hidden = 0; }).check(), ConfigError);
  CHECK_THROWS_AS(bad([](VibNetConfig& c) { c.dropout_p = 1.0; }).check(), ConfigError);
  CHECK_THROWS_AS(bad([](VibNetConfig& c) { c.dropout_p = -0.1; }).check(), ConfigError);
  CHECK_THROWS_AS(bad([](VibNetConfig& c) { c.channels = "RA1,RA2,SA1"; }).check(),
                  ConfigError);
  CHECK_THROWS_AS(bad([](VibNetConfig& c) { c.head_dims = {}; }).check(), ConfigError);
  CHECK_THROWS_AS(bad([](VibNetConfig& c) { c.stages[1].mid = 0; }).check(), ConfigError);
  CHECK_THROWS_AS(VibNet<float>(bad([](VibNetConfig& c) { c.seq_frame = 7; })), ConfigError);
}

TEST_CASE("config json round trip") {
  auto c = VibNetConfig::tiny();
  c.seed = 42;
  const auto back = config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(to_json(config_from_json({{"preset", "tiny"}})) == to_json(VibNetConfig::tiny()));
}

TEST_CASE("forward shapes and eval determinism") {
  const auto cfg = VibNetConfig::desk();
  VibNet<float> m(cfg);
  Rng rng(5);
  const auto [wave, spec] = random_inputs<float>(cfg, 4, rng);
  ad::NoGradGuard guard;
  Rng r1(1), r2(2);
  const auto a = m.forward(wave, spec, false, r1);
  const auto b = m.forward(wave, spec, false, r2);
  CHECK(a.shape() == ad::Shape{4, 3});
  CHECK(values(a) == values(b));
}

TEST_CASE("eval mode is equivariant to batch permutation") {
  const auto cfg = VibNetConfig::tiny();
  VibNet<double> m(cfg);
  Rng rng(6);
  const auto [wave, spec] = random_inputs<double>(cfg, 3, rng);
  const std::vector<std::size_t> perm = {2, 0, 1};
  auto permute = [&](const ad::Tensor<double>& t) {
    const std::size_t row = t.numel() / 3;
    std::vector<double> v(t.numel());
    auto src = t.values();
    for (std::size_t i = 0; i < 3; ++i) {
      std::copy(src.begin() + perm[i] * row, src.begin() + (perm[i] + 1) * row,
                v.begin() + i * row);
    }
    return ad::Tensor<double>::from(t.shape(), std::move(v));
  };
  ad::NoGradGuard guard;
  Rng r(0);
  const auto y = values(m.forward(wave, spec, false, r));
  const auto yp = values(m.forward(permute(wave), permute(spec), false, r));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t d = 0; d < 3; ++d) {
      CHECK(yp[i * 3 + d] == doctest::Approx(y[perm[i] * 3 + d]).epsilon(1e-12));
    }
  }
}

TEST_CASE("eval mode leaves batch-norm statistics untouched") {
  const auto cfg = VibNetConfig::tiny();
  VibNet<double> m(cfg);
  Rng rng(8);
  const auto [wave, spec] = random_inputs<double>(cfg, 2, rng);
  auto snapshot = [&] {
    std::vector<double> s;
    for (auto& [name, st] : m.buffers()) {
      s.insert(s.end(), st->mean.begin(), st->mean.end());
      s.insert(s.end(), st->var.begin(), st->var.end());
    }
    return s;
  };
  const auto before = snapshot();
  Rng r(0);
  m.forward(wave, spec, false, r);
  CHECK(snapshot() == before);
  m.forward(wave, spec, true, r);
  CHECK(snapshot() != before);
}

TEST_CASE("tiny model gradients match finite differences") {
  const auto r = gradcheck::check_tiny_vibnet(4);
  INFO("central " << r.report.central << " one-sided " << r.report.one_sided << " skipped "
                  << r.report.skipped);
  CHECK(r.tensors > 40);
  CHECK(r.report.central + r.report.one_sided > r.tensors * 3);
  CHECK(r.report.max_rel_err < 1e-4);
}

TEST_CASE("dropout at p=0 is absent in training mode") {
  auto cfg = VibNetConfig::tiny();
  cfg.dropout_p = 0.0;
  VibNet<double> m(cfg);
  VibNet<double> twin(cfg);
  Rng rng(9);
  const auto [wave, spec] = random_inputs<double>(cfg, 2, rng);
  ad::NoGradGuard guard;
  Rng r1(1), r2(77);
  CHECK(values(m.forward(wave, spec, true, r1)) == values(twin.forward(wave, spec, true, r2)));
}

TEST_CASE("constant targets are learned") {
  auto ex = examples(12, "RA1", 3);
  for (auto& e : ex) e.target = {42.0, 42.0, 42.0};
  auto cfg = VibNetConfig::tiny();
  cfg.precision = Precision::kFloat32;
  VibNet<float> m(cfg);
  m.normalization = fit_normalization(pointers(ex));
  const auto set = prepare(pointers(ex), m.normalization);
  TrainOptions opts;
  opts.epochs = 3;
  opts.batch_size = 4;
  train(m, set, nullptr, opts);
  CHECK(m.log.size() == 3);
  CHECK(m.adam_steps == 9);
  const auto metrics = evaluate_model(m, set);
  CHECK(metrics.rmse_avg < 1.0);
}

TEST_CASE("training with a fixed seed is reproducible") {
  const auto ex = examples(8, "RA1", 4);
  auto run = [&] {
    auto cfg = VibNetConfig::tiny();
    cfg.precision = Precision::kFloat32;
    cfg.seed = 5;
    VibNet<float> m(cfg);
    m.normalization = fit_normalization(pointers(ex));
    const auto set = prepare(pointers(ex), m.normalization);
    TrainOptions opts;
    opts.epochs = 2;
    opts.batch_size = 3;
    opts.seed = 5;
    train(m, set, &set, opts);
    return std::make_pair(flat_params(m), m.log);
  };
  const auto a = run(), b = run();
  CHECK(a.first == b.first);
  REQUIRE(a.second.size() == b.second.size());
  for (std::size_t i = 0; i < a.second.size(); ++i) {
    CHECK(a.second[i].train_loss == b.second[i].train_loss);
    CHECK(*a.second[i].val_rmse == *b.second[i].val_rmse);
  }
}

TEST_CASE("checkpoint round trip is bitwise") {
  const auto dir = temp_dir("ckpt");
  const auto ex = examples(6, "RA1", 5);
  SUBCASE("float32") {
    auto cfg = VibNetConfig::tiny();
    cfg.precision = Precision::kFloat32;
    VibNet<float> m(cfg);
    m.normalization = fit_normalization(pointers(ex));
    const auto set = prepare(pointers(ex), m.normalization);
    TrainOptions opts;
    opts.epochs = 1;
    opts.batch_size = 3;
    train(m, set, nullptr, opts);
    save_checkpoint(m, dir / "m.ckpt");
    const auto loaded = load_checkpoint(dir / "m.ckpt");
    CHECK(same_bits(loaded->predict(set), m.predict(set)));
    CHECK(loaded->parameter_count() == m.params().scalar_count());
    const auto typed = load_checkpoint_as<float>(dir / "m.ckpt");
    CHECK(flat_params(typed) == flat_params(m));
    CHECK(typed.adam_steps == m.adam_steps);
    CHECK(typed.log.size() == 1);
    for (std::size_t i = 0; i < m.params().items().size(); ++i) {
      CHECK(typed.params().items()[i].m == m.params().items()[i].m);
      CHECK(typed.params().items()[i].v == m.params().items()[i].v);
    }
  }
  SUBCASE("float64") {
    VibNet<double> m(VibNetConfig::tiny());
    m.normalization = fit_normalization(pointers(ex));
    save_checkpoint(m, dir / "d.ckpt");
    const auto loaded = load_checkpoint(dir / "d.ckpt");
    CHECK(loaded->config().precision == Precision::kFloat64);
    const auto set = prepare(pointers(ex), m.normalization);
    CHECK(same_bits(loaded->predict(set), m.predict(set)));
    CHECK_THROWS_AS(load_checkpoint_as<float>(dir / "d.ckpt"), SchemaError);
  }
}

TEST_CASE("checkpoint applies its normalization to raw input") {
  const auto dir = temp_dir("ckpt_norm");
  auto ex = examples(6, "RA1", 6);
  auto cfg = VibNetConfig::tiny();
  cfg.precision = Precision::kFloat32;
  VibNet<float> m(cfg);
  m.normalization = fit_normalization(pointers(ex));
  m.normalization.waveform_scale = 3.5;
  save_checkpoint(m, dir / "m.ckpt");
  const auto loaded = load_checkpoint(dir / "m.ckpt");
  CHECK(loaded->normalization().waveform_scale == 3.5);
  CHECK(loaded->normalization().spec_mean == m.normalization.spec_mean);
  const auto w = generate_corpus(1, 9)[0].waveform;
  const auto a = loaded->predict(w), b = m.predict(w);
  CHECK(std::memcmp(&a, &b, sizeof a) == 0);
}

TEST_CASE("corrupt checkpoints are rejected") {
  const auto dir = temp_dir("ckpt_bad");
  VibNet<double> m(VibNetConfig::tiny());
  m.normalization.spec_mean = {0.0};
  m.normalization.spec_std = {1.0};
  save_checkpoint(m, dir / "m.ckpt");
  std::ifstream in(dir / "m.ckpt", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  auto write = [&](const std::string& name, const std::string& data) {
    std::ofstream out(dir / name, std::ios::binary);
    out << data;
    return dir / name;
  };
  std::string version = bytes;
  version[8] = 2;
  CHECK_THROWS_AS(load_checkpoint(write("v.ckpt", version)), VersionError);
  CHECK_THROWS_AS(load_checkpoint(write("t.ckpt", bytes.substr(0, bytes.size() - 5))), IoError);
  CHECK_THROWS_AS(load_checkpoint(write("h.ckpt", bytes.substr(0, 30))), IoError);
  std::string magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(load_checkpoint(write("m.ckpt2", magic)), IoError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), IoError);
}

TEST_CASE("prediction pads internally and checks its input") {
  auto cfg = VibNetConfig::tiny();
  cfg.precision = Precision::kFloat32;
  VibNet<float> m(cfg);
  m.normalization.spec_mean = {0.5};
  m.normalization.spec_std = {2.0};
  const auto w = generate_corpus(1, 10)[0].waveform;
  REQUIRE(w.size() < kPaddedLength);
  const auto a = m.predict(w), b = m.predict(zero_pad(w, kPaddedLength));
  CHECK(std::memcmp(&a, &b, sizeof a) == 0);

  Waveform longer = w;
  longer.samples.assign(kPaddedLength + 1, 0.1);
  CHECK_THROWS_AS(m.predict(longer), TooLong);
  Waveform fast = w;
  fast.sample_rate = 10000;
  CHECK_THROWS_AS(m.predict(fast), RateError);
}

TEST_CASE("cross-validation keeps groups inside one fold") {
  auto ex = examples(10, "RA1", 11);
  std::vector<std::string> groups;
  for (std::size_t i = 0; i < ex.size(); ++i) groups.push_back("t" + std::to_string(i / 2));
  std::vector<bool> original;
  for (std::size_t i = 0; i < ex.size(); ++i) original.push_back(i % 2 == 0);
  auto cfg = VibNetConfig::tiny();
  cfg.precision = Precision::kFloat32;
  TrainOptions opts;
  opts.epochs = 1;
  opts.batch_size = 4;
  const auto r = cross_validate(cfg, ex, groups, 5, opts, &original);
  REQUIRE(r.folds.size() == 5);
  double total = 0.0;
  for (const auto& f : r.folds) {
    CHECK(f.train_count == 8);
    CHECK(f.val_count == 1);
    CHECK(f.log.size() == 1);
    total += f.metrics.rmse_avg;
  }
  CHECK(r.mean_rmse == doctest::Approx(total / 5));
  const auto j = to_json(r);
  CHECK(j["folds"].size() == 5);
  CHECK_THROWS_AS(cross_validate(cfg, ex, groups, 6, opts), ConfigError);
}
