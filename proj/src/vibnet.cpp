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

#include "vibkit/vibnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <tuple>

#include "vibkit/binio.hpp"
#include "vibkit/error.hpp"
#include "vibkit/tacton.hpp"

namespace vibkit {

using nlohmann::json;
using ad::Shape;
using ad::Tensor;

std::string to_string(Precision p) { return p == Precision::kFloat32 ? "float32" : "float64"; }

Precision precision_from_string(const std::string& s) {
  if (s == "float32") return Precision::kFloat32;
  if (s == "float64") return Precision::kFloat64;
  throw ConfigError("precision must be float32 or float64, got " + s);
}

int VibNetConfig::input_channels() const {
  return static_cast<int>(parse_channels(channels).size());
}

int VibNetConfig::conv_layers() const {
  int n = 1;
  for (const auto& s : stages) n += 3 * s.blocks;
  return n;
}

void VibNetConfig::check() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid config: " + what);
  };
  need(gru_layers >= 1, "gru_layers >= 1");
  need(gru_hidden >= 1, "gru_hidden >= 1");
  need(seq_frame >= 1 && kPaddedLength % static_cast<std::size_t>(seq_frame) == 0,
       "seq_frame must divide 6000");
  need(stem_channels >= 1, "stem_channels >= 1");
  need(!stages.empty(), "at least one residual stage");
  for (const auto& s : stages) {
    need(s.blocks >= 1 && s.mid >= 1 && s.out >= 1, "stage dims >= 1");
    need(s.stride == 1 || s.stride == 2, "stage stride 1 or 2");
  }
  need(!head_dims.empty(), "head_dims non-empty");
  for (int d : head_dims) need(d >= 1, "head dims >= 1");
  need(dropout_p >= 0.0 && dropout_p < 1.0, "dropout_p in [0, 1)");
  int c = 0;
  try {
    c = input_channels();
  } catch (const Error& e) {
    throw ConfigError(std::string("invalid config: channels: ") + e.what());
  }
  need(c == 1 || c == 2 || c == 4, "input_channels in {1, 2, 4}");
}

VibNetConfig VibNetConfig::desk() { return VibNetConfig{}; }

VibNetConfig VibNetConfig::reference() {
  VibNetConfig c;
  c.gru_hidden = 1024;
  c.stem_channels = 64;
  c.stages = {{3, 64, 256, 1}, {8, 128, 512, 2}, {36, 256, 1024, 2}, {4, 512, 2048, 2}};
  c.head_dims = {1024, 128, 16};
  return c;
}

VibNetConfig VibNetConfig::tiny() {
  VibNetConfig c;
  c.gru_hidden = 4;
  c.stem_channels = 4;
  c.stages = {{1, 2, 8, 1}, {1, 2, 8, 2}, {1, 2, 8, 2}};
  c.head_dims = {8, 4, 16};
  c.channels = "RA1";
  c.precision = Precision::kFloat64;
  return c;
}

json to_json(const VibNetConfig& c) {
  json stages = json::array();
  for (const auto& s : c.stages) {
    stages.push_back({{"blocks", s.blocks}, {"mid", s.mid}, {"out", s.out}, {"stride", s.stride}});
  }
  return {{"gru_layers", c.gru_layers},
          {"gru_hidden", c.gru_hidden},
          {"seq_frame", c.seq_frame},
          {"gru_flatten", c.gru_flatten},
          {"stem_channels", c.stem_channels},
          {"resnet_spec", stages},
          {"head_dims", c.head_dims},
          {"dropout_p", c.dropout_p},
          {"channels", c.channels},
          {"input_channels", c.input_channels()},
          {"precision", to_string(c.precision)},
          {"seed", c.seed},
          {"conv_layers", c.conv_layers()},
          {"init", "uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))"}};
}

VibNetConfig config_from_json(const json& j) {
  VibNetConfig c;
  try {
    if (j.contains("preset")) {
      const auto p = j.at("preset").get<std::string>();
      if (p == "desk") c = VibNetConfig::desk();
      else if (p == "reference") c = VibNetConfig::reference();
      else if (p == "tiny") c = VibNetConfig::tiny();
      else throw ConfigError("unknown preset " + p);
    }
    c.gru_layers = j.value("gru_layers", c.gru_layers);
    c.gru_hidden = j.value("gru_hidden", c.gru_hidden);
    c.seq_frame = j.value("seq_frame", c.seq_frame);
    c.gru_flatten = j.value("gru_flatten", c.gru_flatten);
    c.stem_channels = j.value("stem_channels", c.stem_channels);
    if (j.contains("resnet_spec")) {
      c.stages.clear();
      for (const auto& s : j.at("resnet_spec")) {
        c.stages.push_back({s.at("blocks").get<int>(), s.at("mid").get<int>(),
                            s.at("out").get<int>(), s.value("stride", 1)});
      }
    }
    c.head_dims = j.value("head_dims", c.head_dims);
    c.dropout_p = j.value("dropout_p", c.dropout_p);
    c.channels = j.value("channels", c.channels);
    if (j.contains("precision")) c.precision = precision_from_string(j.at("precision"));
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (j.contains("input_channels") && j.at("input_channels").get<int>() != c.input_channels()) {
    throw ConfigError("config: input_channels disagrees with channels " + c.channels);
  }
  c.check();
  return c;
}

json to_json(const Normalization& n) {
  return {{"spec_transform", "log1p"},
          {"spec_mean", n.spec_mean},
          {"spec_std", n.spec_std},
          {"waveform_scale", n.waveform_scale}};
}

Normalization normalization_from_json(const json& j) {
  try {
    Normalization n;
    n.spec_mean = j.at("spec_mean").get<std::vector<double>>();
    n.spec_std = j.at("spec_std").get<std::vector<double>>();
    n.waveform_scale = j.at("waveform_scale").get<double>();
    return n;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("normalization: ") + e.what());
  }
}

RawExample make_example(const Waveform& w, const std::vector<Channel>& channels,
                        RatingTriple target) {
  if (w.sample_rate != kPipelineRate) {
    throw RateError("model input must be sampled at 1000 Hz, got " +
                    std::to_string(w.sample_rate));
  }
  RawExample ex;
  ex.waveform = zero_pad(to_acceleration(w), kPaddedLength);
  ex.spectrogram = mechano_spectrograms(ex.waveform, channels);
  ex.target = target;
  return ex;
}

Normalization fit_normalization(const std::vector<const RawExample*>& examples) {
  if (examples.empty()) throw ValidationError("cannot fit normalization on an empty set");
  const std::size_t C = examples[0]->spectrogram.channels.size();
  const std::size_t plane = PreparedSet::plane();
  std::vector<double> s(C, 0.0), ss(C, 0.0);
  double ws = 0.0;
  std::size_t wn = 0;
  for (const RawExample* ex : examples) {
    if (ex->spectrogram.channels.size() != C) throw ShapeError("mixed channel counts");
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t i = 0; i < plane; ++i) {
        const double v = std::log1p(ex->spectrogram.data[c * plane + i]);
        s[c] += v;
        ss[c] += v * v;
      }
    }
    for (double v : ex->waveform.samples) ws += v * v;
    wn += ex->waveform.samples.size();
  }
  Normalization n;
  const double count = static_cast<double>(examples.size() * plane);
  for (std::size_t c = 0; c < C; ++c) {
    const double m = s[c] / count;
    const double var = std::max(ss[c] / count - m * m, 0.0);
    n.spec_mean.push_back(m);
    n.spec_std.push_back(var > 1e-24 ? std::sqrt(var) : 1.0);
  }
  const double wr = std::sqrt(ws / static_cast<double>(wn));
  n.waveform_scale = wr > 1e-12 ? 1.0 / wr : 1.0;
  return n;
}

PreparedSet prepare(const std::vector<const RawExample*>& examples, const Normalization& norm) {
  PreparedSet p;
  p.channels = norm.spec_mean.size();
  const std::size_t plane = PreparedSet::plane();
  p.waves.reserve(examples.size() * kPaddedLength);
  p.specs.reserve(examples.size() * p.channels * plane);
  for (const RawExample* ex : examples) {
    if (ex->waveform.samples.size() != kPaddedLength) throw ShapeError("example not padded");
    if (ex->spectrogram.channels.size() != p.channels) {
      throw ShapeError("example has " + std::to_string(ex->spectrogram.channels.size()) +
                       " channels, normalization expects " + std::to_string(p.channels));
    }
    for (double v : ex->waveform.samples) {
      p.waves.push_back(static_cast<float>(v * norm.waveform_scale));
    }
    for (std::size_t c = 0; c < p.channels; ++c) {
      for (std::size_t i = 0; i < plane; ++i) {
        const double v = std::log1p(ex->spectrogram.data[c * plane + i]);
        p.specs.push_back(static_cast<float>((v - norm.spec_mean[c]) / norm.spec_std[c]));
      }
    }
    p.targets.push_back(ex->target);
  }
  return p;
}

template <typename T>
typename VibNet<T>::ConvBn VibNet<T>::make_conv_bn(const std::string& name, int in, int out,
                                                   int k, int stride, int pad, Rng& rng) {
  ConvBn c;
  const double bound = 1.0 / std::sqrt(static_cast<double>(in * k * k));
  const auto so = static_cast<std::size_t>(out);
  c.weight = params_.uniform(name + ".conv", {so, static_cast<std::size_t>(in),
                                              static_cast<std::size_t>(k),
                                              static_cast<std::size_t>(k)},
                             bound, rng);
  c.gamma = params_.constant(name + ".bn.gamma", {so}, T(1));
  c.beta = params_.constant(name + ".bn.beta", {so}, T(0));
  c.stats.mean.assign(so, T(0));
  c.stats.var.assign(so, T(1));
  c.stride = stride;
  c.padding = pad;
  return c;
}

template <typename T>
VibNet<T>::VibNet(const VibNetConfig& config) : config_(config) {
  config_.check();
  Rng rng(derive_seed(config_.seed, "init"));
  auto dense = [&](const std::string& name, int in, int out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Dense d;
    d.weight = params_.uniform(name + ".weight",
                               {static_cast<std::size_t>(out), static_cast<std::size_t>(in)},
                               bound, rng);
    d.bias = params_.uniform(name + ".bias", {static_cast<std::size_t>(out)}, bound, rng);
    return d;
  };

  const auto H = static_cast<std::size_t>(config_.gru_hidden);
  int in = config_.seq_frame;
  for (int l = 0; l < config_.gru_layers; ++l) {
    const std::string name = "gru." + std::to_string(l);
    const double bound = 1.0 / std::sqrt(static_cast<double>(H));
    Gru g;
    g.w_ih = params_.uniform(name + ".w_ih", {3 * H, static_cast<std::size_t>(in)}, bound, rng);
    g.w_hh = params_.uniform(name + ".w_hh", {3 * H, H}, bound, rng);
    g.b_ih = params_.uniform(name + ".b_ih", {3 * H}, bound, rng);
    g.b_hh = params_.uniform(name + ".b_hh", {3 * H}, bound, rng);
    gru_.push_back(std::move(g));
    in = config_.gru_hidden;
  }

  stem_ = make_conv_bn("cnn.stem", config_.input_channels(), config_.stem_channels, 7, 2, 3, rng);
  int ch = config_.stem_channels;
  int b = 0;
  for (const auto& st : config_.stages) {
    for (int i = 0; i < st.blocks; ++i, ++b) {
      const std::string name = "cnn.block" + std::to_string(b);
      const int stride = i == 0 ? st.stride : 1;
      Block blk;
      blk.c1 = make_conv_bn(name + ".a", ch, st.mid, 1, 1, 0, rng);
      blk.c2 = make_conv_bn(name + ".b", st.mid, st.mid, 3, stride, 1, rng);
      blk.c3 = make_conv_bn(name + ".c", st.mid, st.out, 1, 1, 0, rng);
      if (stride != 1 || ch != st.out) {
        blk.projection = make_conv_bn(name + ".proj", ch, st.out, 1, stride, 0, rng);
      }
      blocks_.push_back(std::move(blk));
      ch = st.out;
    }
  }

  const int gru_width = config_.gru_flatten
                            ? config_.gru_hidden * static_cast<int>(kPaddedLength) /
                                  config_.seq_frame
                            : config_.gru_hidden;
  in = gru_width + ch;
  for (std::size_t i = 0; i < config_.head_dims.size(); ++i) {
    head_.push_back(dense("head." + std::to_string(i), in, config_.head_dims[i]));
    in = config_.head_dims[i];
  }
  out_ = dense("out", in, 3);
}

template <typename T>
std::vector<std::pair<std::string, ad::BatchNormStats<T>*>> VibNet<T>::buffers() {
  std::vector<std::pair<std::string, ad::BatchNormStats<T>*>> out;
  out.push_back({"cnn.stem", &stem_.stats});
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const std::string name = "cnn.block" + std::to_string(b);
    out.push_back({name + ".a", &blocks_[b].c1.stats});
    out.push_back({name + ".b", &blocks_[b].c2.stats});
    out.push_back({name + ".c", &blocks_[b].c3.stats});
    if (blocks_[b].projection) out.push_back({name + ".proj", &blocks_[b].projection->stats});
  }
  return out;
}

template <typename T>
Tensor<T> VibNet<T>::conv_bn(const ConvBn& c, const Tensor<T>& x, bool training) const {
  return ad::batchnorm2d(ad::conv2d(x, c.weight, Tensor<T>(), c.stride, c.padding), c.gamma,
                         c.beta, c.stats, training);
}

template <typename T>
Tensor<T> VibNet<T>::forward(const Tensor<T>& wave, const Tensor<T>& spec, bool training,
                             Rng& rng) const {
  if (wave.rank() != 2 || wave.dim(1) != kPaddedLength) {
    throw ShapeError("waveform batch must be (B, 6000), got " + ad::shape_str(wave.shape()));
  }
  const std::size_t B = wave.dim(0);
  const Shape want = {B, static_cast<std::size_t>(config_.input_channels()),
                      static_cast<std::size_t>(kStftBins),
                      static_cast<std::size_t>(kPaddedFrames)};
  if (spec.shape() != want) {
    throw ShapeError("spectrogram batch must be " + ad::shape_str(want) + ", got " +
                     ad::shape_str(spec.shape()));
  }
  const std::size_t frame = static_cast<std::size_t>(config_.seq_frame);
  const std::size_t steps = kPaddedLength / frame;
  Tensor<T> seq = ad::swap01(ad::reshape(wave, {B, steps, frame}));
  for (const auto& g : gru_) seq = ad::gru(seq, g.w_ih, g.w_hh, g.b_ih, g.b_hh, Tensor<T>());
  Tensor<T> g = config_.gru_flatten ? ad::flatten(ad::swap01(seq)) : ad::select0(seq, steps - 1);

  Tensor<T> y = ad::maxpool2d(ad::relu(conv_bn(stem_, spec, training)), 3, 2, 1);
  for (const auto& blk : blocks_) {
    Tensor<T> r = ad::relu(conv_bn(blk.c1, y, training));
    r = ad::relu(conv_bn(blk.c2, r, training));
    r = conv_bn(blk.c3, r, training);
    Tensor<T> shortcut = blk.projection ? conv_bn(*blk.projection, y, training) : y;
    y = ad::relu(ad::add(r, shortcut));
  }
  y = ad::global_avgpool(y);

  Tensor<T> h = ad::concat<T>({g, y}, 1);
  for (const auto& d : head_) {
    h = ad::dropout(ad::relu(ad::linear(h, d.weight, d.bias)), config_.dropout_p, training, rng);
  }
  return ad::linear(h, out_.weight, out_.bias);
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> VibNet<T>::batch(const PreparedSet& set,
                                                 const std::vector<std::size_t>& rows) const {
  const std::size_t C = set.channels, plane = PreparedSet::plane();
  std::vector<T> w(rows.size() * kPaddedLength), s(rows.size() * C * plane);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(set.waves.begin() + rows[i] * kPaddedLength, kPaddedLength,
                w.begin() + i * kPaddedLength);
    std::copy_n(set.specs.begin() + rows[i] * C * plane, C * plane, s.begin() + i * C * plane);
  }
  return {Tensor<T>::from({rows.size(), kPaddedLength}, std::move(w)),
          Tensor<T>::from({rows.size(), C, static_cast<std::size_t>(kStftBins),
                           static_cast<std::size_t>(kPaddedFrames)},
                          std::move(s))};
}

template <typename T>
std::vector<RatingTriple> VibNet<T>::predict(const PreparedSet& set, std::size_t batch_size) const {
  ad::NoGradGuard guard;
  Rng unused(0);
  std::vector<RatingTriple> out;
  for (std::size_t start = 0; start < set.size(); start += batch_size) {
    std::vector<std::size_t> rows;
    for (std::size_t i = start; i < std::min(set.size(), start + batch_size); ++i) {
      rows.push_back(i);
    }
    auto [w, s] = batch(set, rows);
    const Tensor<T> out_t = forward(w, s, false, unused);
    const auto y = out_t.values();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.push_back({static_cast<double>(y[3 * i]), static_cast<double>(y[3 * i + 1]),
                     static_cast<double>(y[3 * i + 2])});
    }
  }
  return out;
}

template <typename T>
RatingTriple VibNet<T>::predict(const Waveform& w) const {
  if (normalization.spec_mean.empty()) {
    throw ConfigError("model has no normalization statistics; train or load it first");
  }
  check_waveform(w);
  const RawExample ex = make_example(w, parse_channels(config_.channels));
  return predict(prepare({&ex}, normalization))[0];
}

template <typename T>
std::vector<EpochLog> train(VibNet<T>& model, const PreparedSet& train_set,
                            const PreparedSet* val_set, const TrainOptions& opts) {
  if (train_set.size() == 0) throw ValidationError("cannot train on an empty dataset");
  if (opts.epochs < 1 || opts.batch_size < 1) throw ConfigError("epochs and batch_size >= 1");
  if (train_set.channels != static_cast<std::size_t>(model.config().input_channels())) {
    throw ShapeError("training set has " + std::to_string(train_set.channels) +
                     " channels, model expects " +
                     std::to_string(model.config().input_channels()));
  }
  Rng rng(derive_seed(opts.seed, "train"));

  if (opts.init_output_bias) {
    std::array<double, 3> mean{};
    for (const auto& t : train_set.targets) {
      const auto a = t.as_array();
      for (std::size_t d = 0; d < 3; ++d) mean[d] += a[d];
    }
    auto* bias = model.params().find("out.bias");
    auto v = bias->tensor.mutable_values();
    for (std::size_t d = 0; d < 3; ++d) {
      v[d] = static_cast<T>(mean[d] / static_cast<double>(train_set.size()));
    }
  }

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<EpochLog> logs;
  for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += opts.batch_size, ++batch_index) {
      std::vector<std::size_t> rows(
          order.begin() + start,
          order.begin() + std::min(order.size(), start + static_cast<std::size_t>(opts.batch_size)));
      auto [w, s] = model.batch(train_set, rows);
      std::vector<T> tv;
      for (std::size_t r : rows) {
        for (double v : train_set.targets[r].as_array()) tv.push_back(static_cast<T>(v));
      }
      const auto target = Tensor<T>::from({rows.size(), 3}, std::move(tv));
      try {
        model.params().zero_grad();
        auto loss = ad::mse(model.forward(w, s, true, rng), target);
        loss_sum += static_cast<double>(loss.item()) * static_cast<double>(rows.size());
        loss.backward();
        ++model.adam_steps;
        ad::adam_step(model.params().items(), opts.adam, model.adam_steps);
        for (const auto& p : model.params().items()) {
          for (T v : p.tensor.values()) {
            if (!std::isfinite(v)) throw NonFiniteError("non-finite value in parameter " + p.name);
          }
        }
      } catch (const NonFiniteError& e) {
        throw NonFiniteError("training aborted at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_index) + ": " + e.what());
      }
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(train_set.size());
    if (val_set != nullptr && val_set->size() > 0) {
      log.val_rmse = evaluate_model(model, *val_set).rmse_avg;
    }
    logs.push_back(log);
    model.log.push_back(log);
    if (opts.on_epoch) opts.on_epoch(log);
  }
  return logs;
}

template <typename T>
Metrics evaluate_model(const VibNet<T>& model, const PreparedSet& set,
                       const std::vector<RatingTriple>* sds) {
  return evaluate(model.predict(set), set.targets, sds);
}

namespace {

template <typename T>
FoldResult run_fold(const VibNetConfig& config, const std::vector<RawExample>& examples,
                    const std::vector<int>& folds, int f, const TrainOptions& opts,
                    const std::vector<bool>* is_original) {
  std::vector<const RawExample*> tr, va;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (folds[i] != f) {
      tr.push_back(&examples[i]);
    } else if (is_original == nullptr || (*is_original)[i]) {
      va.push_back(&examples[i]);
    }
  }
  if (tr.empty() || va.empty()) throw ValidationError("fold " + std::to_string(f) + " is empty");
  VibNetConfig cfg = config;
  cfg.seed = derive_seed(config.seed, "fold/" + std::to_string(f));
  VibNet<T> model(cfg);
  model.normalization = fit_normalization(tr);
  const PreparedSet trs = prepare(tr, model.normalization);
  const PreparedSet vas = prepare(va, model.normalization);
  TrainOptions o = opts;
  o.seed = derive_seed(opts.seed, "fold/" + std::to_string(f));
  FoldResult r;
  r.fold = f;
  r.train_count = tr.size();
  r.val_count = va.size();
  r.log = train(model, trs, &vas, o);
  r.metrics = evaluate_model(model, vas);
  std::array<double, 3> mean{};
  for (const auto& t : trs.targets) {
    const auto a = t.as_array();
    for (std::size_t d = 0; d < 3; ++d) mean[d] += a[d] / static_cast<double>(trs.size());
  }
  r.mean_predictor =
      evaluate(std::vector<RatingTriple>(vas.size(), RatingTriple::from_array(mean)), vas.targets);
  return r;
}

}  // namespace

CvResult cross_validate(const VibNetConfig& config, const std::vector<RawExample>& examples,
                        const std::vector<std::string>& groups, int k,
                        const TrainOptions& opts, const std::vector<bool>* is_original) {
  if (groups.size() != examples.size()) throw ShapeError("one group id per example required");
  const auto folds = kfold_groups(groups, k, opts.seed);
  CvResult res;
  for (int f = 0; f < k; ++f) {
    res.folds.push_back(config.precision == Precision::kFloat32
                            ? run_fold<float>(config, examples, folds, f, opts, is_original)
                            : run_fold<double>(config, examples, folds, f, opts, is_original));
    res.mean_rmse += res.folds.back().metrics.rmse_avg / k;
  }
  return res;
}

json to_json(const CvResult& r) {
  json folds = json::array();
  for (const auto& f : r.folds) {
    json log = json::array();
    for (const auto& e : f.log) {
      log.push_back({{"epoch", e.epoch},
                     {"train_loss", e.train_loss},
                     {"val_rmse", e.val_rmse ? json(*e.val_rmse) : json(nullptr)}});
    }
    folds.push_back({{"fold", f.fold},
                     {"train_count", f.train_count},
                     {"val_count", f.val_count},
                     {"metrics", to_json(f.metrics)},
                     {"mean_predictor", to_json(f.mean_predictor)},
                     {"log", log}});
  }
  return {{"folds", folds}, {"mean_rmse", r.mean_rmse}};
}

namespace {

constexpr char kMagic[8] = {'V', 'I', 'B', 'K', 'I', 'T', 'C', 'K'};

void write_u32(std::ostream& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.put(static_cast<char>((v >> (8 * k)) & 0xff));
}

void write_u64(std::ostream& out, std::uint64_t v) {
  for (int k = 0; k < 8; ++k) out.put(static_cast<char>((v >> (8 * k)) & 0xff));
}

bool read_uint(std::istream& in, int bytes, std::uint64_t& v) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), bytes);
  if (in.gcount() != bytes) return false;
  v = 0;
  for (int k = 0; k < bytes; ++k) v |= static_cast<std::uint64_t>(buf[k]) << (8 * k);
  return true;
}

// Everything the checkpoint stores besides the config, as named flat arrays.
template <typename T>
std::vector<std::tuple<std::string, Shape, std::vector<T>*>> state_table(VibNet<T>& m) {
  std::vector<std::tuple<std::string, Shape, std::vector<T>*>> t;
  for (auto& p : m.params().items()) {
    t.emplace_back("param/" + p.name, p.tensor.shape(), &p.tensor.node()->value);
  }
  for (auto& p : m.params().items()) {
    t.emplace_back("adam_m/" + p.name, p.tensor.shape(), &p.m);
    t.emplace_back("adam_v/" + p.name, p.tensor.shape(), &p.v);
  }
  for (auto& [name, stats] : m.buffers()) {
    t.emplace_back("bn_mean/" + name, Shape{stats->mean.size()}, &stats->mean);
    t.emplace_back("bn_var/" + name, Shape{stats->var.size()}, &stats->var);
  }
  return t;
}

json log_json(const std::vector<EpochLog>& log) {
  json out = json::array();
  for (const auto& e : log) {
    out.push_back({{"epoch", e.epoch},
                   {"train_loss", e.train_loss},
                   {"val_rmse", e.val_rmse ? json(*e.val_rmse) : json(nullptr)}});
  }
  return out;
}

std::vector<EpochLog> log_from_json(const json& j) {
  std::vector<EpochLog> out;
  for (const auto& e : j) {
    EpochLog l;
    l.epoch = e.at("epoch").get<int>();
    l.train_loss = e.at("train_loss").get<double>();
    if (!e.at("val_rmse").is_null()) l.val_rmse = e.at("val_rmse").get<double>();
    out.push_back(l);
  }
  return out;
}

struct RawCheckpoint {
  json header;
  std::vector<unsigned char> blob;
};

RawCheckpoint read_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, kMagic, 8) != 0) {
    throw IoError(path.string() + " is not a vibkit checkpoint");
  }
  std::uint64_t version = 0, hlen = 0;
  if (!read_uint(in, 4, version)) throw IoError("truncated checkpoint " + path.string());
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint format version " + std::to_string(version) +
                       ", this build reads version " + std::to_string(kCheckpointVersion));
  }
  if (!read_uint(in, 8, hlen) || hlen > (1ull << 30)) {
    throw IoError("truncated checkpoint " + path.string());
  }
  std::string header(hlen, '\0');
  in.read(header.data(), static_cast<std::streamsize>(hlen));
  if (static_cast<std::uint64_t>(in.gcount()) != hlen) {
    throw IoError("truncated checkpoint header in " + path.string());
  }
  RawCheckpoint raw;
  try {
    raw.header = json::parse(header);
  } catch (const json::exception& e) {
    throw IoError("corrupt checkpoint header: " + std::string(e.what()));
  }
  raw.blob.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  return raw;
}

template <typename T>
VibNet<T> from_raw(const RawCheckpoint& raw) {
  const json& h = raw.header;
  try {
    const auto dtype = h.at("dtype").get<std::string>();
    if (dtype != (sizeof(T) == 4 ? "float32" : "float64")) {
      throw SchemaError("checkpoint holds " + dtype + " values");
    }
    VibNet<T> model(config_from_json(h.at("config")));
    model.normalization = normalization_from_json(h.at("normalization"));
    model.log = log_from_json(h.at("training_log"));
    model.adam_steps = h.at("adam_steps").get<long>();
    auto table = state_table(model);
    const auto& entries = h.at("tensors");
    if (entries.size() != table.size()) {
      throw IoError("checkpoint tensor table does not match the configured model");
    }
    for (std::size_t i = 0; i < table.size(); ++i) {
      auto& [name, shape, values] = table[i];
      const auto& e = entries.at(i);
      if (e.at("name").get<std::string>() != name || e.at("shape").get<Shape>() != shape) {
        throw IoError("checkpoint entry " + e.at("name").get<std::string>() +
                      " does not match model tensor " + name);
      }
      const std::size_t offset = e.at("offset").get<std::size_t>();
      const std::size_t count = ad::numel(shape);
      if ((offset + count) * sizeof(T) > raw.blob.size()) {
        throw IoError("truncated checkpoint data for " + name);
      }
      std::string bytes(reinterpret_cast<const char*>(raw.blob.data()) + offset * sizeof(T),
                        count * sizeof(T));
      std::istringstream is(bytes);
      values->resize(count);
      if constexpr (sizeof(T) == 4) {
        binio::read_f32_le(is, *values);
      } else {
        binio::read_f64_le(is, *values);
      }
    }
    return model;
  } catch (const json::exception& e) {
    throw IoError(std::string("corrupt checkpoint header: ") + e.what());
  }
}

}  // namespace

template <typename T>
void save_checkpoint(const VibNet<T>& model, const std::filesystem::path& path) {
  auto& m = const_cast<VibNet<T>&>(model);  // the table only reads
  const auto table = state_table(m);
  json entries = json::array();
  std::size_t offset = 0;
  for (const auto& [name, shape, values] : table) {
    entries.push_back({{"name", name}, {"shape", shape}, {"offset", offset}});
    offset += values->size();
  }
  const json header = {{"format", "vibkit-checkpoint"},
                       {"format_version", kCheckpointVersion},
                       {"dtype", sizeof(T) == 4 ? "float32" : "float64"},
                       {"config", to_json(model.config())},
                       {"normalization", to_json(model.normalization)},
                       {"adam_steps", model.adam_steps},
                       {"training_log", log_json(model.log)},
                       {"tensors", entries}};
  const std::string hs = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(kMagic, 8);
  write_u32(out, kCheckpointVersion);
  write_u64(out, hs.size());
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, shape, values] : table) {
    if constexpr (sizeof(T) == 4) {
      binio::write_f32_le(out, *values);
    } else {
      binio::write_f64_le(out, *values);
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::unique_ptr<LoadedModel> load_checkpoint(const std::filesystem::path& path) {
  const RawCheckpoint raw = read_raw(path);
  const auto dtype = raw.header.value("dtype", std::string());
  if (dtype == "float32") return std::make_unique<TypedModel<float>>(from_raw<float>(raw));
  if (dtype == "float64") return std::make_unique<TypedModel<double>>(from_raw<double>(raw));
  throw IoError("checkpoint has unknown dtype '" + dtype + "'");
}

template <typename T>
VibNet<T> load_checkpoint_as(const std::filesystem::path& path) {
  return from_raw<T>(read_raw(path));
}

#define VIBKIT_INSTANTIATE(T)                                                               \
  template class VibNet<T>;                                                                 \
  template std::vector<EpochLog> train(VibNet<T>&, const PreparedSet&, const PreparedSet*,  \
                                       const TrainOptions&);                                \
  template Metrics evaluate_model(const VibNet<T>&, const PreparedSet&,                     \
                                  const std::vector<RatingTriple>*);                        \
  template void save_checkpoint(const VibNet<T>&, const std::filesystem::path&);            \
  template VibNet<T> load_checkpoint_as(const std::filesystem::path&);

VIBKIT_INSTANTIATE(float)
VIBKIT_INSTANTIATE(double)

}  // namespace vibkit
