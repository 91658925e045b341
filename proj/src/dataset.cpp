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

#include "vibkit/dataset.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "vibkit/error.hpp"
#include "vibkit/filter.hpp"
#include "vibkit/mechano.hpp"
#include "vibkit/random.hpp"

namespace vibkit {

using nlohmann::json;

namespace {

double clip01(double x) { return std::clamp(x, 0.0, 1.0); }

std::string fmt_id(const char* prefix, std::size_t i) {
  std::ostringstream os;
  os << prefix;
  os.width(4);
  os.fill('0');
  os << i;
  return os.str();
}

template <typename F>
auto schema_guard(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw SchemaError(std::string(what) + ": " + e.what());
  }
}

std::filesystem::path resolve(const std::filesystem::path& p,
                              const std::filesystem::path& base) {
  return p.is_absolute() || base.empty() ? p : base / p;
}

}  // namespace

RatingTriple RatingTriple::clamped() const {
  return {std::clamp(roughness, 0.0, 100.0), std::clamp(valence, 0.0, 100.0),
          std::clamp(arousal, 0.0, 100.0)};
}

void check_ratings(const RatingTriple& r) {
  const auto a = r.as_array();
  for (std::size_t d = 0; d < 3; ++d) {
    if (!(a[d] >= 0.0 && a[d] <= 100.0)) {
      throw ValidationError(std::string(kDimensionNames[d]) + " rating " +
                            std::to_string(a[d]) + " outside [0, 100]");
    }
  }
}

json to_json(const RatingTriple& r) {
  return {{"r", r.roughness}, {"v", r.valence}, {"a", r.arousal}};
}

RatingTriple rating_from_json(const json& j) {
  return schema_guard("ratings", [&] {
    return RatingTriple{j.at("r").get<double>(), j.at("v").get<double>(),
                        j.at("a").get<double>()};
  });
}

json to_json(const DatasetRecord& r) {
  json j = {{"record_id", r.record_id},
            {"tacton_id", r.tacton_id},
            {"source", r.source},
            {"waveform_path", r.waveform_path.generic_string()},
            {"ratings", to_json(r.ratings)}};
  if (r.rating_sd) j["sd"] = to_json(*r.rating_sd);
  if (r.device_label) j["device_label"] = *r.device_label;
  if (r.spectrogram_path) j["spectrogram_path"] = r.spectrogram_path->generic_string();
  if (r.augmentation) j["augmentation"] = *r.augmentation;
  return j;
}

DatasetRecord record_from_json(const json& j, const std::filesystem::path& base) {
  DatasetRecord r = schema_guard("dataset record", [&] {
    DatasetRecord r;
    r.record_id = j.at("record_id").get<std::string>();
    r.tacton_id = j.at("tacton_id").get<std::string>();
    r.source = j.value("source", std::string("synthetic"));
    r.waveform_path = resolve(j.at("waveform_path").get<std::string>(), base);
    r.ratings = rating_from_json(j.at("ratings"));
    if (j.contains("sd")) r.rating_sd = rating_from_json(j.at("sd"));
    if (j.contains("device_label")) r.device_label = j.at("device_label").get<std::string>();
    if (j.contains("spectrogram_path")) {
      r.spectrogram_path = resolve(j.at("spectrogram_path").get<std::string>(), base);
    }
    if (j.contains("augmentation")) r.augmentation = j.at("augmentation").get<std::string>();
    return r;
  });
  if (r.source != "synthetic" && r.source != "external") {
    throw SchemaError("record " + r.record_id + ": source must be synthetic or external");
  }
  check_ratings(r.ratings);
  if (r.rating_sd) {
    for (double v : r.rating_sd->as_array()) {
      if (!(v >= 0.0)) throw ValidationError("record " + r.record_id + ": negative rating sd");
    }
  }
  return r;
}

void write_manifest(const std::filesystem::path& path,
                    const std::vector<DatasetRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& r : records) out << to_json(r).dump() << "\n";
}

std::vector<DatasetRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::vector<DatasetRecord> out;
  std::string line;
  std::size_t lineno = 0;
  const auto base = path.parent_path();
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(record_from_json(j, base));
  }
  return out;
}

LabelAggregation label_aggregation_from_string(const std::string& s) {
  if (s == "per-device") return LabelAggregation::kPerDevice;
  if (s == "global-mean") return LabelAggregation::kGlobalMean;
  throw ConfigError("label aggregation must be per-device or global-mean, got " + s);
}

std::vector<DatasetRecord> aggregate_labels(std::vector<DatasetRecord> records,
                                            LabelAggregation mode) {
  if (mode == LabelAggregation::kPerDevice) return records;
  std::map<std::string, std::pair<std::array<double, 3>, std::size_t>> acc;
  for (const auto& r : records) {
    auto& [sum, n] = acc[r.tacton_id];
    const auto a = r.ratings.as_array();
    for (std::size_t d = 0; d < 3; ++d) sum[d] += a[d];
    ++n;
  }
  for (auto& r : records) {
    const auto& [sum, n] = acc[r.tacton_id];
    std::array<double, 3> m;
    for (std::size_t d = 0; d < 3; ++d) m[d] = sum[d] / static_cast<double>(n);
    r.ratings = RatingTriple::from_array(m);
  }
  return records;
}

OracleFeatures oracle_features(const Waveform& w) {
  check_waveform(w);
  const Waveform g = to_acceleration(w);
  OracleFeatures f;

  std::vector<double> rect(g.samples.size());
  for (std::size_t i = 0; i < rect.size(); ++i) rect[i] = std::abs(g.samples[i]);
  const double energy = std::accumulate(rect.begin(), rect.end(), 0.0);
  if (energy > 0.0) {
    const auto env = dsp::sosfiltfilt(dsp::butter_lowpass(4, 20.0, g.sample_rate), rect);
    const double n = static_cast<double>(env.size());
    const double mean = std::accumulate(env.begin(), env.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : env) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / n);
    if (mean > 0.0) f.envelope_index = std::clamp(sd / mean, 0.0, 1.5) / 1.5;
  }

  const Waveform view =
      g.samples.size() <= kPaddedLength ? zero_pad(g, kPaddedLength) : g;
  const StftFrames fr = stft(view);
  double num = 0.0, den = 0.0;
  for (int k = 0; k < fr.bins; ++k) {
    double mag = 0.0;
    for (int t = 0; t < fr.frames; ++t) mag += std::abs(fr.at(k, t));
    mag /= fr.frames;
    const double hz = k * static_cast<double>(g.sample_rate) / kStftWindow;
    num += hz * mag;
    den += mag;
  }
  if (den > 0.0) f.centroid = num / den / 500.0;

  f.magnitude = rms(g.samples) / kDefaultDeviceGain;
  return f;
}

RatingTriple oracle_ratings(const OracleFeatures& f) {
  const double e = f.envelope_index, s = f.centroid, m = f.magnitude;
  RatingTriple r;
  r.roughness = 100.0 * clip01(0.6 * e + 0.4 * (1.0 - s));
  r.arousal = 100.0 * clip01(0.5 * e + 0.3 * m + 0.2 * (1.0 - s));
  r.valence = 100.0 * clip01(1.0 - 0.7 * (r.arousal / 100.0) - 0.3 * e);
  return r;
}

RatingTriple synthetic_oracle(const TactonSpec& spec, const Waveform& w) {
  const double expected = spec_duration(spec);
  if (std::abs(w.duration() - expected) > 0.002 + 0.01 * expected) {
    throw ValidationError("waveform duration " + std::to_string(w.duration()) +
                          " s does not match the spec's " + std::to_string(expected) + " s");
  }
  return oracle_ratings(oracle_features(w));
}

std::array<double, 3> rmse(const std::vector<RatingTriple>& preds,
                           const std::vector<RatingTriple>& truths) {
  if (preds.size() != truths.size() || preds.empty()) {
    throw ValidationError("rmse needs equal, non-zero lengths; got " +
                          std::to_string(preds.size()) + " predictions and " +
                          std::to_string(truths.size()) + " truths");
  }
  std::array<double, 3> acc{};
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto p = preds[i].as_array();
    const auto t = truths[i].as_array();
    for (std::size_t d = 0; d < 3; ++d) acc[d] += (p[d] - t[d]) * (p[d] - t[d]);
  }
  for (double& v : acc) v = std::sqrt(v / static_cast<double>(preds.size()));
  return acc;
}

std::array<double, 3> within_sd(const std::vector<RatingTriple>& preds,
                                const std::vector<RatingTriple>& means,
                                const std::vector<RatingTriple>& sds) {
  if (preds.size() != means.size() || preds.size() != sds.size() || preds.empty()) {
    throw ValidationError("within_sd needs equal, non-zero lengths");
  }
  std::array<double, 3> hits{};
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto p = preds[i].as_array();
    const auto m = means[i].as_array();
    const auto s = sds[i].as_array();
    for (std::size_t d = 0; d < 3; ++d) hits[d] += std::abs(p[d] - m[d]) <= s[d] ? 1.0 : 0.0;
  }
  for (double& v : hits) v /= static_cast<double>(preds.size());
  return hits;
}

Metrics evaluate(const std::vector<RatingTriple>& preds,
                 const std::vector<RatingTriple>& truths,
                 const std::vector<RatingTriple>* sds) {
  Metrics m;
  m.count = preds.size();
  const auto r = rmse(preds, truths);
  for (std::size_t d = 0; d < 3; ++d) m.per_dim[d].rmse = r[d];
  m.rmse_avg = (r[0] + r[1] + r[2]) / 3.0;
  if (sds != nullptr) {
    const auto w = within_sd(preds, truths, *sds);
    for (std::size_t d = 0; d < 3; ++d) m.per_dim[d].within_sd = w[d];
    m.within_sd_avg = (w[0] + w[1] + w[2]) / 3.0;
  }
  return m;
}

json to_json(const Metrics& m) {
  json per = json::object();
  for (std::size_t d = 0; d < 3; ++d) {
    per[kDimensionNames[d]] = {{"rmse", m.per_dim[d].rmse},
                               {"within_sd", m.per_dim[d].within_sd
                                                 ? json(*m.per_dim[d].within_sd)
                                                 : json(nullptr)}};
  }
  return {{"count", m.count},
          {"per_dim", per},
          {"averages",
           {{"rmse", m.rmse_avg},
            {"within_sd", m.within_sd_avg ? json(*m.within_sd_avg) : json(nullptr)}}}};
}

std::string metrics_csv(const Metrics& m) {
  std::ostringstream os;
  os.precision(17);
  auto opt = [](const std::optional<double>& v) {
    std::ostringstream s;
    s.precision(17);
    if (v) s << *v;
    return s.str();
  };
  os << "dimension,rmse,within_sd\n";
  for (std::size_t d = 0; d < 3; ++d) {
    os << kDimensionNames[d] << "," << m.per_dim[d].rmse << "," << opt(m.per_dim[d].within_sd)
       << "\n";
  }
  os << "average," << m.rmse_avg << "," << opt(m.within_sd_avg) << "\n";
  return os.str();
}

std::vector<int> kfold_split(std::size_t n, int k, std::uint64_t seed) {
  if (k < 2 || n < static_cast<std::size_t>(k)) {
    throw ConfigError("kfold needs n >= k >= 2, got n=" + std::to_string(n) +
                      " k=" + std::to_string(k));
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(seed, "kfold"));
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  std::vector<int> fold(n);
  for (std::size_t i = 0; i < n; ++i) fold[perm[i]] = static_cast<int>(i % k);
  return fold;
}

std::vector<int> kfold_groups(const std::vector<std::string>& groups, int k,
                              std::uint64_t seed) {
  std::map<std::string, std::size_t> index;
  std::vector<std::size_t> gid(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    gid[i] = index.emplace(groups[i], index.size()).first->second;
  }
  // Order group ids by first appearance so the assignment ignores map order.
  std::vector<std::size_t> order(index.size());
  {
    std::vector<bool> seen(index.size(), false);
    std::size_t next = 0;
    for (std::size_t g : gid) {
      if (!seen[g]) {
        seen[g] = true;
        order[g] = next++;
      }
    }
  }
  const auto folds = kfold_split(index.size(), k, seed);
  std::vector<int> out(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) out[i] = folds[order[gid[i]]];
  return out;
}

std::array<double, 5> baseline_features(const Waveform& w) {
  check_waveform(w);
  if (w.sample_rate != kPipelineRate) {
    throw RateError("baseline features need 1000 Hz input, got " +
                    std::to_string(w.sample_rate));
  }
  const Waveform p = zero_pad(to_acceleration(w), kPaddedLength);
  const auto& x = p.samples;
  std::array<double, 5> f{};
  f[0] = rms(x);

  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, x);
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k <= x.size() / 2; ++k) {
    const double mag = std::abs(spec[k]);
    num += mag * static_cast<double>(k) * kPipelineRate / static_cast<double>(x.size());
    den += mag;
  }
  f[1] = den > 0.0 ? num / den : 0.0;

  std::size_t last = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] != 0.0) last = i + 1;
  }
  f[2] = static_cast<double>(last) / kPipelineRate;

  const std::size_t frame = 50;
  std::vector<double> fr;
  for (std::size_t s = 0; s + frame <= x.size(); s += frame) {
    fr.push_back(rms(std::vector<double>(x.begin() + s, x.begin() + s + frame)));
  }
  const double mean = std::accumulate(fr.begin(), fr.end(), 0.0) / fr.size();
  if (mean > 0.0) {
    double ss = 0.0;
    for (double v : fr) ss += (v - mean) * (v - mean);
    f[3] = std::sqrt(ss / fr.size()) / mean;
  }
  f[4] = peak(x);
  return f;
}

std::vector<double> LinearModel::predict(const std::vector<double>& x) const {
  std::vector<double> y;
  for (const auto& row : coef) {
    if (row.size() != x.size() + 1) {
      throw ShapeError("linear model expects " + std::to_string(row.size() - 1) +
                       " features, got " + std::to_string(x.size()));
    }
    double v = row[0];
    for (std::size_t i = 0; i < x.size(); ++i) v += row[i + 1] * x[i];
    y.push_back(v);
  }
  return y;
}

LinearModel fit_linear(const std::vector<std::vector<double>>& x,
                       const std::vector<std::vector<double>>& y) {
  if (x.empty() || x.size() != y.size()) {
    throw ValidationError("linear fit needs matching, non-empty inputs");
  }
  const std::size_t n = x.size(), p = x[0].size() + 1, q = y[0].size();
  Eigen::MatrixXd X(n, p), Y(n, q);
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i].size() + 1 != p || y[i].size() != q) throw ShapeError("ragged linear-fit input");
    X(i, 0) = 1.0;
    for (std::size_t j = 1; j < p; ++j) X(i, j) = x[i][j - 1];
    for (std::size_t j = 0; j < q; ++j) Y(i, j) = y[i][j];
  }
  LinearModel m;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  Eigen::MatrixXd B;
  if (qr.rank() == static_cast<Eigen::Index>(p)) {
    B = qr.solve(Y);
  } else {
    m.ridge_fallback = true;
    Eigen::MatrixXd A = X.transpose() * X;
    for (std::size_t j = 1; j < p; ++j) A(j, j) += 1e-6;
    A(0, 0) += 1e-12;
    B = A.ldlt().solve(X.transpose() * Y);
  }
  for (std::size_t j = 0; j < q; ++j) {
    std::vector<double> row(p);
    for (std::size_t i = 0; i < p; ++i) row[i] = B(i, j);
    m.coef.push_back(std::move(row));
  }
  return m;
}

BaselineResult linear_baseline(const std::vector<std::vector<double>>& train_x,
                               const std::vector<RatingTriple>& train_y,
                               const std::vector<std::vector<double>>& test_x,
                               const std::vector<RatingTriple>& test_y) {
  std::vector<std::vector<double>> y;
  for (const auto& r : train_y) {
    const auto a = r.as_array();
    y.emplace_back(a.begin(), a.end());
  }
  BaselineResult res;
  res.model = fit_linear(train_x, y);
  for (const auto& x : test_x) {
    const auto p = res.model.predict(x);
    res.predictions.push_back({p[0], p[1], p[2]});
  }
  res.metrics = evaluate(res.predictions, test_y);
  return res;
}

std::array<std::size_t, 3> family_counts(std::size_t n) {
  const std::array<std::size_t, 3> w = {54, 60, 40};
  const std::size_t total = 154;
  std::array<std::size_t, 3> c{};
  std::array<std::pair<std::size_t, std::size_t>, 3> rem;  // (remainder, index)
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    c[i] = n * w[i] / total;
    rem[i] = {n * w[i] % total, i};
    assigned += c[i];
  }
  std::stable_sort(rem.begin(), rem.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++c[rem[i].second];
  return c;
}

namespace {

// Slot patterns repeated to fill 2 s (64 slots): varying note length and
// evenness.
const std::array<const char*, 10> kRhythms = {
    "10",       "1100",     "11110000", "1111111100000000", "111000",
    "10100000", "1101000",  "11111100", "1000",             "1110110000000000"};

std::vector<int> rhythm_pulses(std::size_t which) {
  const std::string pat = kRhythms[which];
  std::vector<int> p(64);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = pat[i % pat.size()] == '1';
  return p;
}

template <typename T, std::size_t N>
T pick(const std::array<T, N>& a, Rng& rng) {
  return a[rng.below(N)];
}

TactonSpec random_spec(std::size_t family, Rng& rng) {
  if (family == 0) {
    return SinusoidalSpec{pick(std::array{0.5, 1.0}, rng), pick(std::array{80.0, 155.0, 230.0}, rng),
                          pick(std::array{0.0, 4.0, 8.0}, rng),
                          pick(std::array{0.3, 1.0, 2.0}, rng)};
  }
  if (family == 1) {
    RhythmicSpec r;
    r.amplitude = pick(std::array{0.5, 1.0}, rng);
    r.carrier_freq = pick(std::array{80.0, 150.0, 230.0}, rng);
    r.pulses = rhythm_pulses(rng.below(kRhythms.size()));
    return r;
  }
  ComplexSpec c;
  c.duration = std::round(rng.uniform(0.43, 5.38) * 1000.0) / 1000.0;
  auto track = [&](std::size_t points, double lo, double hi) {
    std::vector<double> ts = {0.0, c.duration};
    for (std::size_t i = 2; i < points; ++i) ts.push_back(rng.uniform(0.0, c.duration));
    std::sort(ts.begin(), ts.end());
    std::vector<Breakpoint> out;
    for (double t : ts) {
      if (!out.empty() && t - out.back().t < 1e-3) continue;
      out.push_back({t, rng.uniform(lo, hi)});
    }
    out.back().t = c.duration;
    return out;
  };
  c.envelope_track = track(3 + rng.below(6), 0.0, 1.0);
  c.frequency_track = track(2 + rng.below(4), 80.0, 230.0);
  return c;
}

}  // namespace

std::vector<CorpusItem> generate_corpus(std::size_t n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("corpus size must be >= 1");
  const auto counts = family_counts(n);
  std::vector<CorpusItem> out;
  out.reserve(n);
  std::size_t family = 0, used = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (used == counts[family]) {
      ++family;
      used = 0;
    }
    ++used;
    Rng rng(derive_seed(seed, "corpus/" + std::to_string(i)));
    CorpusItem item;
    item.id = fmt_id("T", i + 1);
    item.spec = random_spec(family, rng);
    const auto report = validate(item.spec);
    if (!report.ok) throw ValidationError("generated spec failed validation: " + item.id);
    item.waveform = to_acceleration(downsample(synthesize(item.spec, 10000), kPipelineRate));
    item.ratings = synthetic_oracle(item.spec, item.waveform);
    out.push_back(std::move(item));
  }
  return out;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw ValidationError("pearson needs >= 2 pairs");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace vibkit
