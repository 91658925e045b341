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

#ifndef VIBKIT_VIBNET_HPP_
#define VIBKIT_VIBNET_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "vibkit/dataset.hpp"
#include "vibkit/mechano.hpp"
#include "vibkit/nn.hpp"

namespace vibkit {

enum class Precision { kFloat32, kFloat64 };
std::string to_string(Precision p);
Precision precision_from_string(const std::string& s);

// A run of bottleneck blocks; the first block applies `stride` and, when the
// shape changes, a projection shortcut.
struct StageSpec {
  int blocks = 1;
  int mid = 8;
  int out = 32;
  int stride = 1;
};

struct VibNetConfig {
  int gru_layers = 2;
  int gru_hidden = 32;
  int seq_frame = 10;           // waveform samples per GRU step
  bool gru_flatten = false;     // full hidden sequence instead of last state
  int stem_channels = 16;       // 7x7 stride-2 conv, then 3x3 stride-2 max pool
  std::vector<StageSpec> stages = {{1, 8, 32, 1}, {1, 16, 64, 2}, {1, 16, 64, 2}};
  std::vector<int> head_dims = {64, 32, 16};
  double dropout_p = 0.5;
  std::string channels = "RA1,RA2";
  Precision precision = Precision::kFloat32;
  std::uint64_t seed = 0;

  int input_channels() const;
  // Convolution layers in the residual stream (stem plus three per block).
  int conv_layers() const;
  // Throws ConfigError naming the offending field.
  void check() const;

  // Roughly 10 convolution layers, gru_hidden 32.
  static VibNetConfig desk();
  // Two 1024-unit GRU layers, 154 convolution layers, head 1024/128/16.
  static VibNetConfig reference();
  // Small enough for exhaustive finite-difference checks.
  static VibNetConfig tiny();
};

nlohmann::json to_json(const VibNetConfig& c);
// Missing fields keep their desk defaults.
VibNetConfig config_from_json(const nlohmann::json& j);

// Input normalization fitted on training data. Spectrogram magnitudes go
// through log1p, then per-channel standardization; waveforms (G) are
// multiplied by waveform_scale.
struct Normalization {
  std::vector<double> spec_mean;
  std::vector<double> spec_std;
  double waveform_scale = 1.0;
};

nlohmann::json to_json(const Normalization& n);
Normalization normalization_from_json(const nlohmann::json& j);

// Model inputs in float32 storage, already normalized.
struct PreparedSet {
  std::size_t channels = 0;
  std::vector<float> waves;  // (N, 6000)
  std::vector<float> specs;  // (N, C, 251, 121)
  std::vector<RatingTriple> targets;

  std::size_t size() const { return targets.size(); }
  static constexpr std::size_t plane() {
    return static_cast<std::size_t>(kStftBins) * kPaddedFrames;
  }
};

// Raw pipeline inputs: the 1 kHz waveform and its spectrogram stack.
struct RawExample {
  Waveform waveform;
  SpectrogramStack spectrogram;
  RatingTriple target;
};

// Zero-pads (rejecting over-length or wrong-rate input) and computes the
// stack for `channels`.
RawExample make_example(const Waveform& w, const std::vector<Channel>& channels,
                        RatingTriple target = {});

Normalization fit_normalization(const std::vector<const RawExample*>& examples);
PreparedSet prepare(const std::vector<const RawExample*>& examples,
                    const Normalization& norm);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_rmse;
};

struct TrainOptions {
  int epochs = 100;
  int batch_size = 32;
  ad::AdamConfig adam;
  std::uint64_t seed = 0;
  // Start the output bias at the per-dimension training-target mean.
  bool init_output_bias = true;
  std::function<void(const EpochLog&)> on_epoch;
};

template <typename T>
class VibNet {
 public:
  explicit VibNet(const VibNetConfig& config);

  const VibNetConfig& config() const { return config_; }
  ad::ParamSet<T>& params() { return params_; }
  const ad::ParamSet<T>& params() const { return params_; }

  // Batch-norm running statistics, in a fixed order, with names.
  std::vector<std::pair<std::string, ad::BatchNormStats<T>*>> buffers();

  // wave (B, 6000), spec (B, C, 251, 121), both normalized -> (B, 3).
  // Eval mode never mutates the model and is safe to call concurrently.
  ad::Tensor<T> forward(const ad::Tensor<T>& wave, const ad::Tensor<T>& spec,
                        bool training, Rng& rng) const;

  // Eval-mode predictions for a prepared set, in batches.
  std::vector<RatingTriple> predict(const PreparedSet& set, std::size_t batch = 32) const;

  // Raw (unclamped) prediction for one 1 kHz waveform of <= 6000 samples.
  RatingTriple predict(const Waveform& w) const;

  Normalization normalization;
  std::vector<EpochLog> log;
  long adam_steps = 0;

  // Slices rows [begin, end) of a prepared set into model tensors.
  std::pair<ad::Tensor<T>, ad::Tensor<T>> batch(const PreparedSet& set,
                                                const std::vector<std::size_t>& rows) const;

 private:
  struct ConvBn {
    ad::Tensor<T> weight, gamma, beta;
    mutable ad::BatchNormStats<T> stats;
    int stride = 1;
    int padding = 0;
  };
  struct Block {
    ConvBn c1, c2, c3;
    std::optional<ConvBn> projection;
  };
  struct Gru {
    ad::Tensor<T> w_ih, w_hh, b_ih, b_hh;
  };
  struct Dense {
    ad::Tensor<T> weight, bias;
  };

  ConvBn make_conv_bn(const std::string& name, int in, int out, int k, int stride, int pad,
                      Rng& rng);
  ad::Tensor<T> conv_bn(const ConvBn& c, const ad::Tensor<T>& x, bool training) const;

  VibNetConfig config_;
  ad::ParamSet<T> params_;
  std::vector<Gru> gru_;
  ConvBn stem_;
  std::vector<Block> blocks_;
  std::vector<Dense> head_;
  Dense out_;
};

template <typename T>
std::vector<EpochLog> train(VibNet<T>& model, const PreparedSet& train_set,
                            const PreparedSet* val_set, const TrainOptions& opts);

// Held-out evaluation of a trained model.
template <typename T>
Metrics evaluate_model(const VibNet<T>& model, const PreparedSet& set,
                       const std::vector<RatingTriple>* sds = nullptr);

struct FoldResult {
  int fold = 0;
  std::size_t train_count = 0;
  std::size_t val_count = 0;
  Metrics metrics;
  Metrics mean_predictor;
  std::vector<EpochLog> log;
};

struct CvResult {
  std::vector<FoldResult> folds;
  double mean_rmse = 0.0;
};

// k-fold cross-validation grouped by `groups` (e.g. tacton ids, so
// augmented variants never straddle folds). Validation uses only examples
// flagged in `is_original` when given.
CvResult cross_validate(const VibNetConfig& config, const std::vector<RawExample>& examples,
                        const std::vector<std::string>& groups, int k,
                        const TrainOptions& opts,
                        const std::vector<bool>* is_original = nullptr);

nlohmann::json to_json(const CvResult& r);

// Checkpoint: magic "VIBKITCK", u32 format version, u64 header length, the
// JSON header (config, normalization, tensor table, training log), then the
// little-endian parameter/state blob in the model's precision.
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const VibNet<T>& model, const std::filesystem::path& path);

// Either precision, behind one interface.
class LoadedModel {
 public:
  virtual ~LoadedModel() = default;
  virtual const VibNetConfig& config() const = 0;
  virtual const Normalization& normalization() const = 0;
  virtual RatingTriple predict(const Waveform& w) const = 0;
  virtual std::vector<RatingTriple> predict(const PreparedSet& set) const = 0;
  virtual std::size_t parameter_count() const = 0;
  virtual void save(const std::filesystem::path& path) const = 0;
};

template <typename T>
class TypedModel final : public LoadedModel {
 public:
  explicit TypedModel(VibNet<T> m) : model_(std::move(m)) {}
  const VibNetConfig& config() const override { return model_.config(); }
  const Normalization& normalization() const override { return model_.normalization; }
  RatingTriple predict(const Waveform& w) const override { return model_.predict(w); }
  std::vector<RatingTriple> predict(const PreparedSet& set) const override {
    return model_.predict(set);
  }
  std::size_t parameter_count() const override { return model_.params().scalar_count(); }
  void save(const std::filesystem::path& path) const override {
    save_checkpoint(model_, path);
  }
  VibNet<T>& model() { return model_; }

 private:
  VibNet<T> model_;
};

// Throws VersionError on a format mismatch and IoError on truncation.
std::unique_ptr<LoadedModel> load_checkpoint(const std::filesystem::path& path);

template <typename T>
VibNet<T> load_checkpoint_as(const std::filesystem::path& path);

}  // namespace vibkit

#endif  // VIBKIT_VIBNET_HPP_
