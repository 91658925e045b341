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

#ifndef VIBKIT_OPS_HPP_
#define VIBKIT_OPS_HPP_

#include <cstdint>
#include <vector>

#include "vibkit/random.hpp"
#include "vibkit/tensor.hpp"

namespace vibkit::ad {

// Fingerprints the branches taken by piecewise ops (relu signs, max-pool
// winners) on this thread while alive. Two forward passes with equal
// fingerprints lie on the same smooth piece of the graph.
class BranchTrace {
 public:
  BranchTrace();
  ~BranchTrace();
  BranchTrace(const BranchTrace&) = delete;
  BranchTrace& operator=(const BranchTrace&) = delete;

  std::uint64_t fingerprint() const { return hash_; }
  void reset() { hash_ = kSeed; }
  void mix(std::uint64_t v);

 private:
  static constexpr std::uint64_t kSeed = 1469598103934665603ULL;
  std::uint64_t hash_ = kSeed;
  BranchTrace* previous_;
};

// All ops check shapes (ShapeError naming both shapes), record a backward
// closure when any input requires grad, and reject non-finite results.

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T s);
template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);

template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> tanh(const Tensor<T>& x);

// (m, k) x (k, n).
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// x (B, in), weight (out, in), bias (out) or undefined -> (B, out).
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

// x (B, C, H, W), kernel (O, C, kh, kw), bias (O) or undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                 int stride, int padding);

// Running statistics, updated in place in training mode.
template <typename T>
struct BatchNormStats {
  std::vector<T> mean;
  std::vector<T> var;
};

// Per-channel normalization over (B, H, W). Training mode uses batch
// statistics (biased variance) and updates `stats` with `momentum`
// (unbiased variance); eval mode uses `stats`.
template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                      BatchNormStats<T>& stats, bool training, T momentum = T(0.1),
                      T eps = T(1e-5));

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, int kernel, int stride, int padding = 0);
template <typename T>
Tensor<T> avgpool2d(const Tensor<T>& x, int kernel, int stride);
// (B, C, H, W) -> (B, C).
template <typename T> Tensor<T> global_avgpool(const Tensor<T>& x);

template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
// Keeps dimension 0, folds the rest.
template <typename T> Tensor<T> flatten(const Tensor<T>& x);
// Swaps dimensions 0 and 1.
template <typename T> Tensor<T> swap01(const Tensor<T>& x);
// x[index] along dimension 0 (that dimension is dropped).
template <typename T> Tensor<T> select0(const Tensor<T>& x, std::size_t index);

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);
template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& x, const std::vector<std::size_t>& sizes,
                             std::size_t axis);

// Inverted dropout: in training mode zeroes each element with probability p
// and scales survivors by 1 / (1 - p). Identity (same tensor) when p == 0 or
// not training; no random numbers are consumed then.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool training, Rng& rng);

// Mean squared error over all elements.
template <typename T> Tensor<T> mse(const Tensor<T>& pred, const Tensor<T>& target);

// GRU over x (T, B, I) with gates ordered (reset, update, candidate):
//   r = sigmoid(W_r x + b_r + U_r h + c_r)
//   z = sigmoid(W_z x + b_z + U_z h + c_z)
//   n = tanh(W_n x + b_n + U_n (r * h) + c_n)
//   h' = (1 - z) * h + z * n
// w_ih (3H, I), w_hh (3H, H), b_ih and b_hh (3H); h0 (B, H) or undefined for
// zeros. Returns the hidden sequence (T, B, H); backward is exact BPTT.
template <typename T>
Tensor<T> gru(const Tensor<T>& x, const Tensor<T>& w_ih, const Tensor<T>& w_hh,
              const Tensor<T>& b_ih, const Tensor<T>& b_hh, const Tensor<T>& h0);

}  // namespace vibkit::ad

#endif  // VIBKIT_OPS_HPP_
