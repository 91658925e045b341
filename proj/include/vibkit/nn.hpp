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

#ifndef VIBKIT_NN_HPP_
#define VIBKIT_NN_HPP_

#include <string>
#include <vector>

#include "json.hpp"
#include "vibkit/ops.hpp"
#include "vibkit/random.hpp"
#include "vibkit/tensor.hpp"

namespace vibkit::ad {

// A named trainable tensor plus its Adam moments.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
  std::vector<T> m;
  std::vector<T> v;
};

// Owns a model's parameters in creation order. Names must be unique.
template <typename T>
class ParamSet {
 public:
  // Uniform in [-bound, bound].
  Tensor<T> uniform(const std::string& name, Shape shape, double bound, Rng& rng);
  Tensor<T> constant(const std::string& name, Shape shape, T value);

  std::vector<Parameter<T>>& items() { return params_; }
  const std::vector<Parameter<T>>& items() const { return params_; }
  // nullptr when absent.
  Parameter<T>* find(const std::string& name);
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  Tensor<T> add(const std::string& name, Tensor<T> t);
  std::vector<Parameter<T>> params_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update at step t (t >= 1). Parameters without an
// accumulated gradient are treated as having a zero gradient.
template <typename T>
void adam_step(std::vector<Parameter<T>>& params, const AdamConfig& cfg, long t);

// Fixture format {"shape": [...], "data": [...]}, full precision.
template <typename T>
nlohmann::json tensor_to_json(const Tensor<T>& t);
template <typename T>
Tensor<T> tensor_from_json(const nlohmann::json& j);

}  // namespace vibkit::ad

#endif  // VIBKIT_NN_HPP_
