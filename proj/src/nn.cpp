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

#include "vibkit/nn.hpp"

#include <cmath>

#include "vibkit/error.hpp"

namespace vibkit::ad {

template <typename T>
Tensor<T> ParamSet<T>::add(const std::string& name, Tensor<T> t) {
  if (find(name) != nullptr) throw ConfigError("duplicate parameter name: " + name);
  t.set_requires_grad(true);
  const std::size_t n = t.numel();
  params_.push_back({name, t, std::vector<T>(n, T(0)), std::vector<T>(n, T(0))});
  return t;
}

template <typename T>
Tensor<T> ParamSet<T>::uniform(const std::string& name, Shape shape, double bound, Rng& rng) {
  std::vector<T> v(numel(shape));
  for (T& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
  return add(name, Tensor<T>::from(std::move(shape), std::move(v)));
}

template <typename T>
Tensor<T> ParamSet<T>::constant(const std::string& name, Shape shape, T value) {
  return add(name, Tensor<T>::full(std::move(shape), value));
}

template <typename T>
Parameter<T>* ParamSet<T>::find(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

template <typename T>
std::size_t ParamSet<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

template <typename T>
void ParamSet<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template <typename T>
void adam_step(std::vector<Parameter<T>>& params, const AdamConfig& cfg, long t) {
  if (t < 1) throw ConfigError("adam step index must be >= 1");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (auto& p : params) {
    auto w = p.tensor.mutable_values();
    auto g = p.tensor.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g.empty() ? 0.0 : static_cast<double>(g[i]);
      const double m = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * gi;
      const double v = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * gi * gi;
      p.m[i] = static_cast<T>(m);
      p.v[i] = static_cast<T>(v);
      w[i] -= static_cast<T>(cfg.lr * (m / c1) / (std::sqrt(v / c2) + cfg.eps));
    }
  }
}

template <typename T>
nlohmann::json tensor_to_json(const Tensor<T>& t) {
  nlohmann::json data = nlohmann::json::array();
  for (T v : t.values()) data.push_back(static_cast<double>(v));
  return {{"shape", t.shape()}, {"data", data}};
}

template <typename T>
Tensor<T> tensor_from_json(const nlohmann::json& j) {
  try {
    Shape shape = j.at("shape").get<Shape>();
    std::vector<T> data;
    for (const auto& v : j.at("data")) data.push_back(static_cast<T>(v.get<double>()));
    return Tensor<T>::from(std::move(shape), std::move(data));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("tensor fixture: ") + e.what());
  }
}

template class ParamSet<float>;
template class ParamSet<double>;
template void adam_step(std::vector<Parameter<float>>&, const AdamConfig&, long);
template void adam_step(std::vector<Parameter<double>>&, const AdamConfig&, long);
template nlohmann::json tensor_to_json(const Tensor<float>&);
template nlohmann::json tensor_to_json(const Tensor<double>&);
template Tensor<float> tensor_from_json(const nlohmann::json&);
template Tensor<double> tensor_from_json(const nlohmann::json&);

}  // namespace vibkit::ad
