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

// Python bindings. JSON-shaped values cross the boundary as strings; the
// package wrapper converts them to and from dicts.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "vibkit/augment.hpp"
#include "vibkit/dataset.hpp"
#include "vibkit/error.hpp"
#include "vibkit/mechano.hpp"
#include "vibkit/pipeline.hpp"
#include "vibkit/tacton.hpp"
#include "vibkit/version.hpp"
#include "vibkit/vibnet.hpp"

namespace py = pybind11;
using namespace vibkit;
using nlohmann::json;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_numpy(const std::vector<double>& v) {
  Array a(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

Waveform from_numpy(const Array& a, int rate, const std::string& units) {
  if (a.ndim() != 1) throw ShapeError("waveform must be one-dimensional");
  Waveform w;
  w.samples.assign(a.data(), a.data() + a.size());
  w.sample_rate = rate;
  w.units = units_from_string(units);
  return w;
}

TactonSpec parse_spec(const std::string& text) { return spec_from_json(json::parse(text)); }

std::string ratings_json(const RatingTriple& r) { return to_json(r).dump(); }

}  // namespace

PYBIND11_MODULE(_vibkit, m) {
  m.doc() = "vibkit native core";
  m.attr("__version__") = kVersion;

  static py::exception<Error> base(m, "VibkitError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(base.ptr(), (e.kind() + ": " + e.what()).c_str());
    }
  });

  m.def("synthesize", [](const std::string& spec, int rate) {
    return to_numpy(synthesize(parse_spec(spec), rate).samples);
  }, py::arg("spec_json"), py::arg("sample_rate") = 1000);

  m.def("validate", [](const std::string& spec) {
    return to_json(validate(parse_spec(spec))).dump();
  }, py::arg("spec_json"));

  m.def("render_for_model", [](const std::string& spec) {
    return to_numpy(render_for_model(parse_spec(spec)).samples);
  }, py::arg("spec_json"));

  m.def("downsample", [](const Array& x, int rate, int target) {
    return to_numpy(downsample(from_numpy(x, rate, "normalized"), target).samples);
  }, py::arg("samples"), py::arg("sample_rate"), py::arg("target_rate"));

  m.def("zero_pad", [](const Array& x, std::size_t n) {
    return to_numpy(zero_pad(from_numpy(x, 1000, "normalized"), n).samples);
  }, py::arg("samples"), py::arg("target_len"));

  m.def("spectrograms", [](const Array& x, const std::string& channels, int rate) {
    const auto s = mechano_spectrograms(from_numpy(x, rate, "G"), parse_channels(channels));
    py::array_t<double> out({static_cast<py::ssize_t>(s.channels.size()),
                             static_cast<py::ssize_t>(s.bins),
                             static_cast<py::ssize_t>(s.frames)});
    std::copy(s.data.begin(), s.data.end(), out.mutable_data());
    return out;
  }, py::arg("samples"), py::arg("channels") = "ra1,ra2", py::arg("sample_rate") = 1000);

  m.def("inject_noise", [](const Array& x, double a, std::uint64_t seed) {
    Rng rng(seed);
    return to_numpy(inject_noise(from_numpy(x, 1000, "G"), a, rng).samples);
  }, py::arg("samples"), py::arg("a"), py::arg("seed") = 0);

  m.def("change_speed", [](const Array& x, double b) {
    return to_numpy(change_speed(from_numpy(x, 1000, "G"), b).samples);
  }, py::arg("samples"), py::arg("b"));

  m.def("change_amplitude", [](const Array& x, double c) {
    return to_numpy(change_amplitude(from_numpy(x, 1000, "G"), c).samples);
  }, py::arg("samples"), py::arg("c"));

  m.def("augmented_count", &augmented_count, py::arg("n"), py::arg("repetitions"));

  m.def("kfold_split", &kfold_split, py::arg("n"), py::arg("k"), py::arg("seed"));

  m.def("generate_corpus", [](std::size_t n, std::uint64_t seed) {
    py::list out;
    for (const auto& item : generate_corpus(n, seed)) {
      py::dict d;
      d["id"] = item.id;
      d["spec"] = to_json(item.spec).dump();
      d["waveform"] = to_numpy(item.waveform.samples);
      d["ratings"] = ratings_json(item.ratings);
      out.append(d);
    }
    return out;
  }, py::arg("n"), py::arg("seed"));

  m.def("rmse", [](const std::vector<std::array<double, 3>>& p,
                   const std::vector<std::array<double, 3>>& t) {
    std::vector<RatingTriple> a, b;
    for (const auto& x : p) a.push_back(RatingTriple::from_array(x));
    for (const auto& x : t) b.push_back(RatingTriple::from_array(x));
    return rmse(a, b);
  }, py::arg("predictions"), py::arg("truths"));

  py::class_<LoadedModel, std::shared_ptr<LoadedModel>>(m, "Model")
      .def_static("load", [](const std::string& path) {
        return std::shared_ptr<LoadedModel>(load_checkpoint(path));
      }, py::arg("path"))
      .def("predict", [](const LoadedModel& model, const Array& x, int rate) {
        Waveform w = from_numpy(x, rate, "G");
        if (w.sample_rate != kPipelineRate) w = downsample(w, kPipelineRate);
        return ratings_json(model.predict(w));
      }, py::arg("samples"), py::arg("sample_rate") = 1000)
      .def("predict_spec", [](const LoadedModel& model, const std::string& spec) {
        return ratings_json(model.predict(render_for_model(parse_spec(spec))));
      }, py::arg("spec_json"))
      .def_property_readonly("config", [](const LoadedModel& model) {
        return to_json(model.config()).dump();
      })
      .def_property_readonly("parameter_count", &LoadedModel::parameter_count);
}
