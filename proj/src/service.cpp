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

#include "vibkit/service.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstring>

#include "httplib.h"
#include "vibkit/error.hpp"
#include "vibkit/mechano.hpp"
#include "vibkit/pipeline.hpp"
#include "vibkit/version.hpp"

namespace vibkit {

using nlohmann::json;

namespace {

constexpr int kPreviewMax = 64;
constexpr const char* kEncoding = "f32le-base64";

HttpReply error_reply(int status, const std::string& kind, const std::string& message) {
  return {status, {{"error", {{"kind", kind}, {"message", message}}}}};
}

// Runs a handler and maps library errors to status codes.
template <typename F>
HttpReply guarded(F&& f) {
  try {
    return f();
  } catch (const SchemaError& e) {
    return error_reply(400, e.kind(), e.what());
  } catch (const json::exception& e) {
    return error_reply(400, "schema", e.what());
  } catch (const ValidationError& e) {
    return error_reply(422, e.kind(), e.what());
  } catch (const TooLong& e) {
    return error_reply(422, e.kind(), e.what());
  } catch (const RateError& e) {
    return error_reply(422, e.kind(), e.what());
  } catch (const UnsupportedRatio& e) {
    return error_reply(422, e.kind(), e.what());
  } catch (const Error& e) {
    return error_reply(500, e.kind(), e.what());
  } catch (const std::exception& e) {
    return error_reply(500, "internal", e.what());
  }
}

json parse_body(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("request body is not JSON: ") + e.what());
  }
  if (!j.is_object()) throw SchemaError("request body must be a JSON object");
  return j;
}

std::vector<Channel> request_channels(const json& j, const std::string& fallback) {
  if (!j.contains("channels")) return parse_channels(fallback);
  const auto& c = j["channels"];
  if (c.is_string()) return parse_channels(c.get<std::string>());
  if (!c.is_array()) throw SchemaError("channels must be a string or an array of names");
  std::string list;
  for (const auto& name : c) {
    if (!name.is_string()) throw SchemaError("channel names must be strings");
    list += (list.empty() ? "" : ",") + name.get<std::string>();
  }
  return parse_channels(list);
}

json channel_names(const std::vector<Channel>& channels) {
  json a = json::array();
  for (Channel c : channels) a.push_back(to_string(c));
  return a;
}

json waveform_json(const Waveform& w) {
  return {{"sample_rate", w.sample_rate},
          {"units", to_string(w.units)},
          {"length", w.size()},
          {"encoding", kEncoding},
          {"data", encode_f32_base64(w.samples)}};
}

Waveform waveform_from_json(const json& j) {
  if (!j.is_object() || !j.contains("sample_rate") || !j.contains("data")) {
    throw SchemaError("waveform needs sample_rate and data");
  }
  if (j.contains("encoding") && j["encoding"] != kEncoding) {
    throw SchemaError(std::string("waveform encoding must be ") + kEncoding);
  }
  Waveform w;
  w.sample_rate = j.at("sample_rate").get<int>();
  w.units = units_from_string(j.value("units", std::string("G")));
  w.samples = decode_f32_base64(j.at("data").get<std::string>());
  if (w.sample_rate <= 0) throw ValidationError("sample_rate must be positive");
  if (w.samples.empty()) throw ValidationError("waveform has no samples");
  check_waveform(w);
  return w;
}

struct SpecRejected {
  json report;
};

TactonSpec checked_spec(const json& j, json& report) {
  const TactonSpec spec = spec_from_json(j);
  const auto r = validate(spec);
  report = to_json(r);
  if (!r.ok) throw SpecRejected{report};
  return spec;
}

// Spec validation failures carry their report in the 422 body.
template <typename F>
HttpReply with_report(F&& f) {
  try {
    return guarded(std::forward<F>(f));
  } catch (const SpecRejected& r) {
    HttpReply reply = error_reply(422, "validation", "tacton spec failed validation");
    reply.body["validation"] = r.report;
    return reply;
  }
}

}  // namespace

void ServiceConfig::check() const {
  if (port < 0 || port > 65535) throw ConfigError("port must be in [0, 65535]");
  if (max_body_bytes < 1) throw ConfigError("max_body_bytes must be >= 1");
  if (bind_address.empty()) throw ConfigError("bind_address must not be empty");
}

json to_json(const ServiceConfig& c) {
  return {{"bind_address", c.bind_address},
          {"port", c.port},
          {"checkpoint", c.checkpoint},
          {"max_body_bytes", c.max_body_bytes},
          {"cors_origins", c.cors_origins}};
}

std::string encode_f32_base64(const std::vector<double>& values) {
  std::string raw(values.size() * 4, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float f = static_cast<float>(values[i]);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    for (int k = 0; k < 4; ++k) raw[4 * i + k] = static_cast<char>((bits >> (8 * k)) & 0xff);
  }
  std::string out(4 * ((raw.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(raw.data()),
                                static_cast<int>(raw.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<double> decode_f32_base64(const std::string& text) {
  if (text.size() % 4 != 0) throw SchemaError("base64 length must be a multiple of 4");
  std::string raw(text.size() / 4 * 3, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(raw.data()),
                                reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw SchemaError("invalid base64 payload");
  std::size_t len = static_cast<std::size_t>(n);
  if (!text.empty() && text.back() == '=') --len;
  if (text.size() > 1 && text[text.size() - 2] == '=') --len;
  if (len % 4 != 0) throw SchemaError("payload is not a whole number of float32 values");
  std::vector<double> out(len / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int k = 0; k < 4; ++k) {
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[4 * i + k])) << (8 * k);
    }
    float f;
    std::memcpy(&f, &bits, 4);
    out[i] = f;
  }
  return out;
}

std::vector<double> preview_plane(const std::vector<double>& plane, int bins, int frames,
                                  int max_bins, int max_frames, int& out_bins,
                                  int& out_frames) {
  out_bins = std::min(bins, max_bins);
  out_frames = std::min(frames, max_frames);
  std::vector<double> out(static_cast<std::size_t>(out_bins) * out_frames);
  for (int i = 0; i < out_bins; ++i) {
    const int b0 = i * bins / out_bins, b1 = (i + 1) * bins / out_bins;
    for (int j = 0; j < out_frames; ++j) {
      const int f0 = j * frames / out_frames, f1 = (j + 1) * frames / out_frames;
      double acc = 0.0;
      for (int b = b0; b < b1; ++b) {
        for (int f = f0; f < f1; ++f) acc += plane[static_cast<std::size_t>(b) * frames + f];
      }
      out[static_cast<std::size_t>(i) * out_frames + j] = acc / ((b1 - b0) * (f1 - f0));
    }
  }
  return out;
}

Service::Service(ServiceConfig config, std::shared_ptr<const LoadedModel> model)
    : config_(std::move(config)), model_(std::move(model)) {
  config_.check();
}

Service Service::from_config(const ServiceConfig& config) {
  config.check();
  std::shared_ptr<const LoadedModel> model;
  if (!config.checkpoint.empty()) model = load_checkpoint(config.checkpoint);
  return Service(config, std::move(model));
}

HttpReply Service::health() const { return {200, {{"status", "ok"}}}; }

HttpReply Service::model_info() const {
  if (!model_) return error_reply(503, "model_unavailable", "no model loaded");
  const auto& cfg = model_->config();
  return {200,
          {{"config", to_json(cfg)},
           {"channels", channel_names(parse_channels(cfg.channels))},
           {"parameters", model_->parameter_count()},
           {"normalization", to_json(model_->normalization())},
           {"checkpoint_version", kCheckpointVersion},
           {"version", kVersion}}};
}

HttpReply Service::synthesize(const std::string& body, bool full_resolution) const {
  return with_report([&]() -> HttpReply {
    const json req = parse_body(body);
    if (!req.contains("spec")) throw SchemaError("body needs a 'spec' object");
    json report;
    const TactonSpec spec = checked_spec(req["spec"], report);
    const int rate = req.value("sample_rate", kPipelineRate);
    if (rate != kPipelineRate && rate != 10000) {
      throw RateError("sample_rate must be 1000 or 10000");
    }
    const std::string fallback = model_ ? model_->config().channels : "RA1,RA2";
    const auto channels = request_channels(req, fallback);
    const Waveform model_view = render_for_model(spec);
    const Waveform out =
        rate == kPipelineRate ? model_view : to_acceleration(vibkit::synthesize(spec, rate));
    const auto stack = mechano_spectrograms(model_view, channels);

    const int max_b = full_resolution ? stack.bins : kPreviewMax;
    const int max_f = full_resolution ? stack.frames : kPreviewMax;
    std::vector<double> data;
    int ob = 0, of = 0;
    for (std::size_t c = 0; c < stack.channels.size(); ++c) {
      const std::vector<double> plane(stack.data.begin() + c * stack.plane(),
                                      stack.data.begin() + (c + 1) * stack.plane());
      const auto p = preview_plane(plane, stack.bins, stack.frames, max_b, max_f, ob, of);
      data.insert(data.end(), p.begin(), p.end());
    }
    return {200,
            {{"validation", report},
             {"waveform", waveform_json(out)},
             {"spectrogram",
              {{"channels", channel_names(stack.channels)},
               {"shape", {stack.channels.size(), ob, of}},
               {"source_shape", {stack.channels.size(), stack.bins, stack.frames}},
               {"full_resolution", full_resolution},
               {"scale", "magnitude"},
               {"encoding", kEncoding},
               {"data", encode_f32_base64(data)}}}}};
  });
}

HttpReply Service::predict(const std::string& body) const {
  if (!model_) return error_reply(503, "model_unavailable", "no model loaded");
  return with_report([&]() -> HttpReply {
    const json req = parse_body(body);
    const bool has_spec = req.contains("spec"), has_wave = req.contains("waveform");
    if (has_spec == has_wave) throw SchemaError("body needs exactly one of 'spec' or 'waveform'");
    json reply;
    Waveform w;
    if (has_spec) {
      json report;
      w = render_for_model(checked_spec(req["spec"], report));
      reply["validation"] = report;
    } else {
      w = waveform_from_json(req["waveform"]);
      if (w.sample_rate != kPipelineRate) w = downsample(w, kPipelineRate);
    }
    const RatingTriple raw = model_->predict(w);
    reply["ratings"] = to_json(raw.clamped());
    reply["raw"] = to_json(raw);
    reply["normalization"] = to_json(model_->normalization());
    reply["channels"] = channel_names(parse_channels(model_->config().channels));
    return {200, reply};
  });
}

void Service::mount(httplib::Server& server) const {
  server.set_payload_max_length(config_.max_body_bytes);
  auto send = [](httplib::Response& res, const HttpReply& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  const auto origins = config_.cors_origins;
  server.set_post_routing_handler([origins](const httplib::Request& req, httplib::Response& res) {
    if (origins.empty() || !req.has_header("Origin")) return;
    const std::string origin = req.get_header_value("Origin");
    const bool any = std::find(origins.begin(), origins.end(), "*") != origins.end();
    if (any || std::find(origins.begin(), origins.end(), origin) != origins.end()) {
      res.set_header("Access-Control-Allow-Origin", any ? "*" : origin);
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
    }
  });
  server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
  });
  server.Get("/health", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, health());
  });
  server.Get("/model/info", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, model_info());
  });
  server.Post("/synthesize", [this, send](const httplib::Request& req, httplib::Response& res) {
    const std::string full = req.get_param_value("full");
    send(res, synthesize(req.body, full == "1" || full == "true"));
  });
  server.Post("/predict", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, predict(req.body));
  });
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    std::string kind = "http";
    if (res.status == 413) kind = "payload_too_large";
    if (res.status == 404) kind = "not_found";
    res.set_content(error_reply(res.status, kind, httplib::status_message(res.status)).body.dump(),
                    "application/json");
  });
}

void serve(const Service& service) {
  httplib::Server server;
  service.mount(server);
  if (!server.listen(service.config().bind_address, service.config().port)) {
    throw IoError("cannot listen on " + service.config().bind_address + ":" +
                  std::to_string(service.config().port));
  }
}

}  // namespace vibkit
