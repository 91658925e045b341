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

// Local HTTP front end: synthesis previews and rating predictions for one
// loaded checkpoint.

#ifndef VIBKIT_SERVICE_HPP_
#define VIBKIT_SERVICE_HPP_

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "vibkit/vibnet.hpp"

namespace httplib {
class Server;
}

namespace vibkit {

struct ServiceConfig {
  std::string bind_address = "127.0.0.1";
  int port = 8080;
  std::string checkpoint;               // empty: no model, /predict answers 503
  std::size_t max_body_bytes = 1 << 20;
  std::vector<std::string> cors_origins;  // "*" allows any origin

  // Throws ConfigError on an invalid port or body limit.
  void check() const;
};

nlohmann::json to_json(const ServiceConfig& c);

struct HttpReply {
  int status = 200;
  nlohmann::json body;
};

// Little-endian float32 <-> base64, as carried in request and response
// bodies.
std::string encode_f32_base64(const std::vector<double>& values);
std::vector<double> decode_f32_base64(const std::string& text);

// Block-averages one channel plane down to at most max_bins x max_frames.
std::vector<double> preview_plane(const std::vector<double>& plane, int bins, int frames,
                                  int max_bins, int max_frames, int& out_bins,
                                  int& out_frames);

// Route handlers, independent of the transport. The model is shared and
// never modified, so handlers may run concurrently.
class Service {
 public:
  Service(ServiceConfig config, std::shared_ptr<const LoadedModel> model);

  // Loads config.checkpoint when set. Throws when it cannot be loaded.
  static Service from_config(const ServiceConfig& config);

  const ServiceConfig& config() const { return config_; }
  bool has_model() const { return model_ != nullptr; }

  HttpReply health() const;
  HttpReply model_info() const;
  HttpReply synthesize(const std::string& body, bool full_resolution) const;
  HttpReply predict(const std::string& body) const;

  // Registers the routes, CORS handling and the body limit.
  void mount(httplib::Server& server) const;

 private:
  ServiceConfig config_;
  std::shared_ptr<const LoadedModel> model_;
};

// Blocks serving on config.bind_address:config.port.
void serve(const Service& service);

}  // namespace vibkit

#endif  // VIBKIT_SERVICE_HPP_
