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

// vibkit: command-line front end for synthesis, augmentation, processing,
// training, prediction, evaluation and serving.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "vibkit/error.hpp"
#include "vibkit/pipeline.hpp"
#include "vibkit/service.hpp"
#include "vibkit/version.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;
using namespace vibkit;

std::string read_input(const std::string& path) {
  if (path == "-") {
    std::ostringstream os;
    os << std::cin.rdbuf();
    return os.str();
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json read_json(const std::string& path) {
  try {
    return json::parse(read_input(path));
  } catch (const json::parse_error& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
}

void print(const json& j) { std::cout << j.dump(2) << '\n'; }

int fail(const std::string& kind, const std::string& message, int code) {
  std::cerr << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vibrotactile Tacton synthesis and perception modelling"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  // synth
  std::string synth_spec, synth_out, synth_csv;
  int synth_rate = 1000;
  bool synth_g = false;
  auto* synth = app.add_subcommand("synth", "Synthesize a TactonSpec into a waveform");
  synth->add_option("--spec", synth_spec, "TactonSpec JSON file ('-' for stdin)")->required();
  synth->add_option("--rate", synth_rate, "Sample rate in Hz")->check(CLI::PositiveNumber);
  synth->add_option("--out", synth_out, "Output .f32 path (sidecar written alongside)")
      ->required();
  synth->add_option("--csv", synth_csv, "Also write one sample per line");
  synth->add_flag("--g", synth_g, "Convert to G with the default device gain");

  // augment
  std::string aug_in, aug_out;
  int aug_reps = 2;
  std::uint64_t aug_seed = 0;
  double aug_cap_ms = 0.0;
  auto* augment = app.add_subcommand("augment", "Augment every record of a manifest");
  augment->add_option("--in", aug_in, "Input manifest (.jsonl)")->required();
  augment->add_option("--out", aug_out, "Output directory")->required();
  augment->add_option("--reps", aug_reps, "Repetitions per method")->check(CLI::PositiveNumber);
  augment->add_option("--seed", aug_seed, "Random seed");
  augment->add_option("--duration-cap-ms", aug_cap_ms,
                      "Limit the speed change to this many ms of duration change");

  // process
  std::string proc_in, proc_out, proc_channels = "ra1,ra2";
  auto* process = app.add_subcommand("process", "Compute mechanoreceptive spectrograms");
  process->add_option("--in", proc_in, "Directory of .f32 waveforms or a manifest")->required();
  process->add_option("--out", proc_out, "Output directory")->required();
  process->add_option("--channels", proc_channels, "Comma-separated channels");

  // train
  std::string train_data, train_config, train_out, train_report, train_agg = "per-device";
  int train_folds = 0, train_epochs = 0, train_batch = 0;
  double train_lr = 0.0;
  std::uint64_t train_seed = 0;
  auto* trainc = app.add_subcommand("train", "Train VibNet on a manifest");
  trainc->add_option("--data", train_data, "Training manifest (.jsonl)")->required();
  trainc->add_option("--config", train_config, "Model config JSON (default: desk preset)");
  trainc->add_option("--out", train_out, "Checkpoint path")->required();
  trainc->add_option("--folds", train_folds, "Cross-validation folds (0: none)");
  trainc->add_option("--seed", train_seed, "Random seed");
  trainc->add_option("--epochs", train_epochs, "Epochs (default 100)");
  trainc->add_option("--batch-size", train_batch, "Batch size (default 32)");
  trainc->add_option("--lr", train_lr, "Adam learning rate (default 0.001)");
  trainc->add_option("--label-aggregation", train_agg, "per-device or global-mean");
  trainc->add_option("--report", train_report, "Write the training report here");

  // predict
  std::string pred_model, pred_in, pred_spec, pred_manifest, pred_out;
  auto* predictc = app.add_subcommand("predict", "Predict ratings with a checkpoint");
  predictc->add_option("--model", pred_model, "Checkpoint path")->required();
  auto* pred_inputs = predictc->add_option_group("input");
  pred_inputs->add_option("--in", pred_in, "Waveform .f32 file");
  pred_inputs->add_option("--spec", pred_spec, "TactonSpec JSON file");
  pred_inputs->add_option("--manifest", pred_manifest, "Manifest (.jsonl)");
  pred_inputs->require_option(1);
  predictc->add_option("--out", pred_out, "Write predictions here instead of stdout");

  // eval
  std::string eval_pred, eval_truth, eval_csv;
  auto* evalc = app.add_subcommand("eval", "Per-dimension RMSE and within-SD report");
  evalc->add_option("--pred", eval_pred, "Predictions JSON")->required();
  evalc->add_option("--truth", eval_truth, "Ground truth JSON or manifest")->required();
  evalc->add_option("--csv", eval_csv, "Also write the CSV export");

  // gen-corpus
  std::string gen_out;
  std::size_t gen_n = 200;
  std::uint64_t gen_seed = 0;
  auto* gen = app.add_subcommand("gen-corpus", "Generate a synthetic-oracle corpus");
  gen->add_option("--n", gen_n, "Number of records")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "Random seed");
  gen->add_option("--out", gen_out, "Output directory")->required();

  // serve
  ServiceConfig svc;
  auto* servec = app.add_subcommand("serve", "Run the HTTP service");
  servec->add_option("--model", svc.checkpoint, "Checkpoint to load at startup");
  servec->add_option("--bind", svc.bind_address, "Bind address");
  servec->add_option("--port", svc.port, "Port")->check(CLI::Range(0, 65535));
  servec->add_option("--max-body", svc.max_body_bytes, "Maximum request body in bytes");
  servec->add_option("--cors", svc.cors_origins, "Allowed CORS origins ('*' for any)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    if (*synth) {
      const TactonSpec spec = spec_from_json(read_json(synth_spec));
      const auto report = validate(spec);
      if (!report.ok) {
        std::cerr << json{{"error", {{"kind", "validation"}, {"message", "invalid spec"}}},
                          {"validation", to_json(report)}}
                         .dump()
                  << '\n';
        return 1;
      }
      Waveform w = synthesize(spec, synth_rate);
      if (synth_g) w = to_acceleration(w);
      write_waveform(synth_out, w);
      if (!synth_csv.empty()) write_waveform_csv(synth_csv, w);
      print({{"out", synth_out},
             {"sidecar", sidecar_path(synth_out).string()},
             {"sample_rate", w.sample_rate},
             {"length", w.size()},
             {"units", to_string(w.units)},
             {"validation", to_json(report)}});
    } else if (*augment) {
      AugmentConfig cfg;
      cfg.repetitions = aug_reps;
      cfg.rng_seed = aug_seed;
      if (aug_cap_ms > 0.0) cfg.duration_change_cap = aug_cap_ms / 1000.0;
      cfg.check();
      const auto out = augment_manifest(aug_in, aug_out, cfg);
      print({{"manifest", out.string()},
             {"provenance", (fs::path(aug_out) / "provenance.jsonl").string()},
             {"records", read_manifest(out).size()}});
    } else if (*process) {
      const auto channels = parse_channels(proc_channels);
      if (fs::is_directory(proc_in)) {
        const auto n = process_directory(proc_in, proc_out, channels);
        print({{"out", proc_out}, {"files", n}, {"channels", channels_to_string(channels)}});
      } else {
        const auto out = process_manifest(proc_in, proc_out, channels);
        print({{"manifest", out.string()},
               {"records", read_manifest(out).size()},
               {"channels", channels_to_string(channels)}});
      }
    } else if (*trainc) {
      TrainRequest req;
      if (!train_config.empty()) req.config = config_from_json(read_json(train_config));
      req.config.seed = train_seed;
      req.options.seed = train_seed;
      if (train_epochs > 0) req.options.epochs = train_epochs;
      if (train_batch > 0) req.options.batch_size = train_batch;
      if (train_lr > 0.0) req.options.adam.lr = train_lr;
      req.folds = train_folds;
      req.aggregation = label_aggregation_from_string(train_agg);
      req.options.on_epoch = [](const EpochLog& e) {
        std::cerr << json{{"epoch", e.epoch}, {"train_loss", e.train_loss}}.dump() << '\n';
      };
      const auto outcome = train_from_manifest(train_data, req, train_out);
      json report = to_json(outcome);
      report["checkpoint"] = train_out;
      if (!train_report.empty()) write_output(train_report, report.dump(2) + "\n");
      print(report);
    } else if (*predictc) {
      const auto model = load_checkpoint(pred_model);
      json out;
      if (!pred_manifest.empty()) {
        out = predict_manifest(*model, pred_manifest);
      } else {
        Waveform w;
        if (!pred_spec.empty()) {
          w = render_for_model(spec_from_json(read_json(pred_spec)));
        } else {
          w = read_waveform(pred_in);
          if (w.sample_rate != kPipelineRate) w = downsample(w, kPipelineRate);
        }
        const RatingTriple raw = model->predict(w);
        out = {{"ratings", to_json(raw.clamped())}, {"raw", to_json(raw)}};
      }
      write_output(pred_out, out.dump(2) + "\n");
    } else if (*evalc) {
      const Metrics m = evaluate_files(eval_pred, eval_truth);
      if (!eval_csv.empty()) write_output(eval_csv, metrics_csv(m));
      print(to_json(m));
    } else if (*gen) {
      const auto manifest = gen_corpus(gen_out, gen_n, gen_seed);
      print({{"manifest", manifest.string()}, {"records", gen_n}});
    } else if (*servec) {
      const Service service = Service::from_config(svc);
      std::cerr << json{{"listening", svc.bind_address + ":" + std::to_string(svc.port)},
                        {"model_loaded", service.has_model()}}
                       .dump()
                << '\n';
      serve(service);
    }
  } catch (const Error& e) {
    return fail(e.kind(), e.what(), 1);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return 0;
}
