/*
 * Copyright 2026 The rlface Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// rlface: command-line entry point for every pipeline stage.
//
//   rlface [--config FILE] [--set key.path=value ...] <subcommand> [options]
//
// Exit codes: 0 ok, 1 runtime failure, 2 bad config or usage,
// 3 report invariant violated, 4 missing upstream artifact.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rlface/apps/cohort.hpp"
#include "rlface/pipeline/stages.hpp"

namespace {

using namespace rlface;

int run_predict(const pipeline::PipelineConfig& c, const std::string& image) {
  const model::Predictor predictor(pipeline::checkpoint_dir(c));
  auto det = pipeline::mtcnn_factory(c)();
  try {
    const auto p = predictor.predict_image(image, *det, pipeline::faces_config(c));
    std::cout << "rl_years " << p.rl_years << "\nraw " << p.raw << "\n";
    return 0;
  } catch (const Rejection& e) {
    std::cerr << "rlface: " << image << " rejected: " << e.reason() << "\n";
    return 1;
  }
}

int run_gain(const pipeline::PipelineConfig& c, const std::string& pairs_file, const std::string& out) {
  const model::Predictor predictor(pipeline::checkpoint_dir(c));
  auto det = pipeline::mtcnn_factory(c)();
  const auto fc = pipeline::faces_config(c);
  std::vector<apps::GainResult> results;
  for (const auto& pair : apps::read_pairs(pairs_file)) {
    results.push_back(apps::intervention_gain(
        pair, [&](const std::string& img) { return predictor.predict_image(img, *det, fc).rl_years; }));
    const auto& g = results.back();
    std::cout << g.name << ": before " << g.before << ", after " << g.after << ", elapsed " << g.elapsed << ", gain "
              << g.gain << "\n";
  }
  write_file(out, apps::gains_csv(results));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Remaining-life estimation from face images"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_file;
  std::vector<std::string> overrides;
  std::string work_dir;
  app.add_option("-c,--config", config_file, "JSON config file");
  app.add_option("--set", overrides, "Override a config value, e.g. --set model.dropout=0.3");
  app.add_option("-w,--work-dir", work_dir, "Artifact root (overrides work_dir)");

  auto* ingest = app.add_subcommand("ingest", "Query the knowledge graph, scrape captions, download images");
  auto* label = app.add_subcommand("label", "Filter by manner of death and derive RL labels");
  auto* faces = app.add_subcommand("faces", "Detect, align and crop faces");
  auto* split = app.add_subcommand("split", "Assign person-level train/val split");
  auto* train = app.add_subcommand("train", "Fine-tune the model");
  auto* eval = app.add_subcommand("eval", "Validation metrics and error analysis");
  auto* predict = app.add_subcommand("predict", "Predict RL for one photograph");
  std::string image;
  predict->add_option("--image", image, "Photograph path")->required();
  auto* cohort = app.add_subcommand("cohort", "Loss of life on the COVID-19 cohort");
  auto* gain = app.add_subcommand("gain", "RL gain for before/after image pairs");
  std::string pairs, gain_out = "gains.csv";
  gain->add_option("--pairs", pairs, "CSV: name,before_image,before_year,after_image,after_year")->required();
  gain->add_option("--out", gain_out, "Output CSV");
  auto* compare = app.add_subcommand("compare", "Backbone comparison harness");
  auto* show = app.add_subcommand("config", "Print the effective config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (!work_dir.empty()) overrides.push_back("work_dir=" + nlohmann::json(work_dir).dump());
    const auto cfg = pipeline::load_config(config_file, overrides);
    auto& log = std::cerr;
    if (*show) {
      std::cout << nlohmann::json(cfg).dump(2) << "\n";
    } else if (*ingest) {
      ingest::HttplibClient http(cfg.ingest.user_agent);
      pipeline::run_ingest(cfg, http, log);
    } else if (*label) {
      pipeline::run_label(cfg, log);
    } else if (*faces) {
      pipeline::run_faces(cfg, pipeline::mtcnn_factory(cfg), log);
    } else if (*split) {
      pipeline::run_split(cfg, log);
    } else if (*train) {
      pipeline::run_train(cfg, log);
    } else if (*eval) {
      pipeline::run_eval(cfg, log);
    } else if (*predict) {
      return run_predict(cfg, image);
    } else if (*cohort) {
      pipeline::run_cohort(cfg, pipeline::mtcnn_factory(cfg), log);
    } else if (*gain) {
      return run_gain(cfg, pairs, gain_out);
    } else if (*compare) {
      pipeline::run_compare(cfg, log);
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "rlface: config error: " << e.what() << "\n";
    return 2;
  } catch (const InvariantViolation& e) {
    std::cerr << "rlface: invariant violated: " << e.what() << "\n";
    return 3;
  } catch (const MissingArtifact& e) {
    std::cerr << "rlface: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "rlface: " << e.what() << "\n";
    return 1;
  }
}
