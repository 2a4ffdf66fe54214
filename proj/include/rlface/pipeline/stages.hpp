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

#pragma once

// Stage runners behind the CLI. Each stage reads the previous stage's
// directory under work_dir and writes its own, plus run.json recording the
// config hash and the sha256 of every input and output manifest.
//
//   ingest/  records.jsonl drops.jsonl images/
//   label/   labeled.jsonl covid_cohort.jsonl drops.jsonl age_at_death_histogram.csv
//   faces/   faces.jsonl drops.jsonl crops/
//   split/   faces.jsonl (faces with split tags; crops stay under faces/)
//   train/   checkpoint/{weights.bin,config.json,history.csv}
//   eval/    report.json and tables
//   cohort/  cohort_report.json cohort.csv cohort_overlay.png
//   compare/ backbones.csv

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rlface/apps/cohort.hpp"
#include "rlface/core/hash.hpp"
#include "rlface/core/jsonl.hpp"
#include "rlface/datamod/streams.hpp"
#include "rlface/evaluate/report.hpp"
#include "rlface/facepipe/mtcnn.hpp"
#include "rlface/facepipe/pipeline.hpp"
#include "rlface/ingest/pipeline.hpp"
#include "rlface/labeling/labeling.hpp"
#include "rlface/model/checkpoint.hpp"
#include "rlface/model/network.hpp"
#include "rlface/model/trainer.hpp"
#include "rlface/pipeline/config.hpp"

namespace rlface::pipeline {

namespace fs = std::filesystem;

inline fs::path stage_dir(const PipelineConfig& c, const std::string& stage) { return fs::path(c.work_dir) / stage; }

inline fs::path checkpoint_dir(const PipelineConfig& c) { return stage_dir(c, "train") / "checkpoint"; }

// Path of an upstream artifact, or MissingArtifact naming the stage to run.
inline fs::path require(const fs::path& p, const std::string& producer) {
  if (!fs::exists(p)) throw MissingArtifact(p.string() + " not found; run " + producer + " first");
  return p;
}

// Resolves repo-relative resources (cause map, assets) against the working
// directory first, then the source tree.
inline fs::path resource(const std::string& p) {
  const fs::path q(p);
  if (q.is_absolute() || fs::exists(q)) return q;
#ifdef RLFACE_SOURCE_DIR
  if (fs::exists(fs::path(RLFACE_SOURCE_DIR) / q)) return fs::path(RLFACE_SOURCE_DIR) / q;
#endif
  return q;
}

namespace detail {

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

inline json hashes(const std::vector<fs::path>& files) {
  json j = json::object();
  for (const auto& f : files) j[f.generic_string()] = sha256_file(f);
  return j;
}

}  // namespace detail

// run.json for one stage. Only started_at / finished_at vary between
// identical runs.
class RunLog {
 public:
  RunLog(const PipelineConfig& c, std::string stage) : cfg_(c), stage_(std::move(stage)), started_(detail::utc_now()) {}

  void input(const fs::path& p) { inputs_.push_back(p); }
  void output(const fs::path& p) { outputs_.push_back(p); }
  json& extra() { return extra_; }

  void write() const {
    json j{{"stage", stage_},
           {"config_sha256", config_hash(cfg_)},
           {"config", cfg_},
           {"inputs", detail::hashes(inputs_)},
           {"outputs", detail::hashes(outputs_)},
           {"started_at", started_},
           {"finished_at", detail::utc_now()}};
    if (!extra_.empty()) j["stats"] = extra_;
    write_file(stage_dir(cfg_, stage_) / "run.json", j.dump(2) + "\n");
  }

 private:
  const PipelineConfig& cfg_;
  std::string stage_;
  std::string started_;
  std::vector<fs::path> inputs_, outputs_;
  json extra_ = json::object();
};

inline std::vector<fs::path> image_files(const fs::path& dir) {
  std::vector<fs::path> out;
  if (fs::exists(dir))
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file()) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

// ---- ingest ----------------------------------------------------------------

inline ingest::IngestResult run_ingest(const PipelineConfig& c, ingest::HttpClient& transport, std::ostream& log) {
  const fs::path dir = stage_dir(c, "ingest");
  RunLog run(c, "ingest");
  ingest::IngestConfig ic;
  ic.sparql_endpoint = c.ingest.sparql_endpoint;
  ic.wiki_base = c.ingest.wiki_base;
  ic.window = {c.ingest.first_death_year, c.ingest.last_death_year};
  ic.page_size = static_cast<std::size_t>(c.ingest.page_size);
  ic.workers = c.ingest.workers;
  ic.requests_per_second = c.ingest.requests_per_second;
  ic.retry.max_attempts = c.ingest.max_attempts;
  ingest::HostRateLimiter limiter(ic.requests_per_second);
  ingest::PoliteClient client(transport, limiter, ic.retry);
  auto res = ingest::ingest(ic, client, dir / "images", "images/");
  write_jsonl(dir / "records.jsonl", res.records);
  write_jsonl(dir / "drops.jsonl", res.drops);
  run.output(dir / "records.jsonl");
  run.output(dir / "drops.jsonl");
  run.extra() = {{"records", res.records.size()},
                 {"drops", res.drops.size()},
                 {"scraped_pages", res.scraped_pages},
                 {"downloaded", res.downloaded}};
  run.write();
  log << "ingest: " << res.records.size() << " records, " << res.drops.size() << " dropped, " << res.downloaded
      << " images stored\n";
  return res;
}

// ---- label -----------------------------------------------------------------

inline labeling::LabelResult run_label(const PipelineConfig& c, std::ostream& log) {
  const fs::path in = require(stage_dir(c, "ingest") / "records.jsonl", "ingest");
  const fs::path dir = stage_dir(c, "label");
  RunLog run(c, "label");
  run.input(in);
  const fs::path map_path = resource(c.label.cause_map);
  const auto map = labeling::CauseMannerMap::load(map_path);
  run.input(map_path);
  const auto records = read_jsonl_as<ingest::PersonRecord>(in);
  auto res = labeling::label_records(records, map);
  write_jsonl(dir / "labeled.jsonl", res.kept);
  write_jsonl(dir / "covid_cohort.jsonl", res.covid);
  write_jsonl(dir / "drops.jsonl", res.drops);
  for (const char* f : {"labeled.jsonl", "covid_cohort.jsonl", "drops.jsonl"}) run.output(dir / f);
  if (!res.kept.empty()) {
    write_file(dir / "age_at_death_histogram.csv", labeling::histogram_csv(labeling::age_at_death_histogram(res.kept)));
    run.output(dir / "age_at_death_histogram.csv");
  }
  run.extra() = {{"kept", res.kept.size()}, {"covid", res.covid.size()}, {"drops", res.drops.size()}};
  run.write();
  log << "label: " << res.kept.size() << " kept, " << res.covid.size() << " covid cohort, " << res.drops.size()
      << " dropped\n";
  return res;
}

// ---- faces -----------------------------------------------------------------

inline facepipe::DetectorFactory mtcnn_factory(const PipelineConfig& c) {
  const fs::path weights = resource(c.assets_dir) / "mtcnn";
  return [weights] { return std::make_unique<facepipe::MtcnnDetector>(weights); };
}

inline facepipe::FacesConfig faces_config(const PipelineConfig& c) {
  facepipe::FacesConfig fc;
  fc.min_confidence = c.faces.min_confidence;
  fc.eye_margin = c.faces.eye_margin;
  fc.min_side = c.faces.min_side;
  fc.workers = c.faces.workers;
  return fc;
}

inline facepipe::FacesResult run_faces(const PipelineConfig& c, const facepipe::DetectorFactory& make_detector,
                                       std::ostream& log) {
  const fs::path in = require(stage_dir(c, "label") / "labeled.jsonl", "label");
  const fs::path dir = stage_dir(c, "faces");
  RunLog run(c, "faces");
  run.input(in);
  const auto records = read_jsonl_as<labeling::LabeledRecord>(in);
  auto res = facepipe::process_faces(records, stage_dir(c, "ingest"), dir, "crops", make_detector, faces_config(c));
  write_jsonl(dir / "faces.jsonl", res.faces);
  write_jsonl(dir / "drops.jsonl", res.drops);
  run.output(dir / "faces.jsonl");
  run.output(dir / "drops.jsonl");
  run.extra() = {{"faces", res.faces.size()}, {"drops", res.drops.size()}};
  run.write();
  log << "faces: " << res.faces.size() << " crops, " << res.drops.size() << " rejected\n";
  return res;
}

// ---- split -----------------------------------------------------------------

inline std::vector<facepipe::LabeledFace> run_split(const PipelineConfig& c, std::ostream& log) {
  const fs::path in = require(stage_dir(c, "faces") / "faces.jsonl", "faces");
  const fs::path dir = stage_dir(c, "split");
  RunLog run(c, "split");
  run.input(in);
  auto faces = read_jsonl_as<facepipe::LabeledFace>(in);
  const std::size_t n_train = datamod::apply_split(faces, c.seed, c.split.train_ratio);
  write_jsonl(dir / "faces.jsonl", faces);
  run.output(dir / "faces.jsonl");
  run.extra() = {{"train", n_train}, {"val", faces.size() - n_train}};
  run.write();
  log << "split: " << n_train << " train, " << faces.size() - n_train << " val\n";
  return faces;
}

inline std::vector<facepipe::LabeledFace> read_split(const PipelineConfig& c) {
  return read_jsonl_as<facepipe::LabeledFace>(require(stage_dir(c, "split") / "faces.jsonl", "split"));
}

// ---- train -----------------------------------------------------------------

inline model::TrainOptions train_options(const PipelineConfig& c, std::ostream& log) {
  model::TrainOptions opt;
  opt.augment = c.augment_enabled;
  opt.augment_cfg = c.augment;
  opt.on_epoch = [&log](const model::EpochRecord& r) {
    log << "stage " << r.stage << " epoch " << r.epoch << ": train_loss " << r.train_loss << " train_mae "
        << r.train_mae << " val_mae " << r.val_mae << "\n";
  };
  return opt;
}

inline model::TrainResult run_train(const PipelineConfig& c, std::ostream& log) {
  const fs::path manifest = require(stage_dir(c, "split") / "faces.jsonl", "split");
  RunLog run(c, "train");
  run.input(manifest);
  const auto faces = read_split(c);
  const auto streams = datamod::make_streams(faces, stage_dir(c, "faces"));
  auto net = model::build_model(c.model, resource(c.assets_dir));
  auto res = model::train(*net, streams.train, streams.val, train_options(c, log));
  const fs::path ck = checkpoint_dir(c);
  model::save_checkpoint(ck, *net, {c.model, sha256_file(manifest), res.best_epoch, res.best_val_mae}, res.history);
  for (const char* f : {"weights.bin", "config.json", "history.csv"}) run.output(ck / f);
  run.extra() = {{"best_epoch", res.best_epoch}, {"best_val_mae", res.best_val_mae}};
  run.write();
  log << "train: best val MAE " << res.best_val_mae << " at epoch " << res.best_epoch << "\n";
  return res;
}

// ---- eval ------------------------------------------------------------------

inline evaluate::EvalConfig eval_config(const PipelineConfig& c) {
  evaluate::EvalConfig ec;
  ec.histogram_width = c.eval.histogram_width;
  ec.top_k = static_cast<std::size_t>(c.eval.top_k);
  ec.bin_widths = {{evaluate::Covariate::rl, c.eval.rl_bin},
                   {evaluate::Covariate::age_at_image, c.eval.age_at_image_bin},
                   {evaluate::Covariate::age_at_death, c.eval.age_at_death_bin},
                   {evaluate::Covariate::face_width, c.eval.face_width_bin}};
  return ec;
}

inline evaluate::EvaluationReport run_eval(const PipelineConfig& c, std::ostream& log) {
  const model::Predictor predictor(checkpoint_dir(c));
  const fs::path manifest = require(stage_dir(c, "split") / "faces.jsonl", "split");
  const fs::path dir = stage_dir(c, "eval");
  RunLog run(c, "eval");
  run.input(manifest);
  run.input(checkpoint_dir(c) / "weights.bin");
  const auto faces = read_split(c);
  const auto items = evaluate::predict_faces(faces, stage_dir(c, "faces"),
                                             [&](const cv::Mat& crop) { return predictor.predict_crop(crop).rl_years; });
  const auto report = evaluate::build_report(items, eval_config(c));
  evaluate::write_report(dir, report, items);
  run.output(dir / "report.json");
  run.output(dir / "predictions.csv");
  run.extra() = {{"n", report.n}, {"overall_mae", report.overall_mae}};
  run.write();
  log << "eval: MAE " << report.overall_mae << " over " << report.n << " validation faces\n";
  return report;
}

// ---- cohort ----------------------------------------------------------------

inline void write_cohort_outputs(const fs::path& dir, const apps::CohortReport& r) {
  fs::create_directories(dir);
  write_file(dir / "cohort_report.json", json(r).dump(2) + "\n");
  write_file(dir / "cohort.csv", apps::cohort_csv(r));
  std::map<int, int> actual, predicted;
  for (const auto& e : r.entries) {
    ++actual[static_cast<int>(std::floor(e.actual / 5.0)) * 5];
    ++predicted[static_cast<int>(std::floor(e.predicted / 5.0)) * 5];
  }
  plot::Chart ch{"Cohort RL: actual vs predicted", "RL (years, 5-year bins)", "count", {}, std::nullopt};
  plot::Series a{"actual", {}, {}, {60, 60, 220}, false}, p{"predicted", {}, {}, {40, 160, 40}, false};
  for (const auto& [k, n] : actual) a.x.push_back(k + 2.5), a.y.push_back(n);
  for (const auto& [k, n] : predicted) p.x.push_back(k + 2.5), p.y.push_back(n);
  ch.series = {a, p};
  plot::save(ch, dir / "cohort_overlay.png");
}

inline apps::CohortReport run_cohort(const PipelineConfig& c, const facepipe::DetectorFactory& make_detector,
                                     std::ostream& log) {
  const model::Predictor predictor(checkpoint_dir(c));
  const fs::path cohort_in = require(stage_dir(c, "label") / "covid_cohort.jsonl", "label");
  const fs::path manifest = require(stage_dir(c, "split") / "faces.jsonl", "split");
  const fs::path dir = stage_dir(c, "cohort");
  RunLog run(c, "cohort");
  run.input(cohort_in);
  run.input(manifest);
  run.input(checkpoint_dir(c) / "weights.bin");
  std::set<std::string> model_ids;
  for (const auto& f : read_split(c)) model_ids.insert(f.person_id);
  auto det = make_detector();
  const auto fc = faces_config(c);
  const fs::path images = stage_dir(c, "ingest");
  auto report = apps::cohort_loss(
      read_jsonl_as<labeling::LabeledRecord>(cohort_in), model_ids,
      [&](const labeling::LabeledRecord& r) { return predictor.predict_image(images / r.image_path, *det, fc).rl_years; },
      {c.cohort.min_image_year});
  write_cohort_outputs(dir, report);
  run.output(dir / "cohort_report.json");
  run.output(dir / "cohort.csv");
  run.extra() = {{"n", report.n}, {"mean_loss", report.mean_loss}, {"drops", report.drops.size()}};
  run.write();
  log << "cohort: n " << report.n << ", mean actual " << report.mean_actual << ", mean predicted "
      << report.mean_predicted << ", mean loss " << report.mean_loss << " years\n";
  return report;
}

// ---- compare ---------------------------------------------------------------

struct CompareRow {
  std::string backbone;
  std::size_t parameters = 0;
  double best_val_mae = 0;
  int best_epoch = 0;
  double seconds = 0;
};

// Trains each configured backbone frozen with the compare head for
// compare.epochs epochs on the split, reporting best validation MAE.
inline std::vector<CompareRow> run_compare(const PipelineConfig& c, std::ostream& log) {
  const fs::path manifest = require(stage_dir(c, "split") / "faces.jsonl", "split");
  const fs::path dir = stage_dir(c, "compare");
  RunLog run(c, "compare");
  run.input(manifest);
  const auto streams = datamod::make_streams(read_split(c), stage_dir(c, "faces"));
  std::vector<CompareRow> rows;
  for (const auto& name : c.compare.backbones) {
    model::ModelConfig mc = c.model;
    mc.backbone = model::parse_backbone(name);
    mc.fc_sizes = c.compare.fc_sizes;
    mc.stages = {{c.compare.epochs, c.model.stages.front().learning_rate, 0}};
    mc.validate();
    const auto t0 = std::chrono::steady_clock::now();
    auto net = model::build_model(mc, resource(c.assets_dir));
    auto opt = train_options(c, log);
    auto res = model::train(*net, streams.train, streams.val, opt);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rows.push_back({name, net->parameter_count(), res.best_val_mae, res.best_epoch, secs});
    log << "compare: " << name << " best val MAE " << res.best_val_mae << "\n";
  }
  std::ostringstream csv;
  csv.precision(10);
  csv << "backbone,parameters,best_val_mae,best_epoch\n";
  for (const auto& r : rows) csv << r.backbone << ',' << r.parameters << ',' << r.best_val_mae << ',' << r.best_epoch << '\n';
  write_file(dir / "backbones.csv", csv.str());
  run.output(dir / "backbones.csv");
  json timing = json::object();
  for (const auto& r : rows) timing[r.backbone] = r.seconds;
  run.extra() = {{"seconds", timing}};
  run.write();
  return rows;
}

}  // namespace rlface::pipeline
