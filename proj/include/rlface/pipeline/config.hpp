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

// Pipeline configuration: one JSON document. Precedence, lowest first:
// built-in defaults, config file, RLFACE_SPARQL_ENDPOINT / RLFACE_WIKI_BASE,
// then `--set key.path=value` overrides from the command line.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "rlface/core/error.hpp"
#include "rlface/core/hash.hpp"
#include "rlface/datamod/preprocess.hpp"
#include "rlface/model/config.hpp"

namespace rlface::pipeline {

using nlohmann::json;

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::string work_dir = "work";
  std::string assets_dir = "assets";

  struct Ingest {
    std::string sparql_endpoint = "https://query.wikidata.org/sparql";
    std::string wiki_base;
    int first_death_year = 1990;
    int last_death_year = 2022;
    int page_size = 5000;
    int workers = 4;
    double requests_per_second = 2.0;
    int max_attempts = 5;
    std::string user_agent = "rlface/1.0 (research dataset builder)";
  } ingest;

  struct Label {
    std::string cause_map = "data/cause_manner.tsv";
  } label;

  struct Faces {
    double min_confidence = 0.98;
    double eye_margin = 0.05;
    int min_side = 64;
    int workers = 1;
  } faces;

  struct Split {
    double train_ratio = 0.7;
  } split;

  datamod::AugmentConfig augment;
  bool augment_enabled = true;
  model::ModelConfig model;

  struct Eval {
    double histogram_width = 1.0;
    double rl_bin = 5, age_at_image_bin = 5, age_at_death_bin = 5, face_width_bin = 50;
    int top_k = 10;
  } eval;

  struct Cohort {
    int min_image_year = 2000;
  } cohort;

  struct Compare {
    std::vector<std::string> backbones = {"vggface_vgg16", "vggface2_resnet50", "facenet"};
    int epochs = 10;
    std::vector<int> fc_sizes = {64, 32};
  } compare;

  void validate() const {
    model.validate();
    if (ingest.first_death_year > ingest.last_death_year) throw ConfigError("ingest death-year window is empty");
    if (ingest.page_size <= 0) throw ConfigError("ingest.page_size must be positive");
    if (ingest.workers <= 0 || faces.workers <= 0) throw ConfigError("workers must be positive");
    if (!(ingest.requests_per_second > 0)) throw ConfigError("ingest.requests_per_second must be positive");
    if (ingest.max_attempts <= 0) throw ConfigError("ingest.max_attempts must be positive");
    if (!(faces.min_confidence >= 0 && faces.min_confidence <= 1)) throw ConfigError("faces.min_confidence must lie in [0, 1]");
    if (!(faces.eye_margin >= 0 && faces.eye_margin < 0.5)) throw ConfigError("faces.eye_margin must lie in [0, 0.5)");
    if (faces.min_side <= 0) throw ConfigError("faces.min_side must be positive");
    if (!(split.train_ratio > 0 && split.train_ratio < 1)) throw ConfigError("split.train_ratio must lie in (0, 1)");
    if (augment.crop != model.input_size) throw ConfigError("augment.crop must equal model.input_size");
    if (augment.resize < augment.crop) throw ConfigError("augment.resize must be at least augment.crop");
    if (!(augment.brightness_lo > 0 && augment.brightness_lo <= augment.brightness_hi))
      throw ConfigError("augment brightness range must satisfy 0 < lo <= hi");
    if (!(augment.flip_p >= 0 && augment.flip_p <= 1)) throw ConfigError("augment.flip_p must lie in [0, 1]");
    for (double w : {eval.histogram_width, eval.rl_bin, eval.age_at_image_bin, eval.age_at_death_bin, eval.face_width_bin})
      if (!(w > 0)) throw ConfigError("eval bin widths must be positive");
    if (eval.top_k <= 0) throw ConfigError("eval.top_k must be positive");
    if (compare.epochs < 0) throw ConfigError("compare.epochs must be non-negative");
    for (const auto& b : compare.backbones) model::parse_backbone(b);
  }
};

inline void to_json(json& j, const PipelineConfig& c) {
  j = json{{"seed", c.seed},
           {"work_dir", c.work_dir},
           {"assets_dir", c.assets_dir},
           {"ingest",
            {{"sparql_endpoint", c.ingest.sparql_endpoint},
             {"wiki_base", c.ingest.wiki_base},
             {"first_death_year", c.ingest.first_death_year},
             {"last_death_year", c.ingest.last_death_year},
             {"page_size", c.ingest.page_size},
             {"workers", c.ingest.workers},
             {"requests_per_second", c.ingest.requests_per_second},
             {"max_attempts", c.ingest.max_attempts},
             {"user_agent", c.ingest.user_agent}}},
           {"label", {{"cause_map", c.label.cause_map}}},
           {"faces",
            {{"min_confidence", c.faces.min_confidence},
             {"eye_margin", c.faces.eye_margin},
             {"min_side", c.faces.min_side},
             {"workers", c.faces.workers}}},
           {"split", {{"train_ratio", c.split.train_ratio}}},
           {"augment",
            {{"enabled", c.augment_enabled},
             {"resize", c.augment.resize},
             {"crop", c.augment.crop},
             {"brightness_lo", c.augment.brightness_lo},
             {"brightness_hi", c.augment.brightness_hi},
             {"flip_p", c.augment.flip_p}}},
           {"model", c.model},
           {"eval",
            {{"histogram_width", c.eval.histogram_width},
             {"rl_bin", c.eval.rl_bin},
             {"age_at_image_bin", c.eval.age_at_image_bin},
             {"age_at_death_bin", c.eval.age_at_death_bin},
             {"face_width_bin", c.eval.face_width_bin},
             {"top_k", c.eval.top_k}}},
           {"cohort", {{"min_image_year", c.cohort.min_image_year}}},
           {"compare",
            {{"backbones", c.compare.backbones}, {"epochs", c.compare.epochs}, {"fc_sizes", c.compare.fc_sizes}}}};
}

namespace detail {

// Copies `src` into `dst` key by key, rejecting keys the defaults lack so
// typos fail loudly.
inline void merge_known(json& dst, const json& src, const std::string& where) {
  if (!src.is_object()) throw ConfigError("config " + (where.empty() ? std::string("root") : where) + " must be an object");
  for (const auto& [k, v] : src.items()) {
    const std::string path = where.empty() ? k : where + "." + k;
    if (!dst.contains(k)) throw ConfigError("unknown config key '" + path + "'");
    if (dst[k].is_object()) merge_known(dst[k], v, path);
    else dst[k] = v;
  }
}

}  // namespace detail

inline PipelineConfig config_from_json(const json& j) {
  json full = PipelineConfig{};
  detail::merge_known(full, j, "");
  PipelineConfig c;
  try {
    c.seed = full.at("seed").get<std::uint64_t>();
    c.work_dir = full.at("work_dir").get<std::string>();
    c.assets_dir = full.at("assets_dir").get<std::string>();
    const auto& in = full.at("ingest");
    c.ingest.sparql_endpoint = in.at("sparql_endpoint").get<std::string>();
    c.ingest.wiki_base = in.at("wiki_base").get<std::string>();
    c.ingest.first_death_year = in.at("first_death_year").get<int>();
    c.ingest.last_death_year = in.at("last_death_year").get<int>();
    c.ingest.page_size = in.at("page_size").get<int>();
    c.ingest.workers = in.at("workers").get<int>();
    c.ingest.requests_per_second = in.at("requests_per_second").get<double>();
    c.ingest.max_attempts = in.at("max_attempts").get<int>();
    c.ingest.user_agent = in.at("user_agent").get<std::string>();
    c.label.cause_map = full.at("label").at("cause_map").get<std::string>();
    const auto& f = full.at("faces");
    c.faces.min_confidence = f.at("min_confidence").get<double>();
    c.faces.eye_margin = f.at("eye_margin").get<double>();
    c.faces.min_side = f.at("min_side").get<int>();
    c.faces.workers = f.at("workers").get<int>();
    c.split.train_ratio = full.at("split").at("train_ratio").get<double>();
    const auto& a = full.at("augment");
    c.augment_enabled = a.at("enabled").get<bool>();
    c.augment.resize = a.at("resize").get<int>();
    c.augment.crop = a.at("crop").get<int>();
    c.augment.brightness_lo = a.at("brightness_lo").get<double>();
    c.augment.brightness_hi = a.at("brightness_hi").get<double>();
    c.augment.flip_p = a.at("flip_p").get<double>();
    c.model = full.at("model").get<model::ModelConfig>();
    const auto& e = full.at("eval");
    c.eval.histogram_width = e.at("histogram_width").get<double>();
    c.eval.rl_bin = e.at("rl_bin").get<double>();
    c.eval.age_at_image_bin = e.at("age_at_image_bin").get<double>();
    c.eval.age_at_death_bin = e.at("age_at_death_bin").get<double>();
    c.eval.face_width_bin = e.at("face_width_bin").get<double>();
    c.eval.top_k = e.at("top_k").get<int>();
    c.cohort.min_image_year = full.at("cohort").at("min_image_year").get<int>();
    const auto& cm = full.at("compare");
    c.compare.backbones = cm.at("backbones").get<std::vector<std::string>>();
    c.compare.epochs = cm.at("epochs").get<int>();
    c.compare.fc_sizes = cm.at("fc_sizes").get<std::vector<int>>();
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("bad config value: ") + ex.what());
  }
  return c;
}

// Parses "a.b.c=value" into a nested object. The value is read as JSON when
// it parses, otherwise as a string.
inline json parse_override(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + text + "' is not key=value");
  const std::string key = text.substr(0, eq), raw = text.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json root = json::object();
  json* cur = &root;
  std::size_t pos = 0;
  for (;;) {
    const auto dot = key.find('.', pos);
    const std::string part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (dot == std::string::npos) {
      (*cur)[part] = value;
      break;
    }
    cur = &(*cur)[part];
    pos = dot + 1;
  }
  return root;
}

inline void deep_merge(json& dst, const json& src) {
  for (const auto& [k, v] : src.items()) {
    if (v.is_object() && dst.contains(k) && dst[k].is_object()) deep_merge(dst[k], v);
    else dst[k] = v;
  }
}

// Loads and validates. `file` may be empty (defaults only).
inline PipelineConfig load_config(const std::filesystem::path& file, const std::vector<std::string>& overrides = {}) {
  json j = json::object();
  if (!file.empty()) {
    if (!std::filesystem::exists(file)) throw ConfigError("config file not found: " + file.string());
    j = json::parse(read_file(file), nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + file.string());
  }
  if (const char* e = std::getenv("RLFACE_SPARQL_ENDPOINT"); e && *e) j["ingest"]["sparql_endpoint"] = e;
  if (const char* e = std::getenv("RLFACE_WIKI_BASE"); e && *e) j["ingest"]["wiki_base"] = e;
  for (const auto& o : overrides) deep_merge(j, parse_override(o));
  PipelineConfig c = config_from_json(j);
  c.validate();
  return c;
}

inline std::string config_hash(const PipelineConfig& c) { return sha256_hex(json(c).dump()); }

}  // namespace rlface::pipeline
