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

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "rlface/core/error.hpp"

namespace rlface::model {

enum class Backbone { vggface_vgg16, vggface2_resnet50, facenet, stub };
enum class HeadKind { regression, expected_value, classification };

inline const char* to_string(Backbone b) {
  switch (b) {
    case Backbone::vggface_vgg16: return "vggface_vgg16";
    case Backbone::vggface2_resnet50: return "vggface2_resnet50";
    case Backbone::facenet: return "facenet";
    case Backbone::stub: return "stub";
  }
  return "stub";
}

inline Backbone parse_backbone(const std::string& s) {
  if (s == "vggface_vgg16") return Backbone::vggface_vgg16;
  if (s == "vggface2_resnet50") return Backbone::vggface2_resnet50;
  if (s == "facenet") return Backbone::facenet;
  if (s == "stub") return Backbone::stub;
  throw ConfigError("unknown backbone '" + s + "'");
}

inline const char* to_string(HeadKind h) {
  switch (h) {
    case HeadKind::regression: return "regression";
    case HeadKind::expected_value: return "expected_value";
    case HeadKind::classification: return "classification";
  }
  return "regression";
}

inline HeadKind parse_head(const std::string& s) {
  if (s == "regression") return HeadKind::regression;
  if (s == "expected_value") return HeadKind::expected_value;
  if (s == "classification") return HeadKind::classification;
  throw ConfigError("unknown head '" + s + "'");
}

// Labels 0..100 for the distribution heads.
inline constexpr int kNumLabels = 101;

// One fine-tuning stage. `unfreeze_last_conv` counts backbone convolution
// layers, from the end of the adapter's published list, that train in this
// stage (0 = frozen backbone).
struct Stage {
  int epochs = 10;
  double learning_rate = 1e-3;
  int unfreeze_last_conv = 0;
  friend bool operator==(const Stage&, const Stage&) = default;
};

struct ModelConfig {
  Backbone backbone = Backbone::vggface_vgg16;
  std::vector<int> fc_sizes = {1024, 1024};
  double dropout = 0.5;
  HeadKind head = HeadKind::regression;
  double huber_delta = 1.0;
  std::vector<Stage> stages = {{10, 1e-3, 0}, {10, 1e-5, 2}};
  int batch_size = 64;
  std::uint64_t seed = 0;
  int input_size = 224;
  std::string optimizer = "adam";
  // Pretrained backbone weights (RLW1). Empty means the default asset path.
  std::string backbone_weights;
  // Start from He-initialised backbone weights when the asset is missing.
  bool allow_random_init = false;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;

  int output_dim() const { return head == HeadKind::regression ? 1 : kNumLabels; }

  void validate() const {
    if (fc_sizes.empty() || fc_sizes.size() > 3) throw ConfigError("fc_sizes must list 1 to 3 layers");
    static const int allowed[] = {32, 64, 128, 512, 1024, 4096};
    for (int s : fc_sizes)
      if (std::find(std::begin(allowed), std::end(allowed), s) == std::end(allowed))
        throw ConfigError("fc size " + std::to_string(s) + " not in {32, 64, 128, 512, 1024, 4096}");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (!(huber_delta > 0.0)) throw ConfigError("huber_delta must be positive");
    if (stages.empty()) throw ConfigError("at least one training stage is required");
    for (std::size_t i = 0; i < stages.size(); ++i) {
      if (stages[i].epochs < 0) throw ConfigError("stage epochs must be non-negative");
      if (!(stages[i].learning_rate > 0.0)) throw ConfigError("stage learning rate must be positive");
      if (stages[i].unfreeze_last_conv < 0) throw ConfigError("unfreeze_last_conv must be non-negative");
      if (i > 0 && stages[i].learning_rate > stages[i - 1].learning_rate)
        throw ConfigError("stage learning rates must be non-increasing");
    }
    if (batch_size <= 0) throw ConfigError("batch_size must be positive");
    if (input_size < 32) throw ConfigError("input_size must be at least 32");
    if (optimizer != "adam") throw ConfigError("unsupported optimizer '" + optimizer + "'");
  }
};

inline void to_json(nlohmann::json& j, const Stage& s) {
  j = nlohmann::json{{"epochs", s.epochs}, {"learning_rate", s.learning_rate}, {"unfreeze_last_conv", s.unfreeze_last_conv}};
}

inline void from_json(const nlohmann::json& j, Stage& s) {
  s.epochs = j.value("epochs", s.epochs);
  s.learning_rate = j.value("learning_rate", s.learning_rate);
  s.unfreeze_last_conv = j.value("unfreeze_last_conv", s.unfreeze_last_conv);
}

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"backbone", to_string(c.backbone)},
                     {"fc_sizes", c.fc_sizes},
                     {"dropout", c.dropout},
                     {"head", to_string(c.head)},
                     {"huber_delta", c.huber_delta},
                     {"stages", c.stages},
                     {"batch_size", c.batch_size},
                     {"seed", c.seed},
                     {"input_size", c.input_size},
                     {"optimizer", c.optimizer},
                     {"backbone_weights", c.backbone_weights},
                     {"allow_random_init", c.allow_random_init}};
}

// Missing keys keep their defaults.
inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  if (j.contains("backbone")) c.backbone = parse_backbone(j["backbone"].get<std::string>());
  if (j.contains("fc_sizes")) c.fc_sizes = j["fc_sizes"].get<std::vector<int>>();
  c.dropout = j.value("dropout", c.dropout);
  if (j.contains("head")) c.head = parse_head(j["head"].get<std::string>());
  c.huber_delta = j.value("huber_delta", c.huber_delta);
  if (j.contains("stages")) c.stages = j["stages"].get<std::vector<Stage>>();
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.input_size = j.value("input_size", c.input_size);
  c.optimizer = j.value("optimizer", c.optimizer);
  c.backbone_weights = j.value("backbone_weights", c.backbone_weights);
  c.allow_random_init = j.value("allow_random_init", c.allow_random_init);
}

}  // namespace rlface::model
