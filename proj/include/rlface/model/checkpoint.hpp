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
#include <filesystem>
#include <memory>
#include <string>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>

#include "rlface/core/hash.hpp"
#include "rlface/datamod/preprocess.hpp"
#include "rlface/datamod/streams.hpp"
#include "rlface/facepipe/pipeline.hpp"
#include "rlface/model/trainer.hpp"

namespace rlface::model {

// Checkpoint directory: weights.bin (RLW1, every parameter and buffer),
// config.json (model config, dataset manifest hash, epoch, val MAE) and
// history.csv.
struct CheckpointInfo {
  ModelConfig config;
  std::string manifest_sha256;
  int epoch = 0;
  double val_mae = 0;
};

inline void save_checkpoint(const std::filesystem::path& dir, RlNet& net, const CheckpointInfo& info,
                            const std::vector<EpochRecord>& history) {
  std::filesystem::create_directories(dir);
  nn::write_weights(dir / "weights.bin", net.parameters());
  nlohmann::json j{{"model", info.config},
                   {"manifest_sha256", info.manifest_sha256},
                   {"epoch", info.epoch},
                   {"val_mae", info.val_mae}};
  write_file(dir / "config.json", j.dump(2) + "\n");
  write_file(dir / "history.csv", history_csv(history));
}

inline CheckpointInfo read_checkpoint_info(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "config.json") || !std::filesystem::exists(dir / "weights.bin"))
    throw MissingArtifact("checkpoint not found; run train");
  const auto j = nlohmann::json::parse(read_file(dir / "config.json"));
  CheckpointInfo info;
  info.config = j.at("model").get<ModelConfig>();
  info.manifest_sha256 = j.value("manifest_sha256", "");
  info.epoch = j.value("epoch", 0);
  info.val_mae = j.value("val_mae", 0.0);
  return info;
}

inline std::unique_ptr<RlNet> load_checkpoint(const std::filesystem::path& dir, CheckpointInfo* info_out = nullptr) {
  const auto info = read_checkpoint_info(dir);
  auto net = std::make_unique<RlNet>(info.config);
  auto tensors = nn::read_weights(dir / "weights.bin");
  for (auto& p : net->parameters()) {
    auto it = tensors.find(p.path);
    if (it == tensors.end()) throw Error("checkpoint weights missing '" + p.path + "'");
    if (it->second.size() != p.param->value.size()) throw Error("checkpoint shape mismatch for '" + p.path + "'");
    p.param->value = it->second.reshaped(p.param->value.shape());
  }
  if (info_out) *info_out = info;
  return net;
}

struct Prediction {
  double rl_years = 0;  // clamped at 0
  double raw = 0;
};

// Read-only prediction handle. Forward passes never record, so concurrent
// calls share the network safely.
class Predictor {
 public:
  explicit Predictor(const std::filesystem::path& checkpoint_dir) : net_(load_checkpoint(checkpoint_dir, &info_)) {
    size_input();
  }
  explicit Predictor(std::unique_ptr<RlNet> net) : net_(std::move(net)) {
    info_.config = net_->config();
    size_input();
  }

  const CheckpointInfo& info() const { return info_; }

  // Prediction for an aligned face crop.
  Prediction predict_crop(const cv::Mat& crop) const {
    const nn::Tensor x = datamod::to_batch({datamod::preprocess_eval(crop, aug_)});
    const nn::Tensor out = net_->forward(x, false);
    Prediction p;
    p.raw = decode_output(net_->config().head, std::span<const float>(out.data(), out.size()));
    p.rl_years = clamp_prediction(p.raw);
    return p;
  }

  // Full path from a photograph: detection, gate, frontal check, alignment,
  // width filter. Rejections propagate with their reason.
  Prediction predict_image(const std::filesystem::path& path, facepipe::FaceDetector& det,
                           const facepipe::FacesConfig& faces = {}) const {
    const cv::Mat img = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (img.empty()) throw MissingArtifact("image not found or unreadable: " + path.string());
    const auto aligned = facepipe::process_image(img, path, det, faces);
    return predict_crop(aligned.crop.image);
  }

 private:
  // The eval view is resized to the network's input side.
  void size_input() {
    aug_.crop = net_->config().input_size;
    aug_.resize = std::max(aug_.resize, aug_.crop);
  }

  CheckpointInfo info_;
  std::unique_ptr<RlNet> net_;
  datamod::AugmentConfig aug_;
};

}  // namespace rlface::model
