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

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "rlface/core/hash.hpp"
#include "rlface/core/rng.hpp"
#include "rlface/model/backbones.hpp"
#include "rlface/model/heads.hpp"
#include "rlface/nn/weights.hpp"

namespace rlface::model {

// Backbone followed by flatten, dropout, [Linear + ReLU + dropout] x N and
// the output layer. Parameter paths are "backbone.<...>" and "head.<...>".
class RlNet {
 public:
  explicit RlNet(const ModelConfig& cfg) : cfg_(cfg), spec_(build_backbone(cfg.backbone)), head_("head") {
    cfg_.validate();
    const int in = cfg.input_size;
    nn::Tensor probe({1, 3, in, in});
    embedding_dim_ = static_cast<int>(spec_.net->forward(probe, false).stride0());
    head_.add<nn::Flatten>("flatten");
    head_.add<nn::Dropout>("dropout0", cfg.dropout, derive_seed(cfg.seed, 0x64726f70ULL, 0));
    int width = embedding_dim_;
    for (std::size_t i = 0; i < cfg.fc_sizes.size(); ++i) {
      const std::string k = std::to_string(i + 1);
      head_.add<nn::Linear>("fc" + k, width, cfg.fc_sizes[i]);
      head_.add<nn::ReLU>("relu" + k);
      head_.add<nn::Dropout>("dropout" + k, cfg.dropout, derive_seed(cfg.seed, 0x64726f70ULL, i + 1));
      width = cfg.fc_sizes[i];
    }
    head_.add<nn::Linear>("out", width, cfg.output_dim());
    Rng rng(derive_seed(cfg.seed, 0x68656164ULL));
    nn::init_he(head_, rng);
    set_trainable(0);
  }

  const ModelConfig& config() const { return cfg_; }
  const BackboneSpec& spec() const { return spec_; }
  nn::Sequential& backbone() { return *spec_.net; }
  nn::Sequential& head() { return head_; }
  int embedding_dim() const { return embedding_dim_; }

  std::vector<nn::ParamRef> parameters() {
    std::vector<nn::ParamRef> out;
    spec_.net->collect(out, "backbone");
    head_.collect(out);
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (const auto& p : parameters())
      if (!p.param->buffer) n += p.param->value.size();
    return n;
  }

  // The last `k` published backbone convolutions (weights and biases).
  std::vector<std::string> unfrozen_convs(int k) const {
    if (k > static_cast<int>(spec_.conv_layers.size()))
      throw ConfigError("cannot unfreeze " + std::to_string(k) + " convolutions; backbone has " +
                        std::to_string(spec_.conv_layers.size()));
    return {spec_.conv_layers.end() - k, spec_.conv_layers.end()};
  }

  // Head parameters always train; in the backbone only the last `k`
  // convolutions do. Buffers never train.
  void set_trainable(int k) {
    const auto convs = unfrozen_convs(k);
    const std::set<std::string> open(convs.begin(), convs.end());
    spec_.net->visit(
        [&](nn::Module& m, const std::string& path) {
          const bool on = open.count(path) > 0;
          for (auto& p : m.own_parameters()) p.trainable = on && !p.buffer;
        },
        "");
    head_.visit(
        [](nn::Module& m, const std::string&) {
          for (auto& p : m.own_parameters()) p.trainable = !p.buffer;
        },
        "");
    first_trainable_ = spec_.net->size();
    for (int i = static_cast<int>(spec_.conv_layers.size()) - k; i < static_cast<int>(spec_.conv_layers.size()); ++i)
      first_trainable_ = std::min(first_trainable_, spec_.conv_stage[static_cast<std::size_t>(i)]);
  }

  // Index of the first backbone stage holding a trainable parameter
  // (backbone().size() when the backbone is frozen).
  std::size_t first_trainable_stage() const { return first_trainable_; }

  // Backbone stages [from, size) followed by the head.
  nn::Tensor forward_from(const nn::Tensor& x, std::size_t from, bool training) {
    nn::Tensor h = spec_.net->forward_range(x, from, spec_.net->size(), training);
    return head_.forward(h, training);
  }

  nn::Tensor forward(const nn::Tensor& x, bool training) { return forward_from(x, 0, training); }

  // Turns on caching for the trainable part only.
  void set_recording(bool on) {
    if (on) spec_.net->set_recording_from(first_trainable_);
    else spec_.net->set_recording(false);
    head_.set_recording(on);
  }

  void backward(const nn::Tensor& grad) {
    nn::Tensor g = head_.backward(grad);
    if (first_trainable_ < spec_.net->size()) spec_.net->backward(g);
  }

 private:
  ModelConfig cfg_;
  BackboneSpec spec_;
  nn::Sequential head_;
  int embedding_dim_ = 0;
  std::size_t first_trainable_ = 0;
};

// Expected content hashes of the backbone assets, from
// <assets>/backbones/manifest.json ({"<file>": {"sha256": "..."}}).
inline std::string expected_asset_hash(const std::filesystem::path& assets_dir, const std::string& asset) {
  const auto path = assets_dir / "backbones" / "manifest.json";
  if (!std::filesystem::exists(path)) return {};
  const auto j = nlohmann::json::parse(read_file(path));
  if (!j.contains(asset) || !j[asset].contains("sha256") || !j[asset]["sha256"].is_string()) return {};
  return j[asset]["sha256"].get<std::string>();
}

inline std::filesystem::path backbone_asset_path(const ModelConfig& cfg, const std::filesystem::path& assets_dir) {
  if (!cfg.backbone_weights.empty()) return cfg.backbone_weights;
  return assets_dir / "backbones" / build_backbone(cfg.backbone).asset;
}

// Builds the network with pretrained backbone weights. The backbone starts
// frozen.
inline std::unique_ptr<RlNet> build_model(const ModelConfig& cfg, const std::filesystem::path& assets_dir) {
  auto net = std::make_unique<RlNet>(cfg);
  const auto path = backbone_asset_path(cfg, assets_dir);
  const std::string asset = net->spec().asset;
  if (std::filesystem::exists(path)) {
    const std::string want = expected_asset_hash(assets_dir, asset);
    if (!want.empty()) {
      const std::string got = sha256_file(path);
      if (got != want) throw ConfigError("backbone asset '" + asset + "' hash " + got + " does not match expected " + want);
    }
    nn::load_weights(net->backbone(), nn::read_weights(path), true);
  } else if (cfg.allow_random_init) {
    Rng rng(derive_seed(cfg.seed, 0x6261636bULL));
    nn::init_he(net->backbone(), rng);
  } else {
    throw MissingArtifact("backbone weights asset '" + asset + "' not found at " + path.string() +
                          "; convert it with tools/convert_weights.py or set allow_random_init");
  }
  return net;
}

}  // namespace rlface::model
