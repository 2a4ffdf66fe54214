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

#include <memory>
#include <string>
#include <vector>

#include "rlface/model/config.hpp"
#include "rlface/nn/layers.hpp"

namespace rlface::model {

// A backbone truncated at its embedding. `net` is a flat sequence of stages;
// freezing works at stage granularity for caching and at convolution
// granularity for training.
struct BackboneSpec {
  std::unique_ptr<nn::Sequential> net;
  // Convolution module paths (relative to `net`) in forward order.
  std::vector<std::string> conv_layers;
  // Index of the top-level stage containing each entry of conv_layers.
  std::vector<std::size_t> conv_stage;
  std::string asset;  // default weights file name
};

namespace detail {

// Conv + BN (+ ReLU) unit named like facenet-pytorch's BasicConv2d.
inline nn::Sequential& basic_conv(nn::Sequential& parent, const std::string& name, int in, int out, int kh, int kw,
                                  int stride, int ph, int pw) {
  auto& s = parent.add<nn::Sequential>(name);
  s.add<nn::Conv2d>("conv", in, out, kh, kw, stride, ph, pw, false);
  s.add<nn::BatchNorm>("bn", out, 1e-3f);
  s.add<nn::ReLU>("relu");
  return s;
}

inline nn::Sequential& basic_conv(nn::Sequential& parent, const std::string& name, int in, int out, int k,
                                  int stride = 1, int pad = 0) {
  return basic_conv(parent, name, in, out, k, k, stride, pad, pad);
}

inline void index_convs(BackboneSpec& spec) {
  for (std::size_t i = 0; i < spec.net->size(); ++i) {
    spec.net->at(i).visit(
        [&](nn::Module& m, const std::string& path) {
          if (std::string(m.type()) == "Conv2d") {
            spec.conv_layers.push_back(path);
            spec.conv_stage.push_back(i);
          }
        },
        "");
  }
}

}  // namespace detail

// VGG-16 as used by VGGFace: 13 3x3 convolutions in five blocks, each block
// closed by 2x2 max pooling. Embedding = flattened pool5 (512 x 7 x 7 at 224).
inline BackboneSpec build_vgg16() {
  BackboneSpec spec;
  spec.net = std::make_unique<nn::Sequential>("");
  // Caffe convention: 0..255 input minus the training-set mean (RGB).
  spec.net->add<nn::ChannelAffine>("input_norm", 255.0f, std::vector<float>{-129.1863f, -104.7624f, -93.5940f});
  const int blocks[5][2] = {{2, 64}, {2, 128}, {3, 256}, {3, 512}, {3, 512}};
  int in = 3;
  for (int b = 0; b < 5; ++b) {
    for (int l = 1; l <= blocks[b][0]; ++l) {
      const std::string id = std::to_string(b + 1) + "_" + std::to_string(l);
      spec.net->add<nn::Conv2d>("conv" + id, in, blocks[b][1], 3, 1, 1);
      spec.net->add<nn::ReLU>("relu" + id);
      in = blocks[b][1];
    }
    spec.net->add<nn::MaxPool2d>("pool" + std::to_string(b + 1), 2, 2);
  }
  spec.asset = "vggface_vgg16.rlw";
  detail::index_convs(spec);
  return spec;
}

// ResNet-50 as trained on VGGFace2 (stride on the first 1x1 convolution of
// each downsampling bottleneck). Parameter names follow torchvision.
// Embedding = global average pool (2048).
inline BackboneSpec build_resnet50() {
  BackboneSpec spec;
  spec.net = std::make_unique<nn::Sequential>("");
  auto& net = *spec.net;
  net.add<nn::ChannelAffine>("input_norm", 255.0f, std::vector<float>{-131.0912f, -103.8827f, -91.4953f});
  net.add<nn::Conv2d>("conv1", 3, 64, 7, 2, 3, false);
  net.add<nn::BatchNorm>("bn1", 64);
  net.add<nn::ReLU>("relu");
  net.add<nn::MaxPool2d>("maxpool", 3, 2, 0, true);
  const int layers[4] = {3, 4, 6, 3};
  int in = 64;
  for (int l = 0; l < 4; ++l) {
    const int planes = 64 << l;
    for (int b = 0; b < layers[l]; ++b) {
      const int stride = (b == 0 && l > 0) ? 2 : 1;
      auto& block = net.add<nn::Residual>("layer" + std::to_string(l + 1) + "." + std::to_string(b));
      auto& body = block.body();
      body.add<nn::Conv2d>("conv1", in, planes, 1, stride, 0, false);
      body.add<nn::BatchNorm>("bn1", planes);
      body.add<nn::ReLU>("relu1");
      body.add<nn::Conv2d>("conv2", planes, planes, 3, 1, 1, false);
      body.add<nn::BatchNorm>("bn2", planes);
      body.add<nn::ReLU>("relu2");
      body.add<nn::Conv2d>("conv3", planes, planes * 4, 1, 1, 0, false);
      body.add<nn::BatchNorm>("bn3", planes * 4);
      if (b == 0) {
        auto& sc = block.shortcut();
        sc.add<nn::Conv2d>("0", in, planes * 4, 1, stride, 0, false);
        sc.add<nn::BatchNorm>("1", planes * 4);
      }
      in = planes * 4;
    }
  }
  net.add<nn::GlobalAvgPool>("avgpool");
  spec.asset = "vggface2_resnet50.rlw";
  detail::index_convs(spec);
  return spec;
}

namespace detail {

inline void block35(nn::Sequential& net, const std::string& name, float scale) {
  auto& r = net.add<nn::Residual>(name, scale, true);
  auto& cat = r.body().add<nn::Concat>("");
  basic_conv(cat.branch(""), "branch0", 256, 32, 1);
  auto& b1 = cat.branch("branch1");
  basic_conv(b1, "0", 256, 32, 1);
  basic_conv(b1, "1", 32, 32, 3, 1, 1);
  auto& b2 = cat.branch("branch2");
  basic_conv(b2, "0", 256, 32, 1);
  basic_conv(b2, "1", 32, 32, 3, 1, 1);
  basic_conv(b2, "2", 32, 32, 3, 1, 1);
  r.body().add<nn::Conv2d>("conv2d", 96, 256, 1);
}

inline void block17(nn::Sequential& net, const std::string& name, float scale) {
  auto& r = net.add<nn::Residual>(name, scale, true);
  auto& cat = r.body().add<nn::Concat>("");
  basic_conv(cat.branch(""), "branch0", 896, 128, 1);
  auto& b1 = cat.branch("branch1");
  basic_conv(b1, "0", 896, 128, 1);
  basic_conv(b1, "1", 128, 128, 1, 7, 1, 0, 3);
  basic_conv(b1, "2", 128, 128, 7, 1, 1, 3, 0);
  r.body().add<nn::Conv2d>("conv2d", 256, 896, 1);
}

inline void block8(nn::Sequential& net, const std::string& name, float scale, bool relu) {
  auto& r = net.add<nn::Residual>(name, scale, relu);
  auto& cat = r.body().add<nn::Concat>("");
  basic_conv(cat.branch(""), "branch0", 1792, 192, 1);
  auto& b1 = cat.branch("branch1");
  basic_conv(b1, "0", 1792, 192, 1);
  basic_conv(b1, "1", 192, 192, 1, 3, 1, 0, 1);
  basic_conv(b1, "2", 192, 192, 3, 1, 1, 1, 0);
  r.body().add<nn::Conv2d>("conv2d", 384, 1792, 1);
}

}  // namespace detail

// Inception-ResNet-v1 (FaceNet) with facenet-pytorch parameter names.
// Embedding = batch-normalised 512-d bottleneck after global pooling.
inline BackboneSpec build_facenet() {
  using detail::basic_conv;
  BackboneSpec spec;
  spec.net = std::make_unique<nn::Sequential>("");
  auto& net = *spec.net;
  // (255 x - 127.5) / 128
  net.add<nn::ChannelAffine>("input_norm", 255.0f / 128.0f, std::vector<float>(3, -127.5f / 128.0f));
  basic_conv(net, "conv2d_1a", 3, 32, 3, 2);
  basic_conv(net, "conv2d_2a", 32, 32, 3);
  basic_conv(net, "conv2d_2b", 32, 64, 3, 1, 1);
  net.add<nn::MaxPool2d>("maxpool_3a", 3, 2);
  basic_conv(net, "conv2d_3b", 64, 80, 1);
  basic_conv(net, "conv2d_4a", 80, 192, 3);
  basic_conv(net, "conv2d_4b", 192, 256, 3, 2);
  for (int i = 0; i < 5; ++i) detail::block35(net, "repeat_1." + std::to_string(i), 0.17f);
  {
    auto& m = net.add<nn::Concat>("mixed_6a");
    basic_conv(m.branch(""), "branch0", 256, 384, 3, 2);
    auto& b1 = m.branch("branch1");
    basic_conv(b1, "0", 256, 192, 1);
    basic_conv(b1, "1", 192, 192, 3, 1, 1);
    basic_conv(b1, "2", 192, 256, 3, 2);
    m.branch("branch2").add<nn::MaxPool2d>("pool", 3, 2);
  }
  for (int i = 0; i < 10; ++i) detail::block17(net, "repeat_2." + std::to_string(i), 0.10f);
  {
    auto& m = net.add<nn::Concat>("mixed_7a");
    auto& b0 = m.branch("branch0");
    basic_conv(b0, "0", 896, 256, 1);
    basic_conv(b0, "1", 256, 384, 3, 2);
    auto& b1 = m.branch("branch1");
    basic_conv(b1, "0", 896, 256, 1);
    basic_conv(b1, "1", 256, 256, 3, 2);
    auto& b2 = m.branch("branch2");
    basic_conv(b2, "0", 896, 256, 1);
    basic_conv(b2, "1", 256, 256, 3, 1, 1);
    basic_conv(b2, "2", 256, 256, 3, 2);
    m.branch("branch3").add<nn::MaxPool2d>("pool", 3, 2);
  }
  for (int i = 0; i < 5; ++i) detail::block8(net, "repeat_3." + std::to_string(i), 0.20f, true);
  detail::block8(net, "block8", 1.0f, false);
  net.add<nn::GlobalAvgPool>("avgpool_1a");
  net.add<nn::Flatten>("flatten");
  net.add<nn::Linear>("last_linear", 1792, 512, false);
  net.add<nn::BatchNorm>("last_bn", 512, 1e-3f);
  spec.asset = "facenet.rlw";
  detail::index_convs(spec);
  return spec;
}

// Small three-convolution network for tests and smoke runs.
inline BackboneSpec build_stub() {
  BackboneSpec spec;
  spec.net = std::make_unique<nn::Sequential>("");
  auto& net = *spec.net;
  net.add<nn::Conv2d>("conv1", 3, 8, 3, 2, 1);
  net.add<nn::ReLU>("relu1");
  net.add<nn::Conv2d>("conv2", 8, 16, 3, 2, 1);
  net.add<nn::ReLU>("relu2");
  net.add<nn::Conv2d>("conv3", 16, 16, 3, 2, 1);
  net.add<nn::ReLU>("relu3");
  net.add<nn::MaxPool2d>("pool", 2, 2);
  spec.asset = "stub.rlw";
  detail::index_convs(spec);
  return spec;
}

inline BackboneSpec build_backbone(Backbone b) {
  switch (b) {
    case Backbone::vggface_vgg16: return build_vgg16();
    case Backbone::vggface2_resnet50: return build_resnet50();
    case Backbone::facenet: return build_facenet();
    case Backbone::stub: return build_stub();
  }
  throw ConfigError("unknown backbone");
}

}  // namespace rlface::model
