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
#include <array>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "rlface/facepipe/detection.hpp"
#include "rlface/nn/layers.hpp"
#include "rlface/nn/weights.hpp"

namespace rlface::facepipe {

// Three-stage cascaded face detector (proposal, refine and output networks)
// with five-point landmarks. Weights are read from RLW1 files named
// pnet.rlw, rnet.rlw and onet.rlw.
class MtcnnDetector : public FaceDetector {
 public:
  struct Options {
    double min_face_size = 20;
    std::array<double, 3> thresholds{0.6, 0.7, 0.7};
    double factor = 0.709;
  };

  explicit MtcnnDetector(const std::filesystem::path& weights_dir) : MtcnnDetector(weights_dir, Options{}) {}

  MtcnnDetector(const std::filesystem::path& weights_dir, Options opt) : opt_(opt) {
    build();
    for (const char* f : {"pnet.rlw", "rnet.rlw", "onet.rlw"})
      if (!std::filesystem::exists(weights_dir / f))
        throw MissingArtifact("MTCNN weights asset missing: " + (weights_dir / f).string());
    load(weights_dir / "pnet.rlw", {&pnet_, &pnet_cls_, &pnet_reg_});
    load(weights_dir / "rnet.rlw", {&rnet_, &rnet_cls_, &rnet_reg_});
    load(weights_dir / "onet.rlw", {&onet_, &onet_cls_, &onet_reg_, &onet_pts_});
  }

  bool shareable() const override { return false; }
  std::string name() const override { return "mtcnn"; }

  std::vector<FaceDetection> detect(const cv::Mat& bgr) override {
    if (bgr.empty()) throw Rejection("undecodable image");
    const Image img = to_chw_rgb(bgr);
    const int h = img.h, w = img.w;

    // Stage 1: proposal network over an image pyramid.
    const double m = 12.0 / opt_.min_face_size;
    double minl = std::min(h, w) * m;
    std::vector<double> scales;
    for (double s = m; minl >= 12; s *= opt_.factor, minl *= opt_.factor) scales.push_back(s);

    std::vector<Candidate> boxes;
    for (double scale : scales) {
      const int hs = static_cast<int>(h * scale + 1), ws = static_cast<int>(w * scale + 1);
      nn::Tensor x = normalise(area_resize(img, 0, 0, h, w, hs, ws));
      nn::Tensor trunk = pnet_.forward(x, false);
      nn::Tensor reg = pnet_reg_.forward(trunk, false);
      nn::Tensor cls = pnet_cls_.forward(trunk, false);
      const int oh = cls.dim(2), ow = cls.dim(3);
      std::vector<Candidate> found;
      for (int yy = 0; yy < oh; ++yy) {
        for (int xx = 0; xx < ow; ++xx) {
          const std::size_t at = static_cast<std::size_t>(yy) * ow + xx;
          const float p = softmax1(cls[at], cls[static_cast<std::size_t>(oh) * ow + at]);
          if (p < static_cast<float>(opt_.thresholds[0])) continue;
          const float fs = static_cast<float>(scale);
          Candidate c;
          c.x1 = std::floor((2.0f * xx + 1) / fs);
          c.y1 = std::floor((2.0f * yy + 1) / fs);
          c.x2 = std::floor((2.0f * xx + 12) / fs);
          c.y2 = std::floor((2.0f * yy + 12) / fs);
          c.score = p;
          for (int k = 0; k < 4; ++k) c.reg[k] = reg[static_cast<std::size_t>(k) * oh * ow + at];
          found.push_back(c);
        }
      }
      for (auto& c : nms(found, 0.5, false)) boxes.push_back(c);
    }
    boxes = nms(boxes, 0.7, false);
    for (auto& c : boxes) {
      const float rw = c.x2 - c.x1, rh = c.y2 - c.y1;
      c = Candidate{c.x1 + c.reg[0] * rw, c.y1 + c.reg[1] * rh, c.x2 + c.reg[2] * rw, c.y2 + c.reg[3] * rh, c.score, {}, {}};
      square(c);
    }

    // Stage 2: refinement network on 24x24 crops.
    if (!boxes.empty()) {
      nn::Tensor batch = crops(img, boxes, 24);
      nn::Tensor trunk = rnet_.forward(batch, false);
      nn::Tensor reg = rnet_reg_.forward(trunk, false);
      nn::Tensor cls = rnet_cls_.forward(trunk, false);
      std::vector<Candidate> kept;
      for (std::size_t i = 0; i < boxes.size(); ++i) {
        const float p = softmax1(cls[2 * i], cls[2 * i + 1]);
        if (p <= static_cast<float>(opt_.thresholds[1])) continue;
        Candidate c = boxes[i];
        c.score = p;
        for (int k = 0; k < 4; ++k) c.reg[k] = reg[4 * i + static_cast<std::size_t>(k)];
        kept.push_back(c);
      }
      boxes = nms(kept, 0.7, false);
      for (auto& c : boxes) {
        regress(c);
        square(c);
      }
    }

    // Stage 3: output network with landmarks.
    std::vector<FaceDetection> out;
    if (!boxes.empty()) {
      nn::Tensor batch = crops(img, boxes, 48);
      nn::Tensor trunk = onet_.forward(batch, false);
      nn::Tensor reg = onet_reg_.forward(trunk, false);
      nn::Tensor pts = onet_pts_.forward(trunk, false);
      nn::Tensor cls = onet_cls_.forward(trunk, false);
      std::vector<Candidate> kept;
      for (std::size_t i = 0; i < boxes.size(); ++i) {
        const float p = softmax1(cls[2 * i], cls[2 * i + 1]);
        if (p <= static_cast<float>(opt_.thresholds[2])) continue;
        Candidate c = boxes[i];
        c.score = p;
        for (int k = 0; k < 4; ++k) c.reg[k] = reg[4 * i + static_cast<std::size_t>(k)];
        const float bw = c.x2 - c.x1 + 1, bh = c.y2 - c.y1 + 1;
        for (int k = 0; k < 5; ++k) {
          c.points[k] = {bw * pts[10 * i + static_cast<std::size_t>(k)] + c.x1 - 1,
                         bh * pts[10 * i + 5 + static_cast<std::size_t>(k)] + c.y1 - 1};
        }
        regress(c);
        kept.push_back(c);
      }
      kept = nms(kept, 0.7, true);
      std::stable_sort(kept.begin(), kept.end(), [](const Candidate& a, const Candidate& b) {
        return (a.x2 - a.x1) * (a.y2 - a.y1) > (b.x2 - b.x1) * (b.y2 - b.y1);
      });
      for (const auto& c : kept) {
        FaceDetection d;
        d.box = {c.x1, c.y1, c.x2 - c.x1, c.y2 - c.y1};
        d.confidence = std::clamp(static_cast<double>(c.score), 0.0, 1.0);
        // Landmarks of faces cut by the frame can fall a pixel or two outside.
        for (int k = 0; k < 5; ++k)
          d.landmarks[k] = {std::clamp(c.points[k].x, 0.0, w - 1.0), std::clamp(c.points[k].y, 0.0, h - 1.0)};
        out.push_back(d);
      }
    }
    return out;
  }

 private:
  struct Candidate {
    // Single precision throughout so box edges truncate like the reference.
    float x1 = 0, y1 = 0, x2 = 0, y2 = 0, score = 0;
    std::array<float, 4> reg{};
    std::array<Point, 5> points{};
  };

  struct Image {
    int h = 0, w = 0;
    std::vector<float> data;  // 3 x h x w, RGB, 0..255
  };

  static Image to_chw_rgb(const cv::Mat& bgr) {
    cv::Mat rgb;
    if (bgr.channels() == 1) cv::cvtColor(bgr, rgb, cv::COLOR_GRAY2RGB);
    else if (bgr.channels() == 4) cv::cvtColor(bgr, rgb, cv::COLOR_BGRA2RGB);
    else cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    Image img{rgb.rows, rgb.cols, std::vector<float>(static_cast<std::size_t>(3) * rgb.rows * rgb.cols)};
    for (int y = 0; y < rgb.rows; ++y) {
      const auto* row = rgb.ptr<cv::Vec3b>(y);
      for (int x = 0; x < rgb.cols; ++x)
        for (int c = 0; c < 3; ++c)
          img.data[(static_cast<std::size_t>(c) * img.h + y) * img.w + x] = row[x][c];
    }
    return img;
  }

  // Adaptive average pooling of the region [y0, y1) x [x0, x1) to oh x ow.
  static nn::Tensor area_resize(const Image& img, int y0, int x0, int y1, int x1, int oh, int ow) {
    const int rh = y1 - y0, rw = x1 - x0;
    nn::Tensor out({1, 3, oh, ow});
    for (int c = 0; c < 3; ++c) {
      for (int oy = 0; oy < oh; ++oy) {
        const int sy = static_cast<int>(std::floor(static_cast<double>(oy) * rh / oh));
        const int ey = static_cast<int>(std::ceil(static_cast<double>(oy + 1) * rh / oh));
        for (int ox = 0; ox < ow; ++ox) {
          const int sx = static_cast<int>(std::floor(static_cast<double>(ox) * rw / ow));
          const int ex = static_cast<int>(std::ceil(static_cast<double>(ox + 1) * rw / ow));
          double s = 0;
          for (int yy = sy; yy < ey; ++yy)
            for (int xx = sx; xx < ex; ++xx)
              s += img.data[(static_cast<std::size_t>(c) * img.h + (y0 + yy)) * img.w + (x0 + xx)];
          out[(static_cast<std::size_t>(c) * oh + oy) * ow + ox] = static_cast<float>(s / ((ey - sy) * (ex - sx)));
        }
      }
    }
    return out;
  }

  static nn::Tensor normalise(nn::Tensor t) {
    for (auto& v : t.values()) v = (v - 127.5f) * 0.0078125f;
    return t;
  }

  // Two-way softmax in single precision. Scores of clear faces saturate to
  // exactly 1, and the NMS tie order depends on that.
  static float softmax1(float a0, float a1) {
    const float m = std::max(a0, a1);
    const float e0 = std::exp(a0 - m), e1 = std::exp(a1 - m);
    return e1 / (e0 + e1);
  }

  static void square(Candidate& c) {
    const float h = c.y2 - c.y1, w = c.x2 - c.x1, l = std::max(w, h);
    c.x1 = c.x1 + w * 0.5f - l * 0.5f;
    c.y1 = c.y1 + h * 0.5f - l * 0.5f;
    c.x2 = c.x1 + l;
    c.y2 = c.y1 + l;
  }

  static void regress(Candidate& c) {
    const float w = c.x2 - c.x1 + 1, h = c.y2 - c.y1 + 1;
    const float x1 = c.x1 + c.reg[0] * w, y1 = c.y1 + c.reg[1] * h;
    const float x2 = c.x2 + c.reg[2] * w, y2 = c.y2 + c.reg[3] * h;
    c.x1 = x1;
    c.y1 = y1;
    c.x2 = x2;
    c.y2 = y2;
  }

  // Greedy non-maximum suppression. Union overlap uses continuous areas;
  // the "Min" variant uses inclusive pixel areas and overlap / min(area).
  static std::vector<Candidate> nms(const std::vector<Candidate>& in, double thresh, bool min_mode) {
    std::vector<std::size_t> order(in.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return in[a].score > in[b].score; });
    const float e = min_mode ? 1.0f : 0.0f;
    std::vector<bool> dead(in.size(), false);
    std::vector<Candidate> out;
    for (std::size_t oi = 0; oi < order.size(); ++oi) {
      const std::size_t i = order[oi];
      if (dead[i]) continue;
      out.push_back(in[i]);
      const auto& a = in[i];
      const float area_a = (a.x2 - a.x1 + e) * (a.y2 - a.y1 + e);
      for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
        const std::size_t j = order[oj];
        if (dead[j]) continue;
        const auto& b = in[j];
        const float iw = std::max(0.0f, std::min(a.x2, b.x2) - std::max(a.x1, b.x1) + e);
        const float ih = std::max(0.0f, std::min(a.y2, b.y2) - std::max(a.y1, b.y1) + e);
        const float inter = iw * ih;
        const float area_b = (b.x2 - b.x1 + e) * (b.y2 - b.y1 + e);
        const float o = min_mode ? inter / std::min(area_a, area_b) : inter / (area_a + area_b - inter);
        if (o > thresh) dead[j] = true;
      }
    }
    return out;
  }

  // Crops each candidate (clamped to the image, 1-based inclusive box
  // convention) and resizes to size x size.
  static nn::Tensor crops(const Image& img, const std::vector<Candidate>& boxes, int size) {
    std::vector<nn::Tensor> parts;
    for (const auto& c : boxes) {
      int x = static_cast<int>(std::trunc(c.x1)), y = static_cast<int>(std::trunc(c.y1));
      int ex = static_cast<int>(std::trunc(c.x2)), ey = static_cast<int>(std::trunc(c.y2));
      x = std::max(x, 1);
      y = std::max(y, 1);
      ex = std::min(ex, img.w);
      ey = std::min(ey, img.h);
      if (ey > y - 1 && ex > x - 1) parts.push_back(normalise(area_resize(img, y - 1, x - 1, ey, ex, size, size)));
      else parts.push_back(nn::Tensor({1, 3, size, size}));
    }
    return nn::concat0(parts);
  }

  void build() {
    pnet_.add<nn::Conv2d>("conv1", 3, 10, 3);
    pnet_.add<nn::PReLU>("prelu1", 10);
    pnet_.add<nn::MaxPool2d>("pool1", 2, 2, 0, true);
    pnet_.add<nn::Conv2d>("conv2", 10, 16, 3);
    pnet_.add<nn::PReLU>("prelu2", 16);
    pnet_.add<nn::Conv2d>("conv3", 16, 32, 3);
    pnet_.add<nn::PReLU>("prelu3", 32);

    rnet_.add<nn::Conv2d>("conv1", 3, 28, 3);
    rnet_.add<nn::PReLU>("prelu1", 28);
    rnet_.add<nn::MaxPool2d>("pool1", 3, 2, 0, true);
    rnet_.add<nn::Conv2d>("conv2", 28, 48, 3);
    rnet_.add<nn::PReLU>("prelu2", 48);
    rnet_.add<nn::MaxPool2d>("pool2", 3, 2, 0, true);
    rnet_.add<nn::Conv2d>("conv3", 48, 64, 2);
    rnet_.add<nn::PReLU>("prelu3", 64);
    rnet_.add<nn::Flatten>("flatten");
    rnet_.add<nn::Linear>("dense4", 576, 128);
    rnet_.add<nn::PReLU>("prelu4", 128);

    onet_.add<nn::Conv2d>("conv1", 3, 32, 3);
    onet_.add<nn::PReLU>("prelu1", 32);
    onet_.add<nn::MaxPool2d>("pool1", 3, 2, 0, true);
    onet_.add<nn::Conv2d>("conv2", 32, 64, 3);
    onet_.add<nn::PReLU>("prelu2", 64);
    onet_.add<nn::MaxPool2d>("pool2", 3, 2, 0, true);
    onet_.add<nn::Conv2d>("conv3", 64, 64, 3);
    onet_.add<nn::PReLU>("prelu3", 64);
    onet_.add<nn::MaxPool2d>("pool3", 2, 2, 0, true);
    onet_.add<nn::Conv2d>("conv4", 64, 128, 2);
    onet_.add<nn::PReLU>("prelu4", 128);
    onet_.add<nn::Flatten>("flatten");
    onet_.add<nn::Linear>("dense5", 1152, 256);
    onet_.add<nn::PReLU>("prelu5", 256);
  }

  static void load(const std::filesystem::path& file, std::initializer_list<nn::Module*> parts) {
    const auto tensors = nn::read_weights(file);
    for (auto* p : parts) nn::load_weights(*p, tensors, true);
  }

  Options opt_;
  nn::Sequential pnet_{""}, rnet_{""}, onet_{""};
  nn::Conv2d pnet_cls_{"conv4_1", 32, 2, 1}, pnet_reg_{"conv4_2", 32, 4, 1};
  nn::Linear rnet_cls_{"dense5_1", 128, 2}, rnet_reg_{"dense5_2", 128, 4};
  nn::Linear onet_cls_{"dense6_1", 256, 2}, onet_reg_{"dense6_2", 256, 4}, onet_pts_{"dense6_3", 256, 10};
};

}  // namespace rlface::facepipe
