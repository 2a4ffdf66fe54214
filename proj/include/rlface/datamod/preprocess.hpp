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

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "rlface/core/error.hpp"
#include "rlface/core/rng.hpp"

namespace rlface::datamod {

struct AugmentConfig {
  int resize = 244;
  int crop = 224;
  double brightness_lo = 0.8;
  double brightness_hi = 1.2;
  double flip_p = 0.5;
};

namespace detail {

// Single-channel float image in [0, 1] from an 8-bit or float raster with
// 1, 3 or 4 channels.
inline cv::Mat gray01(const cv::Mat& img) {
  if (img.empty()) throw StructuralError("empty image");
  if (img.rows != img.cols)
    throw StructuralError("face crop must be square, got " + std::to_string(img.cols) + "x" + std::to_string(img.rows));
  cv::Mat gray;
  if (img.channels() == 3) cv::cvtColor(img, gray, cv::COLOR_BGR2GRAY);
  else if (img.channels() == 4) cv::cvtColor(img, gray, cv::COLOR_BGRA2GRAY);
  else gray = img;
  cv::Mat out;
  if (gray.depth() == CV_8U) gray.convertTo(out, CV_32F, 1.0 / 255.0);
  else if (gray.depth() == CV_32F) out = gray.clone();
  else throw StructuralError("unsupported image depth");
  return out;
}

inline cv::Mat resize_to(const cv::Mat& img, int side) {
  if (img.rows == side) return img.clone();
  cv::Mat out;
  cv::resize(img, out, cv::Size(side, side), 0, 0, img.rows > side ? cv::INTER_AREA : cv::INTER_LINEAR);
  return out;
}

inline cv::Mat replicate3(const cv::Mat& gray) {
  cv::Mat out;
  cv::merge(std::vector<cv::Mat>{gray, gray, gray}, out);
  return out;
}

}  // namespace detail

// Training view: grayscale in [0, 1], resize, brightness factor, horizontal
// flip, random crop, 3 identical channels (CV_32FC3). Draw order is fixed:
// brightness, flip, crop x, crop y.
inline cv::Mat preprocess_train(const cv::Mat& img, Rng& rng, const AugmentConfig& cfg = {}) {
  cv::Mat g = detail::resize_to(detail::gray01(img), cfg.resize);
  const double factor = rng.uniform(cfg.brightness_lo, cfg.brightness_hi);
  g *= factor;
  cv::min(g, 1.0, g);
  cv::max(g, 0.0, g);
  if (rng.bernoulli(cfg.flip_p)) cv::flip(g, g, 1);
  const int span = cfg.resize - cfg.crop + 1;
  const int x = static_cast<int>(rng.index(static_cast<std::uint64_t>(span)));
  const int y = static_cast<int>(rng.index(static_cast<std::uint64_t>(span)));
  return detail::replicate3(g(cv::Rect(x, y, cfg.crop, cfg.crop)).clone());
}

// Evaluation view: grayscale in [0, 1] resized to the crop size, 3 identical
// channels (CV_32FC3). No randomness.
inline cv::Mat preprocess_eval(const cv::Mat& img, const AugmentConfig& cfg = {}) {
  return detail::replicate3(detail::resize_to(detail::gray01(img), cfg.crop));
}

}  // namespace rlface::datamod
