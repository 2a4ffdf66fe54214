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

// Minimal chart rendering on OpenCV rasters. The CSV tables are the
// contract; these images are for quick inspection.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "rlface/core/error.hpp"

namespace rlface::plot {

struct Series {
  std::string label;
  std::vector<double> x, y;
  cv::Scalar color{200, 80, 30};
  bool bars = false;
};

struct Chart {
  std::string title, xlabel, ylabel;
  std::vector<Series> series;
  std::optional<double> hline;  // reference line
  int width = 640, height = 420;
};

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace detail

inline cv::Mat render(const Chart& c) {
  cv::Mat img(c.height, c.width, CV_8UC3, cv::Scalar(255, 255, 255));
  const int left = 60, right = 20, top = 36, bottom = 48;
  const int pw = c.width - left - right, ph = c.height - top - bottom;
  double x0 = 1e300, x1 = -1e300, y0 = 0, y1 = -1e300;
  for (const auto& s : c.series) {
    for (double v : s.x) x0 = std::min(x0, v), x1 = std::max(x1, v);
    for (double v : s.y) y0 = std::min(y0, v), y1 = std::max(y1, v);
  }
  if (c.hline) y1 = std::max(y1, *c.hline);
  if (x0 > x1) x0 = 0, x1 = 1;
  if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
  if (y1 - y0 < 1e-12) y1 = y0 + 1;
  y1 += 0.05 * (y1 - y0);
  auto px = [&](double x) { return left + static_cast<int>(std::lround((x - x0) / (x1 - x0) * pw)); };
  auto py = [&](double y) { return top + ph - static_cast<int>(std::lround((y - y0) / (y1 - y0) * ph)); };

  const cv::Scalar black(0, 0, 0), grey(160, 160, 160);
  const auto font = cv::FONT_HERSHEY_SIMPLEX;
  cv::rectangle(img, {left, top}, {left + pw, top + ph}, black, 1);
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4, yv = y0 + (y1 - y0) * i / 4;
    cv::putText(img, detail::fmt(xv), {px(xv) - 14, top + ph + 16}, font, 0.38, black, 1, cv::LINE_AA);
    cv::putText(img, detail::fmt(yv), {4, py(yv) + 4}, font, 0.38, black, 1, cv::LINE_AA);
  }
  cv::putText(img, c.title, {left, 22}, font, 0.5, black, 1, cv::LINE_AA);
  cv::putText(img, c.xlabel, {left + pw / 2 - 40, c.height - 10}, font, 0.42, black, 1, cv::LINE_AA);
  cv::putText(img, c.ylabel, {4, top - 8}, font, 0.42, black, 1, cv::LINE_AA);

  int legend_y = top + 16;
  for (const auto& s : c.series) {
    if (s.bars) {
      double step = x1 - x0;
      for (std::size_t i = 1; i < s.x.size(); ++i) step = std::min(step, s.x[i] - s.x[i - 1]);
      const int half = std::max(1, static_cast<int>(0.4 * step / (x1 - x0) * pw));
      for (std::size_t i = 0; i < s.x.size(); ++i)
        cv::rectangle(img, {px(s.x[i]) - half, py(s.y[i])}, {px(s.x[i]) + half, py(0)}, s.color, cv::FILLED);
    } else {
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        cv::circle(img, {px(s.x[i]), py(s.y[i])}, 3, s.color, cv::FILLED, cv::LINE_AA);
        if (i) cv::line(img, {px(s.x[i - 1]), py(s.y[i - 1])}, {px(s.x[i]), py(s.y[i])}, s.color, 2, cv::LINE_AA);
      }
    }
    if (!s.label.empty()) {
      cv::rectangle(img, {left + pw - 150, legend_y - 8}, {left + pw - 140, legend_y + 2}, s.color, cv::FILLED);
      cv::putText(img, s.label, {left + pw - 134, legend_y + 2}, font, 0.4, black, 1, cv::LINE_AA);
      legend_y += 16;
    }
  }
  if (c.hline) cv::line(img, {left, py(*c.hline)}, {left + pw, py(*c.hline)}, grey, 1, cv::LINE_AA);
  return img;
}

inline void save(const Chart& c, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), render(c))) throw Error("cannot write plot " + path.string());
}

}  // namespace rlface::plot
