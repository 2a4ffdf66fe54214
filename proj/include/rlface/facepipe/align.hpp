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

#include <cmath>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "rlface/core/error.hpp"
#include "rlface/facepipe/detection.hpp"

namespace rlface::facepipe {

// Canonical crop geometry: the inter-eye segment spans the middle
// `eye_span` of the crop width and sits `eye_height` from the top.
struct CropGeometry {
  double eye_span = 0.28;
  double eye_height = 0.43;
};

struct FaceCrop {
  cv::Mat image;  // side_px x side_px, same channel count as the source
  int side_px = 0;
  std::string person_id;
};

struct AlignedFace {
  FaceCrop crop;
  cv::Matx23d transform;  // source pixel -> crop pixel
  double angle_deg = 0;   // rotation that levelled the eyes
  Point origin;           // source position of crop pixel (0, 0)

  Point map(const Point& p) const {
    return {transform(0, 0) * p.x + transform(0, 1) * p.y + transform(0, 2),
            transform(1, 0) * p.x + transform(1, 1) * p.y + transform(1, 2)};
  }
};

// Similarity transform that levels the eyes and places them at
// (0.5 -/+ span/2, height) of a crop with side `side`. `scale` maps source
// distances to crop distances.
inline cv::Matx23d eye_alignment_transform(const Point& left, const Point& right, double side, double scale,
                                           const CropGeometry& g = {}) {
  const double theta = std::atan2(right.y - left.y, right.x - left.x);
  const double c = std::cos(theta) * scale, s = std::sin(theta) * scale;
  const double mx = 0.5 * (left.x + right.x), my = 0.5 * (left.y + right.y);
  const double tx = 0.5 * side - (c * mx + s * my);
  const double ty = g.eye_height * side - (-s * mx + c * my);
  return {c, s, tx, -s, c, ty};
}

// Rotates the face about the eye midpoint so the eyes are horizontal and cuts
// a square whose side is the inter-eye distance / eye_span. Regions outside
// the source are filled by edge replication. The side is rounded to whole
// pixels and the content scaled by side / exact_side so the eyes land exactly
// on their canonical positions.
inline AlignedFace align_and_crop(const cv::Mat& image, const FaceDetection& det, const CropGeometry& g = {},
                                  std::string person_id = {}) {
  const Point& l = det.left_eye();
  const Point& r = det.right_eye();
  const double dist = std::hypot(r.x - l.x, r.y - l.y);
  if (!(dist > 1e-6)) throw Rejection("degenerate landmarks");
  const double exact = dist / g.eye_span;
  const int side = static_cast<int>(std::lround(exact));
  if (side < 1) throw Rejection("degenerate landmarks");
  const double scale = side / exact;

  AlignedFace out;
  out.transform = eye_alignment_transform(l, r, side, scale, g);
  out.angle_deg = std::atan2(r.y - l.y, r.x - l.x) * 180.0 / CV_PI;
  cv::warpAffine(image, out.crop.image, cv::Mat(out.transform), cv::Size(side, side), cv::INTER_LINEAR,
                 cv::BORDER_REPLICATE);
  out.crop.side_px = side;
  out.crop.person_id = std::move(person_id);
  cv::Matx23d inv;
  cv::invertAffineTransform(out.transform, inv);
  out.origin = {inv(0, 2), inv(1, 2)};
  return out;
}

struct FrontalResult {
  bool pass = false;
  std::string reason;
};

// Operational frontal-pose rule: both eyes strictly inside the detection box
// with a margin of at least `margin_frac` of the box width, and the nose
// strictly between the eyes horizontally once the eyes are levelled.
inline FrontalResult frontal_check(const FaceDetection& det, double margin_frac = 0.05) {
  const double m = margin_frac * det.box.w;
  for (const Point* eye : {&det.left_eye(), &det.right_eye()}) {
    const bool inside = eye->x - det.box.x >= m && det.box.x + det.box.w - eye->x >= m &&
                        eye->y - det.box.y >= m && det.box.y + det.box.h - eye->y >= m;
    if (!inside) return {false, "eye outside box margin"};
  }
  const Point& l = det.left_eye();
  const Point& r = det.right_eye();
  if (std::hypot(r.x - l.x, r.y - l.y) <= 1e-6) return {false, "degenerate landmarks"};
  const auto t = eye_alignment_transform(l, r, 1.0, 1.0);
  auto ax = [&](const Point& p) { return t(0, 0) * p.x + t(0, 1) * p.y + t(0, 2); };
  const double lx = ax(l), rx = ax(r), nx = ax(det.nose());
  if (!(std::min(lx, rx) < nx && nx < std::max(lx, rx))) return {false, "nose not between eyes"};
  return {true, {}};
}

inline constexpr int kMinCropSide = 64;

inline bool width_filter(const FaceCrop& crop, int min_side = kMinCropSide) { return crop.side_px >= min_side; }

}  // namespace rlface::facepipe
