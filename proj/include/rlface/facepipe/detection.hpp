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

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "rlface/core/error.hpp"

namespace rlface::facepipe {

struct Point {
  double x = 0;
  double y = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

struct Box {
  double x = 0, y = 0, w = 0, h = 0;
  friend bool operator==(const Box&, const Box&) = default;
};

enum Landmark { kLeftEye = 0, kRightEye, kNose, kMouthLeft, kMouthRight };

struct FaceDetection {
  Box box;
  std::array<Point, 5> landmarks{};  // indexed by Landmark
  double confidence = 0;

  const Point& left_eye() const { return landmarks[kLeftEye]; }
  const Point& right_eye() const { return landmarks[kRightEye]; }
  const Point& nose() const { return landmarks[kNose]; }
};

// Throws StructuralError when a landmark leaves the image or the confidence is
// not a probability.
inline void check_invariants(const FaceDetection& d, int width, int height) {
  if (!(d.confidence >= 0.0 && d.confidence <= 1.0)) throw StructuralError("detection confidence outside [0, 1]");
  for (const auto& p : d.landmarks)
    if (p.x < 0 || p.y < 0 || p.x > width - 1 || p.y > height - 1)
      throw StructuralError("landmark outside image bounds");
}

inline void to_json(nlohmann::json& j, const FaceDetection& d) {
  j = nlohmann::json{{"box", {d.box.x, d.box.y, d.box.w, d.box.h}}, {"confidence", d.confidence}};
  auto& lm = j["landmarks"] = nlohmann::json::array();
  for (const auto& p : d.landmarks) lm.push_back({p.x, p.y});
}

inline void from_json(const nlohmann::json& j, FaceDetection& d) {
  const auto& b = j.at("box");
  d.box = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()};
  d.confidence = j.at("confidence").get<double>();
  const auto& lm = j.at("landmarks");
  if (lm.size() != 5) throw StructuralError("detection needs 5 landmarks");
  for (std::size_t i = 0; i < 5; ++i) d.landmarks[i] = {lm[i].at(0).get<double>(), lm[i].at(1).get<double>()};
}

// Face detector adapter. Implementations return every face found with its
// five landmarks and a confidence in [0, 1].
class FaceDetector {
 public:
  virtual ~FaceDetector() = default;
  virtual std::vector<FaceDetection> detect(const cv::Mat& bgr) = 0;
  // Path-aware entry used by the pipeline; adapters that read stored
  // detections override it.
  virtual std::vector<FaceDetection> detect_image(const std::filesystem::path&, const cv::Mat& bgr) {
    return detect(bgr);
  }
  // Whether one instance may be used from several threads at once.
  virtual bool shareable() const = 0;
  virtual std::string name() const = 0;
};

// Reads detections stored next to each image as "<image>.faces.json". Lets
// the pipeline run against hand-annotated or pre-computed detections.
class SidecarDetector : public FaceDetector {
 public:
  std::vector<FaceDetection> detect_file(const std::filesystem::path& image_path) {
    const auto sidecar = std::filesystem::path(image_path.string() + ".faces.json");
    if (!std::filesystem::exists(sidecar)) return {};
    std::ifstream in(sidecar);
    return nlohmann::json::parse(in).get<std::vector<FaceDetection>>();
  }
  std::vector<FaceDetection> detect(const cv::Mat&) override {
    throw StructuralError("SidecarDetector needs the image path; use detect_file");
  }
  std::vector<FaceDetection> detect_image(const std::filesystem::path& path, const cv::Mat&) override {
    return detect_file(path);
  }
  bool shareable() const override { return true; }
  std::string name() const override { return "sidecar"; }
};

// Returns a fixed list; for tests.
class FixedDetector : public FaceDetector {
 public:
  explicit FixedDetector(std::vector<FaceDetection> dets) : dets_(std::move(dets)) {}
  std::vector<FaceDetection> detect(const cv::Mat&) override { return dets_; }
  bool shareable() const override { return true; }
  std::string name() const override { return "fixed"; }

 private:
  std::vector<FaceDetection> dets_;
};

// Decodes an image file to 8-bit BGR. Throws Rejection("undecodable image").
inline cv::Mat decode_image(const std::filesystem::path& path) {
  cv::Mat img = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (img.empty()) throw Rejection("undecodable image");
  return img;
}

inline constexpr double kMinConfidence = 0.98;

struct GateResult {
  std::optional<FaceDetection> accepted;
  std::string reason;  // "no face", "multiple faces" or "low confidence" on rejection
};

// Accepts exactly one detection whose confidence is at least `min_confidence`.
inline GateResult gate_detections(const std::vector<FaceDetection>& dets, double min_confidence = kMinConfidence) {
  if (dets.empty()) return {std::nullopt, "no face"};
  if (dets.size() > 1) return {std::nullopt, "multiple faces"};
  if (dets.front().confidence < min_confidence) return {std::nullopt, "low confidence"};
  return {dets.front(), {}};
}

}  // namespace rlface::facepipe
