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
#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>

#include "rlface/core/drop.hpp"
#include "rlface/facepipe/align.hpp"
#include "rlface/facepipe/detection.hpp"
#include "rlface/labeling/labeling.hpp"

namespace rlface::facepipe {

// One training example after face processing.
struct LabeledFace {
  std::string person_id;
  std::string crop_path;  // relative to the dataset root
  int rl_years = 0;
  int age_at_image = 0;
  int age_at_death = 0;
  int side_px = 0;  // crop width in source pixels
  std::string split;  // "train", "val" or empty before splitting
  int birth_year = 0;
  int image_year = 0;
  int death_year = 0;
  // Provenance of the crop.
  std::string source_image;
  std::string detector;
  double confidence = 0;

  friend bool operator==(const LabeledFace&, const LabeledFace&) = default;
};

inline void check_invariants(const LabeledFace& f) {
  if (f.rl_years != f.death_year - f.image_year || f.rl_years < 0)
    throw StructuralError(f.person_id + ": inconsistent rl_years");
  if (f.rl_years + f.age_at_image != f.age_at_death) throw StructuralError(f.person_id + ": rl + age_at_image != age_at_death");
  if (f.side_px < kMinCropSide) throw StructuralError(f.person_id + ": crop narrower than 64 px");
  if (!f.split.empty() && f.split != "train" && f.split != "val")
    throw StructuralError(f.person_id + ": unknown split '" + f.split + "'");
}

inline void to_json(nlohmann::json& j, const LabeledFace& f) {
  j = nlohmann::json{{"person_id", f.person_id},   {"crop_path", f.crop_path},     {"rl_years", f.rl_years},
                     {"age_at_image", f.age_at_image}, {"age_at_death", f.age_at_death}, {"side_px", f.side_px},
                     {"split", f.split},           {"birth_year", f.birth_year},   {"image_year", f.image_year},
                     {"death_year", f.death_year}, {"source_image", f.source_image}, {"detector", f.detector},
                     {"confidence", f.confidence}};
}

inline void from_json(const nlohmann::json& j, LabeledFace& f) {
  f.person_id = j.at("person_id").get<std::string>();
  f.crop_path = j.at("crop_path").get<std::string>();
  f.rl_years = j.at("rl_years").get<int>();
  f.age_at_image = j.at("age_at_image").get<int>();
  f.age_at_death = j.at("age_at_death").get<int>();
  f.side_px = j.at("side_px").get<int>();
  f.split = j.value("split", "");
  f.birth_year = j.at("birth_year").get<int>();
  f.image_year = j.at("image_year").get<int>();
  f.death_year = j.at("death_year").get<int>();
  f.source_image = j.value("source_image", "");
  f.detector = j.value("detector", "");
  f.confidence = j.value("confidence", 0.0);
  check_invariants(f);
}

struct FacesConfig {
  double min_confidence = kMinConfidence;
  double eye_margin = 0.05;
  int min_side = kMinCropSide;
  CropGeometry geometry;
  int workers = 1;
};

using DetectorFactory = std::function<std::unique_ptr<FaceDetector>()>;

// Detect, gate, frontal check, align and width filter for one image.
// Throws Rejection with the first failing reason.
inline AlignedFace process_image(const cv::Mat& img, const std::filesystem::path& path, FaceDetector& det,
                                 const FacesConfig& cfg, LabeledFace* provenance = nullptr) {
  const auto dets = det.detect_image(path, img);
  for (const auto& d : dets) check_invariants(d, img.cols, img.rows);
  const auto gate = gate_detections(dets, cfg.min_confidence);
  if (!gate.accepted) throw Rejection(gate.reason);
  const auto frontal = frontal_check(*gate.accepted, cfg.eye_margin);
  if (!frontal.pass) throw Rejection("not frontal: " + frontal.reason);
  auto aligned = align_and_crop(img, *gate.accepted, cfg.geometry);
  if (!width_filter(aligned.crop, cfg.min_side)) throw Rejection("face narrower than " + std::to_string(cfg.min_side) + " px");
  if (provenance) {
    provenance->detector = det.name();
    provenance->confidence = gate.accepted->confidence;
  }
  return aligned;
}

struct FacesResult {
  std::vector<LabeledFace> faces;  // sorted by person_id
  std::vector<DropEntry> drops;
};

// Runs face processing over labelled records. Image paths resolve against
// `image_root`; crops are written losslessly to `<root>/<crop_dir>/<id>.png`
// and referenced relative to `root`. Non-shareable detectors get one
// instance per worker.
inline FacesResult process_faces(const std::vector<labeling::LabeledRecord>& records,
                                 const std::filesystem::path& image_root, const std::filesystem::path& root,
                                 const std::string& crop_dir, const DetectorFactory& make_detector,
                                 const FacesConfig& cfg = {}) {
  std::filesystem::create_directories(root / crop_dir);
  std::vector<std::optional<LabeledFace>> faces(records.size());
  std::vector<std::string> reasons(records.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr fatal;
  std::mutex mu;

  std::shared_ptr<FaceDetector> shared(make_detector());
  const int n = std::max(1, std::min<int>(cfg.workers, static_cast<int>(records.size())));
  auto work = [&](std::shared_ptr<FaceDetector> det) {
    for (std::size_t i = next++; i < records.size(); i = next++) {
      const auto& r = records[i];
      try {
        LabeledFace f;
        const auto src = image_root / r.image_path;
        const cv::Mat img = decode_image(src);
        auto aligned = process_image(img, src, *det, cfg, &f);
        f.person_id = r.person_id;
        f.crop_path = crop_dir + "/" + r.person_id + ".png";
        f.rl_years = r.rl_years;
        f.age_at_image = r.age_at_image;
        f.age_at_death = r.age_at_death;
        f.side_px = aligned.crop.side_px;
        f.birth_year = r.birth_year;
        f.image_year = r.image_year;
        f.death_year = r.death_year;
        f.source_image = r.image_path;
        if (!cv::imwrite((root / f.crop_path).string(), aligned.crop.image, {cv::IMWRITE_PNG_COMPRESSION, 6}))
          throw Error("cannot write crop " + (root / f.crop_path).string());
        faces[i] = std::move(f);
      } catch (const Rejection& e) {
        reasons[i] = e.reason();
      } catch (...) {
        std::lock_guard lock(mu);
        if (!fatal) fatal = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < n; ++t)
    pool.emplace_back(work, shared->shareable() ? shared : std::shared_ptr<FaceDetector>(make_detector()));
  work(shared);
  for (auto& t : pool) t.join();
  if (fatal) std::rethrow_exception(fatal);

  FacesResult out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (faces[i]) out.faces.push_back(std::move(*faces[i]));
    else out.drops.push_back({records[i].person_id, "faces", reasons[i]});
  }
  auto by_id = [](const auto& a, const auto& b) { return a.person_id < b.person_id; };
  std::stable_sort(out.faces.begin(), out.faces.end(), by_id);
  std::stable_sort(out.drops.begin(), out.drops.end(), by_id);
  return out;
}

}  // namespace rlface::facepipe
