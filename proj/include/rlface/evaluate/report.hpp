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
#include <functional>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rlface/core/hash.hpp"
#include "rlface/datamod/streams.hpp"
#include "rlface/evaluate/metrics.hpp"
#include "rlface/evaluate/plot.hpp"
#include "rlface/facepipe/pipeline.hpp"

namespace rlface::evaluate {

// Predicted RL (clamped) for an aligned crop.
using CropPredictor = std::function<double(const cv::Mat& crop)>;

// Runs the predictor over validation faces, in manifest order.
inline std::vector<EvalItem> predict_faces(const std::vector<facepipe::LabeledFace>& faces,
                                           const std::filesystem::path& root, const CropPredictor& predict) {
  std::vector<EvalItem> out;
  for (const auto& f : faces) {
    if (f.split != "val") continue;
    EvalItem it;
    it.person_id = f.person_id;
    it.actual = f.rl_years;
    it.predicted = predict(datamod::load_crop(root / f.crop_path));
    it.rl = f.rl_years;
    it.age_at_image = f.age_at_image;
    it.age_at_death = f.age_at_death;
    it.face_width = f.side_px;
    out.push_back(std::move(it));
  }
  if (out.empty()) throw StructuralError("no validation faces; run split first");
  return out;
}

namespace detail {

inline std::string num(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace detail

inline std::string predictions_csv(std::span<const EvalItem> items) {
  std::string out = "person_id,actual,predicted,error,rl,age_at_image,age_at_death,face_width\n";
  for (const auto& it : items)
    out += it.person_id + "," + detail::num(it.actual) + "," + detail::num(it.predicted) + "," + detail::num(it.error()) +
           "," + detail::num(it.rl) + "," + detail::num(it.age_at_image) + "," + detail::num(it.age_at_death) + "," +
           detail::num(it.face_width) + "\n";
  return out;
}

inline std::string curve_csv(const CovariateCurve& c) {
  std::string out = "lower,upper,center,mae,n,overall_mae\n";
  for (const auto& p : c.points)
    out += detail::num(p.lower) + "," + detail::num(p.upper) + "," + detail::num(p.center) + "," + detail::num(p.mae) +
           "," + std::to_string(p.n) + "," + detail::num(c.overall_mae) + "\n";
  return out;
}

inline std::string histogram_csv(const std::vector<HistogramBin>& h) {
  std::string out = "error_center,count\n";
  for (const auto& b : h) out += detail::num(b.center) + "," + std::to_string(b.count) + "\n";
  return out;
}

inline std::string extremes_csv(const EvaluationReport& r, std::span<const EvalItem> items) {
  std::map<std::string, const EvalItem*> by_id;
  for (const auto& it : items) by_id[it.person_id] = &it;
  std::string out = "kind,rank,person_id,actual,predicted,abs_error\n";
  auto emit = [&](const char* kind, const std::vector<std::string>& ids) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto* it = by_id.at(ids[i]);
      out += std::string(kind) + "," + std::to_string(i + 1) + "," + ids[i] + "," + detail::num(it->actual) + "," +
             detail::num(it->predicted) + "," + detail::num(std::abs(it->error())) + "\n";
    }
  };
  emit("best", r.best_examples);
  emit("worst", r.worst_examples);
  return out;
}

// Writes report.json, the CSV tables and the plots. The report is checked
// first; an inconsistent report throws InvariantViolation and nothing is
// written.
inline void write_report(const std::filesystem::path& dir, const EvaluationReport& r, std::span<const EvalItem> items) {
  check_invariants(r);
  std::filesystem::create_directories(dir);
  write_file(dir / "report.json", nlohmann::json(r).dump(2) + "\n");
  write_file(dir / "predictions.csv", predictions_csv(items));
  write_file(dir / "error_histogram.csv", histogram_csv(r.histogram));
  write_file(dir / "extremes.csv", extremes_csv(r, items));

  plot::Chart h{"Prediction errors (true - pred)", "error (years)", "count", {}, std::nullopt};
  plot::Series hs{"", {}, {}, {200, 80, 30}, true};
  for (const auto& b : r.histogram) {
    hs.x.push_back(b.center);
    hs.y.push_back(static_cast<double>(b.count));
  }
  h.series.push_back(hs);
  plot::save(h, dir / "error_histogram.png");

  for (const auto& c : r.mae_by) {
    const std::string name = to_string(c.covariate);
    write_file(dir / ("mae_by_" + name + ".csv"), curve_csv(c));
    plot::Chart ch{"MAE by " + name, name, "MAE (years)", {}, c.overall_mae};
    plot::Series s{"per-bin MAE", {}, {}, {40, 120, 200}, false};
    for (const auto& p : c.points) {
      s.x.push_back(p.center);
      s.y.push_back(p.mae);
    }
    ch.series.push_back(s);
    plot::save(ch, dir / ("mae_by_" + name + ".png"));
  }
}

}  // namespace rlface::evaluate
