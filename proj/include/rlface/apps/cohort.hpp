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
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rlface/core/drop.hpp"
#include "rlface/core/error.hpp"
#include "rlface/labeling/labeling.hpp"

namespace rlface::apps {

// Predicted RL for a cohort record. May throw Rejection when the image
// fails face processing; such records are reported as drops.
using RecordPredictor = std::function<double(const labeling::LabeledRecord&)>;

struct CohortConfig {
  int min_image_year = 2000;
};

struct CohortEntry {
  std::string person_id;
  double actual = 0;
  double predicted = 0;
};

struct CohortReport {
  std::size_t n = 0;
  std::vector<CohortEntry> entries;  // sorted by person_id
  double mean_actual = 0, mean_predicted = 0;
  double mean_loss = 0;  // mean(predicted - actual), not clamped per person
  std::vector<DropEntry> drops;
};

inline void check_invariants(const CohortReport& r, double tol = 1e-9) {
  if (r.entries.size() != r.n) throw InvariantViolation("cohort n differs from entry count");
  if (std::abs(r.mean_loss - (r.mean_predicted - r.mean_actual)) > tol)
    throw InvariantViolation("mean_loss differs from mean(predicted) - mean(actual)");
}

// Records sharing a person_id with the training/validation manifest are a
// hard error; the cohort must be disjoint from model data.
inline CohortReport cohort_loss(std::vector<labeling::LabeledRecord> cohort, const std::set<std::string>& model_ids,
                                const RecordPredictor& predict, const CohortConfig& cfg = {}) {
  std::vector<std::string> overlap;
  for (const auto& r : cohort)
    if (model_ids.count(r.person_id)) overlap.push_back(r.person_id);
  if (!overlap.empty()) {
    std::string ids;
    for (std::size_t i = 0; i < overlap.size() && i < 5; ++i) ids += (i ? ", " : "") + overlap[i];
    throw StructuralError("cohort overlaps the training/validation manifest (" + std::to_string(overlap.size()) +
                          " ids, e.g. " + ids + ")");
  }
  // Sorting first makes the sums, and hence the report, order invariant.
  std::sort(cohort.begin(), cohort.end(), [](const auto& a, const auto& b) { return a.person_id < b.person_id; });

  CohortReport out;
  double sa = 0, sp = 0, sl = 0;
  for (const auto& r : cohort) {
    if (r.image_year < cfg.min_image_year) {
      out.drops.push_back({r.person_id, "cohort", "image year before " + std::to_string(cfg.min_image_year)});
      continue;
    }
    double pred;
    try {
      pred = predict(r);
    } catch (const Rejection& e) {
      out.drops.push_back({r.person_id, "cohort", e.reason()});
      continue;
    }
    out.entries.push_back({r.person_id, static_cast<double>(r.rl_years), pred});
    sa += r.rl_years;
    sp += pred;
    sl += pred - r.rl_years;
  }
  out.n = out.entries.size();
  if (out.n == 0) throw StructuralError("cohort is empty after filtering");
  const double n = static_cast<double>(out.n);
  out.mean_actual = sa / n;
  out.mean_predicted = sp / n;
  out.mean_loss = sl / n;
  check_invariants(out);
  return out;
}

inline void to_json(nlohmann::json& j, const CohortReport& r) {
  nlohmann::json e = nlohmann::json::array();
  for (const auto& x : r.entries) e.push_back({{"person_id", x.person_id}, {"actual", x.actual}, {"predicted", x.predicted}});
  j = nlohmann::json{{"n", r.n},
                     {"mean_actual", r.mean_actual},
                     {"mean_predicted", r.mean_predicted},
                     {"mean_loss", r.mean_loss},
                     {"entries", e},
                     {"drops", r.drops}};
}

inline std::string cohort_csv(const CohortReport& r) {
  std::ostringstream s;
  s.precision(17);
  s << "person_id,actual_rl,predicted_rl,loss\n";
  for (const auto& e : r.entries) s << e.person_id << ',' << e.actual << ',' << e.predicted << ',' << e.predicted - e.actual << '\n';
  return s.str();
}

// Before/after image pair of one person.
struct InterventionPair {
  std::string name;
  std::string before_image, after_image;
  int before_year = 0, after_year = 0;

  int elapsed() const { return after_year - before_year; }
};

struct GainResult {
  std::string name;
  double before = 0, after = 0;
  int elapsed = 0;
  double gain = 0;
};

// Predicted RL for a photograph path; throws Rejection when the face gate
// fails.
using ImagePredictor = std::function<double(const std::string& image)>;

// gain = predict(after) - (predict(before) - elapsed)
inline GainResult intervention_gain(const InterventionPair& p, const ImagePredictor& predict) {
  if (p.elapsed() < 0)
    throw StructuralError(p.name + ": after year " + std::to_string(p.after_year) + " precedes before year " +
                          std::to_string(p.before_year));
  auto run = [&](const std::string& which, const std::string& image) {
    try {
      return predict(image);
    } catch (const Rejection& e) {
      throw Rejection(p.name + ": " + which + " image " + image + " failed face processing: " + e.reason());
    }
  };
  GainResult g;
  g.name = p.name;
  g.before = run("before", p.before_image);
  g.after = run("after", p.after_image);
  g.elapsed = p.elapsed();
  g.gain = g.after - (g.before - g.elapsed);
  return g;
}

// Pairs file: CSV with header name,before_image,before_year,after_image,after_year.
// Image paths are resolved against the file's directory when relative.
inline std::vector<InterventionPair> read_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifact("pairs file not found: " + path.string());
  std::vector<InterventionPair> out;
  std::string line;
  int lineno = 0;
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path q(p);
    return (q.is_absolute() ? q : path.parent_path() / q).string();
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (lineno == 1 && !f.empty() && f[0] == "name") continue;
    if (f.size() != 5) throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected 5 fields", line);
    InterventionPair p;
    p.name = f[0];
    p.before_image = resolve(f[1]);
    p.after_image = resolve(f[3]);
    try {
      p.before_year = std::stoi(f[2]);
      p.after_year = std::stoi(f[4]);
    } catch (const std::exception&) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad year", line);
    }
    out.push_back(std::move(p));
  }
  return out;
}

inline std::string gains_csv(const std::vector<GainResult>& g) {
  std::ostringstream s;
  s.precision(17);
  s << "name,before_rl,after_rl,elapsed,gain\n";
  for (const auto& r : g) s << r.name << ',' << r.before << ',' << r.after << ',' << r.elapsed << ',' << r.gain << '\n';
  return s.str();
}

}  // namespace rlface::apps
