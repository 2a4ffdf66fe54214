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
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rlface/core/error.hpp"

namespace rlface::evaluate {

// One validation prediction with the covariates used for error analysis.
struct EvalItem {
  std::string person_id;
  double actual = 0;     // true RL in years
  double predicted = 0;  // user-facing (clamped) prediction
  double rl = 0;
  double age_at_image = 0;
  double age_at_death = 0;
  double face_width = 0;  // crop side in source pixels

  double error() const { return actual - predicted; }
};

enum class Covariate { rl, age_at_image, age_at_death, face_width };

inline constexpr Covariate kAllCovariates[] = {Covariate::rl, Covariate::age_at_image, Covariate::age_at_death,
                                               Covariate::face_width};

inline const char* to_string(Covariate c) {
  switch (c) {
    case Covariate::rl: return "rl";
    case Covariate::age_at_image: return "age_at_image";
    case Covariate::age_at_death: return "age_at_death";
    case Covariate::face_width: return "face_width";
  }
  return "?";
}

inline Covariate parse_covariate(const std::string& s) {
  for (auto c : kAllCovariates)
    if (s == to_string(c)) return c;
  throw ConfigError("unknown covariate '" + s + "' (expected rl, age_at_image, age_at_death or face_width)");
}

inline double covariate_value(const EvalItem& it, Covariate c) {
  switch (c) {
    case Covariate::rl: return it.rl;
    case Covariate::age_at_image: return it.age_at_image;
    case Covariate::age_at_death: return it.age_at_death;
    case Covariate::face_width: return it.face_width;
  }
  return 0;
}

inline double default_bin_width(Covariate c) { return c == Covariate::face_width ? 50.0 : 5.0; }

inline double mae(std::span<const double> preds, std::span<const double> targets) {
  if (preds.size() != targets.size())
    throw StructuralError("mae: " + std::to_string(preds.size()) + " predictions vs " + std::to_string(targets.size()) +
                          " targets");
  if (preds.empty()) throw StructuralError("mae: empty input");
  double s = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += std::abs(preds[i] - targets[i]);
  return s / static_cast<double>(preds.size());
}

struct HistogramBin {
  double center = 0;
  std::size_t count = 0;

  friend bool operator==(const HistogramBin&, const HistogramBin&) = default;
};

// Signed errors (true - pred) counted in bins of `width` centred on multiples
// of `width`, so an exact zero error falls in the bin centred at 0. Bins span
// the observed range contiguously; interior empty bins are kept.
inline std::vector<HistogramBin> error_histogram(std::span<const double> preds, std::span<const double> targets,
                                                 double width) {
  if (preds.size() != targets.size()) throw StructuralError("error_histogram: length mismatch");
  if (preds.empty()) throw StructuralError("error_histogram: empty input");
  if (!(width > 0)) throw ConfigError("histogram bin width must be positive");
  std::map<long long, std::size_t> counts;
  for (std::size_t i = 0; i < preds.size(); ++i)
    ++counts[static_cast<long long>(std::floor((targets[i] - preds[i]) / width + 0.5))];
  std::vector<HistogramBin> out;
  for (long long k = counts.begin()->first; k <= counts.rbegin()->first; ++k) {
    auto it = counts.find(k);
    out.push_back({static_cast<double>(k) * width, it == counts.end() ? 0 : it->second});
  }
  return out;
}

struct CurvePoint {
  double lower = 0, upper = 0;
  double center = 0;
  double mae = 0;
  std::size_t n = 0;

  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

struct CovariateCurve {
  Covariate covariate = Covariate::rl;
  double bin_width = 5;
  double overall_mae = 0;  // reference line
  std::vector<CurvePoint> points;
};

// Per-bin MAE over [k*width, (k+1)*width). Empty bins are omitted.
inline CovariateCurve mae_by_covariate(std::span<const EvalItem> items, Covariate c, double width) {
  if (items.empty()) throw StructuralError("mae_by_covariate: empty input");
  if (!(width > 0)) throw ConfigError("covariate bin width must be positive");
  struct Acc {
    double sum = 0;
    std::size_t n = 0;
  };
  std::map<long long, Acc> bins;
  double total = 0;
  for (const auto& it : items) {
    const double v = covariate_value(it, c);
    if (!std::isfinite(v)) throw StructuralError(it.person_id + ": covariate " + to_string(c) + " missing");
    auto& a = bins[static_cast<long long>(std::floor(v / width))];
    a.sum += std::abs(it.error());
    ++a.n;
    total += std::abs(it.error());
  }
  CovariateCurve out{c, width, total / static_cast<double>(items.size()), {}};
  for (const auto& [k, a] : bins) {
    const double lo = static_cast<double>(k) * width;
    out.points.push_back({lo, lo + width, lo + width / 2, a.sum / static_cast<double>(a.n), a.n});
  }
  return out;
}

inline CovariateCurve mae_by_covariate(std::span<const EvalItem> items, Covariate c) {
  return mae_by_covariate(items, c, default_bin_width(c));
}

struct Extremes {
  std::vector<std::string> best, worst;
};

// Top-k ids by |error| ascending (best) and descending (worst); ties go to
// the smaller person_id in both lists.
inline Extremes select_extremes(std::span<const EvalItem> items, std::size_t k) {
  if (k > items.size()) throw ConfigError("select_extremes: k exceeds the number of records");
  std::vector<std::size_t> idx(items.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  auto key = [&](std::size_t i) { return std::abs(items[i].error()); };
  Extremes out;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (key(a) != key(b)) return key(a) < key(b);
    return items[a].person_id < items[b].person_id;
  });
  for (std::size_t i = 0; i < k; ++i) out.best.push_back(items[idx[i]].person_id);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (key(a) != key(b)) return key(a) > key(b);
    return items[a].person_id < items[b].person_id;
  });
  for (std::size_t i = 0; i < k; ++i) out.worst.push_back(items[idx[i]].person_id);
  return out;
}

struct EvaluationReport {
  double overall_mae = 0;
  std::vector<double> signed_errors;
  std::vector<CovariateCurve> mae_by;
  std::vector<HistogramBin> histogram;
  double histogram_width = 1;
  std::vector<std::string> best_examples, worst_examples;
  std::size_t n = 0;
};

struct EvalConfig {
  std::map<Covariate, double> bin_widths;  // defaults from default_bin_width
  double histogram_width = 1.0;
  std::size_t top_k = 10;
};

inline EvaluationReport build_report(std::span<const EvalItem> items, const EvalConfig& cfg = {}) {
  std::vector<double> preds, targets;
  for (const auto& it : items) {
    preds.push_back(it.predicted);
    targets.push_back(it.actual);
  }
  EvaluationReport r;
  r.n = items.size();
  r.overall_mae = mae(preds, targets);
  for (const auto& it : items) r.signed_errors.push_back(it.error());
  for (auto c : kAllCovariates) {
    auto w = cfg.bin_widths.find(c);
    r.mae_by.push_back(mae_by_covariate(items, c, w == cfg.bin_widths.end() ? default_bin_width(c) : w->second));
  }
  r.histogram_width = cfg.histogram_width;
  r.histogram = error_histogram(preds, targets, cfg.histogram_width);
  const auto ex = select_extremes(items, std::min(cfg.top_k, items.size()));
  r.best_examples = ex.best;
  r.worst_examples = ex.worst;
  return r;
}

// Throws InvariantViolation when the report disagrees with itself.
inline void check_invariants(const EvaluationReport& r, double tol = 1e-9) {
  if (r.signed_errors.size() != r.n) throw InvariantViolation("signed_errors size differs from n");
  double s = 0;
  for (double e : r.signed_errors) s += std::abs(e);
  if (std::abs(s / static_cast<double>(r.n) - r.overall_mae) > tol)
    throw InvariantViolation("overall_mae differs from mean |signed_errors|");
  for (const auto& curve : r.mae_by) {
    std::size_t n = 0;
    double weighted = 0;
    for (const auto& p : curve.points) {
      n += p.n;
      weighted += p.mae * static_cast<double>(p.n);
    }
    if (n != r.n) throw InvariantViolation(std::string("bin counts for ") + to_string(curve.covariate) + " do not sum to n");
    if (std::abs(weighted / static_cast<double>(n) - r.overall_mae) > tol)
      throw InvariantViolation(std::string("weighted per-bin MAE for ") + to_string(curve.covariate) +
                               " does not reconstruct overall MAE");
  }
  std::size_t h = 0;
  for (const auto& b : r.histogram) h += b.count;
  if (h != r.n) throw InvariantViolation("histogram counts do not sum to n");
}

inline void to_json(nlohmann::json& j, const EvaluationReport& r) {
  nlohmann::json by = nlohmann::json::object();
  for (const auto& c : r.mae_by) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : c.points) pts.push_back({{"center", p.center}, {"lower", p.lower}, {"upper", p.upper}, {"mae", p.mae}, {"n", p.n}});
    by[to_string(c.covariate)] = {{"bin_width", c.bin_width}, {"overall_mae", c.overall_mae}, {"bins", pts}};
  }
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& b : r.histogram) hist.push_back({{"center", b.center}, {"count", b.count}});
  j = nlohmann::json{{"n", r.n},
                     {"overall_mae", r.overall_mae},
                     {"signed_errors", r.signed_errors},
                     {"mae_by", by},
                     {"error_histogram", {{"bin_width", r.histogram_width}, {"bins", hist}}},
                     {"best_examples", r.best_examples},
                     {"worst_examples", r.worst_examples}};
}

}  // namespace rlface::evaluate
