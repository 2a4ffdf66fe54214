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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rlface/core/jsonl.hpp"
#include "rlface/core/rng.hpp"
#include "rlface/evaluate/report.hpp"
#include "test_util.hpp"

using namespace rlface;
using namespace rlface::evaluate;

namespace {

std::vector<EvalItem> random_items(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<EvalItem> out;
  for (std::size_t i = 0; i < n; ++i) {
    EvalItem it;
    it.person_id = "Q" + std::to_string(5000 + i);
    it.age_at_image = 10 + static_cast<double>(rng.index(60));
    it.rl = static_cast<double>(rng.index(80));
    it.age_at_death = it.age_at_image + it.rl;
    it.actual = it.rl;
    it.predicted = std::max(0.0, it.actual + 12 * rng.normal());
    it.face_width = 64 + static_cast<double>(rng.index(400));
    out.push_back(it);
  }
  return out;
}

}  // namespace

TEST(Mae, TrivialCases) {
  const std::vector<double> t = {1, 5, 9, 30};
  EXPECT_EQ(mae(t, t), 0.0);
  std::vector<double> p = t;
  for (auto& v : p) v += 3;
  EXPECT_DOUBLE_EQ(mae(p, t), 3.0);
  EXPECT_THROW(mae(std::vector<double>{1, 2}, std::vector<double>{1}), StructuralError);
  EXPECT_THROW(mae(std::vector<double>{}, std::vector<double>{}), StructuralError);
}

TEST(Mae, MatchesLoopOracle) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> p(1 + rng.index(300)), t(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = rng.uniform(-10, 90);
      t[i] = rng.uniform(0, 80);
    }
    long double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::fabs(static_cast<long double>(t[i]) - p[i]);
    EXPECT_NEAR(mae(p, t), static_cast<double>(s / p.size()), 1e-12);
  }
}

TEST(ErrorHistogram, AllZeroIsOneSpike) {
  const std::vector<double> v = {3, 4, 5};
  const auto h = error_histogram(v, v, 1.0);
  ASSERT_EQ(h.size(), 1u);
  EXPECT_EQ(h[0], (HistogramBin{0.0, 3}));
}

TEST(ErrorHistogram, SymmetricErrors) {
  const std::vector<double> t = {10, 10}, p = {12, 8};  // errors -2, +2
  const auto h = error_histogram(p, t, 1.0);
  ASSERT_EQ(h.size(), 5u);
  for (std::size_t i = 0; i < h.size(); ++i) {
    EXPECT_EQ(h[i].center, -h[h.size() - 1 - i].center);
    EXPECT_EQ(h[i].count, h[h.size() - 1 - i].count);
  }
  EXPECT_EQ(h[0], (HistogramBin{-2.0, 1}));
  EXPECT_EQ(h[2], (HistogramBin{0.0, 0}));  // interior empty bins are kept
}

// Each bin centered at c counts errors in [c - w/2, c + w/2).
TEST(ErrorHistogram, MatchesCountingOracle) {
  const auto items = random_items(400, 8);
  std::vector<double> p, t;
  for (const auto& it : items) {
    p.push_back(it.predicted);
    t.push_back(it.actual);
  }
  for (double w : {1.0, 2.5, 5.0}) {
    const auto h = error_histogram(p, t, w);
    std::size_t total = 0;
    for (const auto& b : h) {
      std::size_t n = 0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double e = t[i] - p[i];
        n += e >= b.center - w / 2 && e < b.center + w / 2;
      }
      EXPECT_EQ(b.count, n) << "w " << w << " center " << b.center;
      total += b.count;
    }
    EXPECT_EQ(total, p.size());
    EXPECT_GT(h.front().count, 0u);
    EXPECT_GT(h.back().count, 0u);
  }
  EXPECT_THROW(error_histogram(p, t, 0.0), ConfigError);
}

TEST(MaeByCovariate, SingleBinEqualsOverall) {
  auto items = random_items(50, 1);
  for (auto& it : items) it.face_width = 100;
  const auto c = mae_by_covariate(items, Covariate::face_width);
  ASSERT_EQ(c.points.size(), 1u);
  EXPECT_NEAR(c.points[0].mae, c.overall_mae, 1e-12);
  EXPECT_EQ(c.points[0].n, 50u);
  EXPECT_EQ(c.points[0].lower, 100.0);
  EXPECT_EQ(c.points[0].upper, 150.0);
}

TEST(MaeByCovariate, EmptyBinsOmitted) {
  std::vector<EvalItem> items(3);
  items[0].rl = 1;
  items[1].rl = 3;
  items[2].rl = 42;
  items[0].actual = 1, items[0].predicted = 2;
  items[1].actual = 3, items[1].predicted = 6;
  items[2].actual = 42, items[2].predicted = 30;
  const auto c = mae_by_covariate(items, Covariate::rl);
  ASSERT_EQ(c.points.size(), 2u);
  EXPECT_EQ(c.points[0], (CurvePoint{0, 5, 2.5, 2.0, 2}));
  EXPECT_EQ(c.points[1], (CurvePoint{40, 45, 42.5, 12.0, 1}));
  EXPECT_DOUBLE_EQ(c.overall_mae, 16.0 / 3);
}

// Errors constructed to grow with rl beyond 40 give a rising tail.
TEST(MaeByCovariate, RisingTailFixture) {
  std::vector<EvalItem> items;
  for (int rl = 0; rl < 80; ++rl) {
    EvalItem it;
    it.person_id = "Q" + std::to_string(rl);
    it.rl = it.actual = rl;
    const double err = rl < 40 ? 2.0 : 2.0 + (rl - 40) * 0.5;
    it.predicted = rl + (rl % 2 ? err : -err);
    items.push_back(it);
  }
  const auto c = mae_by_covariate(items, Covariate::rl);
  ASSERT_EQ(c.points.size(), 16u);
  for (std::size_t i = 9; i < c.points.size(); ++i) EXPECT_GT(c.points[i].mae, c.points[i - 1].mae) << i;
}

TEST(MaeByCovariate, UnknownCovariateRejected) {
  EXPECT_THROW(parse_covariate("height"), ConfigError);
  for (auto c : kAllCovariates) EXPECT_EQ(parse_covariate(to_string(c)), c);
}

TEST(SelectExtremes, Examples) {
  auto items = random_items(20, 2);
  items[7].predicted = items[7].actual;
  const auto all = select_extremes(items, items.size());
  EXPECT_EQ(all.best[0], items[7].person_id);
  auto b = all.best, w = all.worst;
  std::sort(b.begin(), b.end());
  std::sort(w.begin(), w.end());
  EXPECT_EQ(b, w);
  EXPECT_EQ(b.size(), items.size());
  EXPECT_THROW(select_extremes(items, 21), ConfigError);
}

TEST(SelectExtremes, MatchesSortOracleWithTies) {
  auto items = random_items(60, 3);
  // Integer errors so ties are common.
  for (auto& it : items) it.predicted = std::round(it.predicted / 5) * 5;
  const auto ex = select_extremes(items, 10);
  std::vector<std::pair<double, std::string>> asc, desc;
  for (const auto& it : items) {
    asc.push_back({std::abs(it.error()), it.person_id});
    desc.push_back({-std::abs(it.error()), it.person_id});
  }
  std::sort(asc.begin(), asc.end());
  std::sort(desc.begin(), desc.end());
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(ex.best[i], asc[i].second);
    EXPECT_EQ(ex.worst[i], desc[i].second);
  }
}

TEST(Report, WeightedBinsReconstructOverall) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto items = random_items(300, seed);
    const auto r = build_report(items);
    ASSERT_EQ(r.mae_by.size(), 4u);
    for (const auto& c : r.mae_by) {
      double s = 0;
      std::size_t n = 0;
      for (const auto& p : c.points) {
        s += p.mae * static_cast<double>(p.n);
        n += p.n;
      }
      EXPECT_EQ(n, items.size());
      EXPECT_NEAR(s / static_cast<double>(n), r.overall_mae, 1e-9) << to_string(c.covariate);
    }
    EXPECT_NO_THROW(check_invariants(r));
  }
}

TEST(Report, TamperedReportRejected) {
  const auto items = random_items(40, 5);
  auto r = build_report(items);
  auto bad = r;
  bad.overall_mae += 1e-6;
  EXPECT_THROW(check_invariants(bad), InvariantViolation);
  bad = r;
  bad.mae_by[2].points[0].n += 1;
  EXPECT_THROW(check_invariants(bad), InvariantViolation);
  bad = r;
  bad.histogram.back().count += 1;
  EXPECT_THROW(check_invariants(bad), InvariantViolation);
  const auto dir = testutil::temp_dir("tampered_report");
  EXPECT_THROW(write_report(dir / "out", bad, items), InvariantViolation);
  EXPECT_FALSE(std::filesystem::exists(dir / "out" / "report.json"));
}

TEST(Report, WritesArtifacts) {
  const auto items = random_items(120, 6);
  EvalConfig cfg;
  cfg.top_k = 5;
  cfg.bin_widths[Covariate::face_width] = 100;
  const auto r = build_report(items, cfg);
  const auto dir = testutil::temp_dir("report_artifacts");
  write_report(dir, r, items);
  for (const char* f : {"report.json", "predictions.csv", "error_histogram.csv", "error_histogram.png", "extremes.csv",
                        "mae_by_rl.csv", "mae_by_rl.png", "mae_by_age_at_image.png", "mae_by_age_at_death.csv",
                        "mae_by_face_width.png"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  const auto j = nlohmann::json::parse(read_file(dir / "report.json"));
  EXPECT_EQ(j["n"], 120);
  EXPECT_EQ(j["mae_by"]["face_width"]["bin_width"], 100.0);
  EXPECT_EQ(j["best_examples"].size(), 5u);
  EXPECT_DOUBLE_EQ(j["overall_mae"].get<double>(), r.overall_mae);
  const auto png = cv::imread((dir / "mae_by_rl.png").string());
  EXPECT_EQ(png.cols, 640);
  EXPECT_EQ(png.rows, 420);
  const std::string csv = read_file(dir / "predictions.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 121);
  const std::string ex = read_file(dir / "extremes.csv");
  EXPECT_EQ(ex.substr(0, ex.find('\n')), "kind,rank,person_id,actual,predicted,abs_error");
  EXPECT_EQ(std::count(ex.begin(), ex.end(), '\n'), 11);
}

TEST(PredictFaces, UsesValidationFacesOnly) {
  const auto dir = testutil::temp_dir("predict_faces");
  std::vector<facepipe::LabeledFace> faces(3);
  for (int i = 0; i < 3; ++i) {
    faces[i].person_id = "Q" + std::to_string(i);
    faces[i].crop_path = "c" + std::to_string(i) + ".png";
    faces[i].rl_years = 10 * i;
    faces[i].side_px = 100 + i;
    faces[i].split = i == 1 ? "train" : "val";
    cv::imwrite((dir / faces[i].crop_path).string(), testutil::toy_crop(0.1 * i, i, 64));
  }
  int calls = 0;
  const auto items = predict_faces(faces, dir, [&](const cv::Mat& m) {
    EXPECT_EQ(m.rows, 64);
    return static_cast<double>(++calls);
  });
  ASSERT_EQ(items.size(), 2u);
  EXPECT_EQ(items[1].person_id, "Q2");
  EXPECT_EQ(items[1].actual, 20.0);
  EXPECT_EQ(items[1].predicted, 2.0);
  EXPECT_EQ(items[1].face_width, 102.0);
  for (auto& f : faces) f.split = "train";
  EXPECT_THROW(predict_faces(faces, dir, [](const cv::Mat&) { return 0.0; }), StructuralError);
}
