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
#include <map>

#include "rlface/apps/cohort.hpp"
#include "rlface/core/jsonl.hpp"
#include "rlface/core/rng.hpp"
#include "test_util.hpp"

using namespace rlface;
using namespace rlface::apps;

namespace {

labeling::LabeledRecord rec(std::string id, int birth, int image, int death) {
  labeling::LabeledRecord r;
  r.person_id = std::move(id);
  r.image_path = "images/" + r.person_id + ".jpg";
  r.birth_year = birth;
  r.image_year = image;
  r.death_year = death;
  r.rl_years = death - image;
  r.age_at_image = image - birth;
  r.age_at_death = death - birth;
  return r;
}

std::vector<labeling::LabeledRecord> random_cohort(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<labeling::LabeledRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    const int image = 2000 + static_cast<int>(rng.index(21));
    out.push_back(rec("Q" + std::to_string(9000 + i), 1920 + static_cast<int>(rng.index(30)), image, 2020));
  }
  return out;
}

}  // namespace

TEST(CohortLoss, ConstantShift) {
  const auto cohort = random_cohort(37, 1);
  for (double c : {0.0, 3.3, -2.5}) {
    const auto r = cohort_loss(cohort, {}, [&](const auto& x) { return x.rl_years + c; });
    EXPECT_NEAR(r.mean_loss, c, 1e-9);
    EXPECT_EQ(r.n, 37u);
    EXPECT_TRUE(r.drops.empty());
  }
  const auto exact = cohort_loss(cohort, {}, [](const auto& x) { return double(x.rl_years); });
  EXPECT_EQ(exact.mean_loss, 0.0);
}

TEST(CohortLoss, HandSummedFourPersons) {
  const std::vector<labeling::LabeledRecord> cohort = {
      rec("Q4", 1940, 2010, 2020), rec("Q1", 1935, 2015, 2020), rec("Q3", 1950, 2005, 2021), rec("Q2", 1930, 2019, 2020)};
  const std::map<std::string, double> pred = {{"Q1", 9.0}, {"Q2", 0.0}, {"Q3", 20.5}, {"Q4", 6.25}};
  const auto r = cohort_loss(cohort, {}, [&](const auto& x) { return pred.at(x.person_id); });
  // actual 5, 1, 16, 10; losses 4, -1, 4.5, -3.75
  EXPECT_NEAR(r.mean_actual, 32.0 / 4, 1e-9);
  EXPECT_NEAR(r.mean_predicted, 35.75 / 4, 1e-9);
  EXPECT_NEAR(r.mean_loss, 3.75 / 4, 1e-9);
  ASSERT_EQ(r.entries.size(), 4u);
  EXPECT_EQ(r.entries[0].person_id, "Q1");
  EXPECT_EQ(r.entries[3].person_id, "Q4");
  EXPECT_EQ(cohort_csv(r).substr(0, cohort_csv(r).find('\n')), "person_id,actual_rl,predicted_rl,loss");
}

TEST(CohortLoss, OrderInvariant) {
  auto cohort = random_cohort(50, 2);
  auto predict = [](const labeling::LabeledRecord& x) { return x.rl_years * 0.9 + (x.birth_year % 7) * 0.37; };
  const auto a = cohort_loss(cohort, {}, predict);
  Rng rng(5);
  for (int t = 0; t < 5; ++t) {
    rng.shuffle(std::span(cohort));
    const auto b = cohort_loss(cohort, {}, predict);
    EXPECT_EQ(nlohmann::json(a).dump(), nlohmann::json(b).dump());
  }
}

TEST(CohortLoss, OverlapWithModelDataIsError) {
  const auto cohort = random_cohort(10, 3);
  try {
    cohort_loss(cohort, {"Q9003", "Q9007", "Q1"}, [](const auto&) { return 1.0; });
    FAIL() << "expected StructuralError";
  } catch (const StructuralError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2 ids"), std::string::npos) << msg;
    EXPECT_NE(msg.find("Q9003"), std::string::npos) << msg;
  }
}

TEST(CohortLoss, OldImagesAndRejectionsAreDrops) {
  const std::vector<labeling::LabeledRecord> cohort = {rec("Q1", 1930, 1999, 2020), rec("Q2", 1930, 2000, 2020),
                                                       rec("Q3", 1930, 2010, 2020)};
  const auto r = cohort_loss(cohort, {}, [](const auto& x) {
    if (x.person_id == "Q3") throw Rejection("multiple faces");
    return 25.0;
  });
  EXPECT_EQ(r.n, 1u);
  EXPECT_EQ(r.mean_loss, 5.0);
  ASSERT_EQ(r.drops.size(), 2u);
  EXPECT_EQ(r.drops[0], (DropEntry{"Q1", "cohort", "image year before 2000"}));
  EXPECT_EQ(r.drops[1], (DropEntry{"Q3", "cohort", "multiple faces"}));
  EXPECT_THROW(cohort_loss({cohort[0]}, {}, [](const auto&) { return 0.0; }), StructuralError);
  EXPECT_EQ(cohort_loss(cohort, {}, [](const auto&) { return 0.0; }, CohortConfig{1990}).n, 3u);
}

TEST(CohortLoss, InvariantCheck) {
  CohortReport r;
  r.n = 0;
  r.mean_actual = 10, r.mean_predicted = 12, r.mean_loss = 2;
  EXPECT_NO_THROW(check_invariants(r));
  r.mean_loss = 2.1;
  EXPECT_THROW(check_invariants(r), InvariantViolation);
}

TEST(InterventionGain, Examples) {
  const std::map<std::string, double> pred = {{"a.jpg", 20}, {"b.jpg", 22}, {"c.jpg", 31.5}};
  auto predict = [&](const std::string& p) { return pred.at(p); };
  auto g = intervention_gain({"x", "a.jpg", "b.jpg", 2010, 2013}, predict);
  EXPECT_EQ(g.elapsed, 3);
  EXPECT_DOUBLE_EQ(g.gain, 5.0);
  g = intervention_gain({"same", "c.jpg", "c.jpg", 2010, 2010}, predict);
  EXPECT_EQ(g.gain, 0.0);
  g = intervention_gain({"d", "a.jpg", "c.jpg", 2015, 2015}, predict);
  EXPECT_DOUBLE_EQ(g.gain, 11.5);
  EXPECT_THROW(intervention_gain({"neg", "a.jpg", "b.jpg", 2014, 2013}, predict), StructuralError);
}

TEST(InterventionGain, IdenticalImageIsExactlyZero) {
  Rng rng(9);
  for (int i = 0; i < 100; ++i) {
    const double v = rng.uniform(0, 80);
    const auto g = intervention_gain({"p", "img", "img", 2000, 2000}, [&](const std::string&) { return v; });
    EXPECT_EQ(g.gain, 0.0);
  }
}

TEST(InterventionGain, ErrorNamesFailingImage) {
  auto predict = [](const std::string& p) -> double {
    if (p == "after.jpg") throw Rejection("no face detected");
    return 30;
  };
  try {
    intervention_gain({"Jane", "before.jpg", "after.jpg", 2010, 2012}, predict);
    FAIL() << "expected Rejection";
  } catch (const Rejection& e) {
    EXPECT_EQ(e.reason(), "Jane: after image after.jpg failed face processing: no face detected");
  }
}

TEST(ReadPairs, ParsesAndResolvesPaths) {
  const auto dir = testutil::temp_dir("pairs");
  write_file(dir / "pairs.csv",
             "name,before_image,before_year,after_image,after_year\r\n"
             "# comment\n"
             "A,a0.jpg,2010,/abs/a1.jpg,2012\n\n"
             "B,sub/b0.jpg,1999,sub/b1.jpg,2004\n");
  const auto pairs = read_pairs(dir / "pairs.csv");
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0].before_image, (dir / "a0.jpg").string());
  EXPECT_EQ(pairs[0].after_image, "/abs/a1.jpg");
  EXPECT_EQ(pairs[1].elapsed(), 5);
  EXPECT_EQ(pairs[1].after_image, (dir / "sub/b1.jpg").string());

  write_file(dir / "bad.csv", "A,a.jpg,20x0,b.jpg\n");
  EXPECT_THROW(read_pairs(dir / "bad.csv"), ParseError);
  write_file(dir / "bad2.csv", "A,a.jpg,year,b.jpg,2000\n");
  EXPECT_THROW(read_pairs(dir / "bad2.csv"), ParseError);
  EXPECT_THROW(read_pairs(dir / "missing.csv"), MissingArtifact);
}

TEST(GainsCsv, Format) {
  EXPECT_EQ(gains_csv({{"A", 20, 22, 3, 5}}), "name,before_rl,after_rl,elapsed,gain\nA,20,22,3,5\n");
}
