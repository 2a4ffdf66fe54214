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

// Acceptance checks, one line per criterion. Exit status is nonzero when a
// criterion fails, except criterion 7 when the pretrained backbone asset is
// absent: that line reports FAIL (unattainable) and does not affect the exit
// status. Pass --random-init to run criterion 7 with a He-initialised
// backbone instead; the result is printed for reference only.

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "rlface/apps/cohort.hpp"
#include "rlface/core/jsonl.hpp"
#include "rlface/core/rng.hpp"
#include "rlface/datamod/sampling.hpp"
#include "rlface/evaluate/metrics.hpp"
#include "rlface/facepipe/align.hpp"
#include "rlface/ingest/caption.hpp"
#include "rlface/labeling/labeling.hpp"
#include "rlface/model/heads.hpp"
#include "rlface/model/network.hpp"
#include "rlface/model/trainer.hpp"
#include "test_util.hpp"

using namespace rlface;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = RLFACE_FIXTURES;
const fs::path kAssets = fs::path(RLFACE_SOURCE_DIR) / "assets";

struct Outcome {
  bool pass = false;
  std::string detail;
  bool unattainable = false;
};

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

// 1. Eye placement at (0.36 s, 0.43 s) and (0.64 s, 0.43 s) within 1 px.
Outcome geometry() {
  Rng rng(1);
  std::vector<double> angles = {0, 17, -35, 90, 180};
  for (int i = 0; i < 15; ++i) angles.push_back(rng.uniform(-180, 180));
  double worst = 0;
  for (double angle : angles) {
    const double rad = angle * CV_PI / 180.0, d = rng.uniform(30, 50);
    const facepipe::Point l{rng.uniform(140, 180), rng.uniform(140, 180)};
    const facepipe::Point r{l.x + d * std::cos(rad), l.y + d * std::sin(rad)};
    const auto a = facepipe::align_and_crop(testutil::eye_blob_image(340, 340, l, r),
                                            testutil::synthetic_detection(l, r));
    const double s = a.crop.side_px;
    const auto [cl, cr] = testutil::blob_centroids(a.crop.image);
    for (double e : {cl.x - 0.36 * s, cl.y - 0.43 * s, cr.x - 0.64 * s, cr.y - 0.43 * s}) worst = std::max(worst, std::abs(e));
  }
  return {worst <= 1.0, "max eye offset " + fmt(worst) + " px over " + std::to_string(angles.size()) + " rotations (tol 1 px)"};
}

// 2. Worked example and the label identity on 1000 random records.
Outcome label_identity() {
  ingest::PersonRecord ex;
  ex.person_id = "Q1";
  ex.birth_year = 1925;
  ex.death_year = 2020;
  ex.image_year = 1945;
  ex.image_year_source = ingest::ImageYearSource::graph_point_in_time;
  const int rl = std::get<labeling::LabeledRecord>(labeling::derive_label(ex)).rl_years;
  Rng rng(2);
  int checked = 0, broken = 0;
  for (int i = 0; i < 1000; ++i) {
    ingest::PersonRecord r = ex;
    r.person_id = "Q" + std::to_string(i);
    r.birth_year = 1900 + static_cast<int>(rng.index(70));
    r.death_year = std::max(r.birth_year + static_cast<int>(rng.index(100)), 1990);
    r.image_year = r.birth_year + static_cast<int>(rng.index(static_cast<std::uint64_t>(r.death_year - r.birth_year + 1)));
    const auto out = labeling::derive_label(r);
    if (const auto* l = std::get_if<labeling::LabeledRecord>(&out)) {
      ++checked;
      broken += l->rl_years + l->age_at_image != l->age_at_death;
    }
  }
  return {rl == 75 && broken == 0 && checked > 500,
          "worked example RL " + std::to_string(rl) + " (want 75); identity broken on " + std::to_string(broken) + " of " +
              std::to_string(checked) + " labelled records"};
}

// 3. Caption corpus exact match.
Outcome parsing() {
  const auto corpus = nlohmann::json::parse(read_file(kFixtures / "captions" / "corpus.json"));
  int ok = 0;
  for (const auto& c : corpus) {
    const auto p = ingest::parse_caption_year(c["caption"].get<std::string>());
    const std::optional<int> want = c["year"].is_null() ? std::nullopt : std::optional<int>(c["year"].get<int>());
    ok += p.extracted_year == want && p.match_count == c["matches"].get<int>();
  }
  return {ok == static_cast<int>(corpus.size()) && corpus.size() == 50,
          std::to_string(ok) + "/" + std::to_string(corpus.size()) + " captions exact"};
}

// 4. Oversampling balance over 200 random bin layouts.
Outcome balancing() {
  Rng rng(4);
  int bad = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> rl(1 + rng.index(150));
    for (auto& v : rl) v = static_cast<int>(rng.index(rng.bernoulli(0.5) ? 100 : 25));
    const auto bins = datamod::indices_by_bin(rl);
    std::size_t largest = 0;
    for (const auto& b : bins) largest = std::max(largest, b.size());
    const auto out = datamod::oversample_train(bins, static_cast<std::uint64_t>(trial));
    std::vector<std::size_t> per_bin(datamod::BinScheme::kBins, 0);
    for (auto i : out) ++per_bin[static_cast<std::size_t>(datamod::assign_bin(rl[i]))];
    bool ok = out == datamod::oversample_train(bins, static_cast<std::uint64_t>(trial));
    for (std::size_t b = 0; b < bins.size(); ++b) ok = ok && per_bin[b] == (bins[b].empty() ? 0 : largest);
    bad += !ok;
  }
  return {bad == 0, std::to_string(200 - bad) + "/200 trials balanced and reproducible"};
}

// 5. Expected value, Huber closed form and gradient.
Outcome heads_and_loss() {
  Rng rng(5);
  double ev_err = 0;
  for (int t = 0; t < 50; ++t) {
    model::PredictionDistribution d;
    double s = 0;
    for (int i = 0; i < model::kNumLabels; ++i) s += d.probs.emplace_back(rng.uniform());
    for (auto& p : d.probs) p /= s;
    long double oracle = 0;
    for (int i = 0; i < model::kNumLabels; ++i) oracle += static_cast<long double>(i) * d.probs[static_cast<std::size_t>(i)];
    ev_err = std::max(ev_err, std::abs(model::head_expected_value(d) - static_cast<double>(oracle)));
  }
  double closed_err = 0, grad_rel = 0;
  for (int t = 0; t < 200; ++t) {
    const double delta = rng.uniform(0.2, 5), target = rng.uniform(0, 80), e = rng.uniform(-4, 4) * delta;
    if (std::abs(std::abs(e) - delta) < 1e-3 * delta) continue;
    const double want = std::abs(e) <= delta ? 0.5 * e * e : delta * (std::abs(e) - 0.5 * delta);
    closed_err = std::max(closed_err, std::abs(model::huber_loss(target + e, target, delta) - want));
    const double h = 1e-6 * delta;
    const double fd = (model::huber_loss(target + e + h, target, delta) - model::huber_loss(target + e - h, target, delta)) / (2 * h);
    grad_rel = std::max(grad_rel, std::abs(model::huber_grad(target + e, target, delta) - fd) / std::max(std::abs(fd), 1e-12));
  }
  return {ev_err <= 1e-9 && closed_err <= 1e-6 && grad_rel <= 1e-4,
          "expected-value err " + fmt(ev_err) + " (tol 1e-9), Huber err " + fmt(closed_err) +
              " (tol 1e-6), gradient rel err " + fmt(grad_rel) + " (tol 1e-4)"};
}

// 6. Stage 1 leaves the backbone bitwise unchanged; stage 2 changes exactly
// the last two convolutions and the head.
Outcome freezing() {
  const auto dir = testutil::temp_dir("acceptance_freezing");
  const auto train = testutil::write_toy_set(dir / "train", 24, 1);
  const auto val = testutil::write_toy_set(dir / "val", 8, 2);
  model::ModelConfig cfg;
  cfg.backbone = model::Backbone::stub;
  cfg.fc_sizes = {64, 32};
  cfg.allow_random_init = true;
  cfg.batch_size = 8;
  cfg.stages = {{2, 1e-3, 0}, {2, 1e-4, 2}};
  auto net = model::build_model(cfg, kAssets);
  auto values = [](model::RlNet& n) {
    std::map<std::string, nn::Tensor> out;
    for (const auto& p : n.parameters()) out[p.path] = p.param->value;
    return out;
  };
  const auto init = values(*net);
  std::map<std::string, nn::Tensor> after1, after2;
  model::TrainOptions opt;
  opt.restore_best = false;
  opt.on_stage_end = [&](std::size_t s, model::RlNet& n) { (s == 0 ? after1 : after2) = values(n); };
  model::train(*net, train, val, opt);
  std::set<std::string> open;
  for (const auto& c : net->unfrozen_convs(2)) open.insert("backbone." + c + ".");
  int violations = 0, backbone = 0, opened = 0;
  for (const auto& [path, v] : init) {
    const bool head = path.rfind("head.", 0) == 0;
    bool in_open = head;
    for (const auto& o : open) in_open = in_open || path.rfind(o, 0) == 0;
    if (!head) {
      ++backbone;
      violations += !(after1.at(path) == v);
    }
    if (in_open) opened += !head;
    violations += in_open ? after2.at(path) == after1.at(path) : !(after2.at(path) == after1.at(path));
  }
  return {violations == 0 && opened == 4,
          std::to_string(backbone) + " backbone tensors checked, " + std::to_string(opened) +
              " opened in stage 2, " + std::to_string(violations) + " violations"};
}

// 7. Memorise 32 examples with the real backbone, frozen, head only.
Outcome overfit(bool random_init) {
  model::ModelConfig cfg;
  cfg.backbone = model::Backbone::vggface_vgg16;
  cfg.fc_sizes = {1024, 1024};
  cfg.batch_size = 8;
  cfg.stages = {{50, 1e-4, 0}};
  if (const char* w = std::getenv("RLFACE_VGGFACE_WEIGHTS"); w && *w) cfg.backbone_weights = w;
  cfg.allow_random_init = random_init;
  std::unique_ptr<model::RlNet> net;
  try {
    net = model::build_model(cfg, kAssets);
  } catch (const MissingArtifact& e) {
    return {false, std::string("unattainable: pretrained backbone asset missing (") + e.what() + ")", true};
  }
  const auto set = testutil::write_toy_set(testutil::temp_dir("acceptance_overfit"), 32, 5);
  model::TrainOptions opt;
  opt.augment = false;
  opt.restore_best = false;
  model::train(*net, set, set, opt);
  const double mae = model::evaluate_stream(*net, set).mae;
  const std::string what = "train MAE " + fmt(mae) + " after 50 epochs (tol < 2)";
  if (random_init) return {false, "reference only, He-initialised backbone: " + what, true};
  return {mae < 2.0, what};
}

evaluate::EvalItem item(Rng& rng, int i) {
  evaluate::EvalItem it;
  it.person_id = "Q" + std::to_string(i);
  it.age_at_image = 5 + static_cast<double>(rng.index(70));
  it.rl = it.actual = static_cast<double>(rng.index(85));
  it.age_at_death = it.age_at_image + it.rl;
  it.predicted = std::max(0.0, it.actual + 10 * rng.normal());
  it.face_width = 64 + static_cast<double>(rng.index(500));
  return it;
}

// 8. Weighted per-bin MAE reconstructs the overall MAE.
Outcome evaluation_consistency() {
  Rng rng(8);
  std::vector<evaluate::EvalItem> items;
  for (int i = 0; i < 500; ++i) items.push_back(item(rng, i));
  const auto report = evaluate::build_report(items);
  double worst = 0;
  for (const auto& c : report.mae_by) {
    double s = 0;
    std::size_t n = 0;
    for (const auto& p : c.points) {
      s += p.mae * static_cast<double>(p.n);
      n += p.n;
    }
    worst = std::max(worst, n == items.size() ? std::abs(s / static_cast<double>(n) - report.overall_mae) : 1.0);
  }
  return {report.mae_by.size() == 4 && worst <= 1e-9,
          std::to_string(report.mae_by.size()) + " views, max reconstruction err " + fmt(worst) + " (tol 1e-9)"};
}

// 9. Constant-shift cohort loss and the elapsed-0 gain identities.
Outcome cohort_identity() {
  Rng rng(9);
  std::vector<labeling::LabeledRecord> cohort;
  for (int i = 0; i < 60; ++i) {
    labeling::LabeledRecord r;
    r.person_id = "Q" + std::to_string(i);
    r.birth_year = 1930 + static_cast<int>(rng.index(20));
    r.death_year = 2020 + static_cast<int>(rng.index(2));
    r.image_year = 2000 + static_cast<int>(rng.index(20));
    r.rl_years = r.death_year - r.image_year;
    cohort.push_back(r);
  }
  double worst = 0;
  for (double c : {0.0, 3.3, -1.7, 12.25}) {
    const auto rep = apps::cohort_loss(cohort, {}, [&](const auto& r) { return r.rl_years + c; });
    worst = std::max(worst, std::abs(rep.mean_loss - c));
  }
  int gain_bad = 0;
  for (int t = 0; t < 100; ++t) {
    const double a = rng.uniform(0, 80), b = rng.uniform(0, 80);
    gain_bad += apps::intervention_gain({"p", "x", "x", 2010, 2010}, [&](const std::string&) { return a; }).gain != 0.0;
    const auto g = apps::intervention_gain({"q", "x", "y", 2010, 2010},
                                           [&](const std::string& p) { return p == "x" ? a : b; });
    gain_bad += g.gain != b - a;
  }
  return {worst <= 1e-9 && gain_bad == 0,
          "max |mean_loss - c| " + fmt(worst) + " (tol 1e-9), " + std::to_string(gain_bad) + " gain identity failures"};
}

}  // namespace

int main(int argc, char** argv) {
  bool random_init = false;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--random-init") == 0) random_init = true;
    else {
      std::cerr << "usage: " << argv[0] << " [--random-init]\n";
      return 2;
    }
  }
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"geometry", geometry},
      {"label identity", label_identity},
      {"caption parsing", parsing},
      {"balancing", balancing},
      {"heads and loss", heads_and_loss},
      {"freezing contract", freezing},
      {"overfit smoke", [&] { return overfit(random_init); }},
      {"evaluation consistency", evaluation_consistency},
      {"cohort identity", cohort_identity},
  };
  int failed = 0, passed = 0, unattainable = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << "criterion " << i + 1 << " [" << criteria[i].first << "]: " << (o.pass ? "PASS" : "FAIL") << "  "
              << o.detail << std::endl;
    passed += o.pass;
    unattainable += !o.pass && o.unattainable;
    failed += !o.pass && !o.unattainable;
  }
  std::cout << "acceptance: " << passed << " passed, " << failed << " failed, " << unattainable
            << " unattainable in this environment" << std::endl;
  return failed ? 1 : 0;
}
