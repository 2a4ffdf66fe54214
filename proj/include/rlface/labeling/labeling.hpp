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
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "rlface/core/drop.hpp"
#include "rlface/core/error.hpp"
#include "rlface/ingest/person_record.hpp"
#include "rlface/labeling/cause_map.hpp"

namespace rlface::labeling {

using rlface::DropEntry;
using ingest::MannerKind;
using ingest::PersonRecord;

inline constexpr int kMinAgeAtDeath = 50;

struct LabeledRecord {
  std::string person_id;
  std::string image_path;
  int rl_years = 0;
  int age_at_image = 0;
  int age_at_death = 0;
  // Source years, kept so covariates can be recomputed downstream.
  int birth_year = 0;
  int death_year = 0;
  int image_year = 0;

  friend bool operator==(const LabeledRecord&, const LabeledRecord&) = default;
};

inline void check_invariants(const LabeledRecord& r) {
  auto fail = [&](const char* what) { throw StructuralError(r.person_id + ": " + what); };
  if (r.rl_years != r.death_year - r.image_year) fail("rl_years != death_year - image_year");
  if (r.age_at_image != r.image_year - r.birth_year) fail("age_at_image != image_year - birth_year");
  if (r.age_at_death != r.death_year - r.birth_year) fail("age_at_death != death_year - birth_year");
  if (!(r.birth_year <= r.image_year && r.image_year <= r.death_year)) fail("image_year outside lifespan");
  if (r.rl_years < 0) fail("negative rl_years");
  if (r.age_at_death < kMinAgeAtDeath) fail("age_at_death below 50");
}

inline void to_json(nlohmann::json& j, const LabeledRecord& r) {
  j = nlohmann::json{{"person_id", r.person_id},       {"image_path", r.image_path},
                     {"rl_years", r.rl_years},         {"age_at_image", r.age_at_image},
                     {"age_at_death", r.age_at_death}, {"birth_year", r.birth_year},
                     {"death_year", r.death_year},     {"image_year", r.image_year}};
}

inline void from_json(const nlohmann::json& j, LabeledRecord& r) {
  r.person_id = j.at("person_id").get<std::string>();
  r.image_path = j.at("image_path").get<std::string>();
  r.rl_years = j.at("rl_years").get<int>();
  r.age_at_image = j.at("age_at_image").get<int>();
  r.age_at_death = j.at("age_at_death").get<int>();
  r.birth_year = j.at("birth_year").get<int>();
  r.death_year = j.at("death_year").get<int>();
  r.image_year = j.at("image_year").get<int>();
  check_invariants(r);
}

struct Keep {};
struct Drop {
  std::string reason;
};
struct DivertCovid {};

using MannerDecision = std::variant<Keep, Drop, DivertCovid>;

// Manner/cause rule: non-natural manner drops; a sole COVID-19 cause is
// diverted to the cohort; COVID-19 among several causes drops (it belongs
// to neither set); an unspecified manner with an unnatural cause drops.
// Unknown causes count as natural.
inline MannerDecision filter_death_manner(const PersonRecord& r, const CauseMannerMap& map) {
  if (r.manner_of_death.kind == MannerKind::other) return Drop{"manner not natural"};
  std::vector<CauseClass> classes;
  if (r.cause_of_death)
    for (const auto& c : split_causes(*r.cause_of_death)) classes.push_back(map.classify(c));
  const auto has = [&](CauseClass c) { return std::find(classes.begin(), classes.end(), c) != classes.end(); };
  if (has(CauseClass::pandemic_covid)) {
    if (classes.size() == 1) return DivertCovid{};
    return Drop{"covid among multiple causes"};
  }
  if (r.manner_of_death.kind == MannerKind::unspecified && has(CauseClass::unnatural))
    return Drop{"unnatural cause"};
  return Keep{};
}

// Keeps images dated inside the person's lifespan. Requires image_year.
inline std::optional<Drop> validate_image_year(const PersonRecord& r) {
  if (!r.image_year) throw StructuralError(r.person_id + ": validate_image_year without image_year");
  if (*r.image_year < r.birth_year) return Drop{"image before birth"};
  if (*r.image_year > r.death_year) return Drop{"image after death"};
  return std::nullopt;
}

inline std::optional<Drop> age_filter(const PersonRecord& r) {
  if (r.death_year - r.birth_year < kMinAgeAtDeath) return Drop{"age at death below 50"};
  return std::nullopt;
}

// Builds the labelled record. Missing image_year, or a year outside the
// lifespan, means a filter was skipped and is a StructuralError. Persons who
// died before 50 are dropped.
inline std::variant<LabeledRecord, Drop> derive_label(const PersonRecord& r) {
  if (!r.image_year) throw StructuralError(r.person_id + ": derive_label without image_year");
  if (validate_image_year(r)) throw StructuralError(r.person_id + ": derive_label before year validation");
  if (auto d = age_filter(r)) return *d;
  LabeledRecord out;
  out.person_id = r.person_id;
  out.image_path = r.image_ref.value_or("");
  out.birth_year = r.birth_year;
  out.death_year = r.death_year;
  out.image_year = *r.image_year;
  out.rl_years = r.death_year - *r.image_year;
  out.age_at_image = *r.image_year - r.birth_year;
  out.age_at_death = r.death_year - r.birth_year;
  check_invariants(out);
  return out;
}

inline bool is_remote(const std::string& ref) { return ref.find("://") != std::string::npos; }

struct LabelResult {
  std::vector<LabeledRecord> kept;   // sorted by person_id
  std::vector<LabeledRecord> covid;  // sorted by person_id
  std::vector<DropEntry> drops;      // sorted by person_id
};

// Applies every filter to the ingest manifest. Records lacking a stored
// image or a year are dropped first; cohort records go through the same
// year and age filters as training records.
inline LabelResult label_records(const std::vector<PersonRecord>& records, const CauseMannerMap& map) {
  LabelResult out;
  for (const auto& r : records) {
    auto drop = [&](std::string reason) { out.drops.push_back({r.person_id, "label", std::move(reason)}); };
    const auto decision = filter_death_manner(r, map);
    if (auto* d = std::get_if<Drop>(&decision)) {
      drop(d->reason);
      continue;
    }
    if (!r.image_year) {
      drop("no image year");
      continue;
    }
    if (!r.image_ref || is_remote(*r.image_ref)) {
      drop("no stored image");
      continue;
    }
    if (auto d = validate_image_year(r)) {
      drop(d->reason);
      continue;
    }
    auto labeled = derive_label(r);
    if (auto* d = std::get_if<Drop>(&labeled)) {
      drop(d->reason);
      continue;
    }
    auto& rec = std::get<LabeledRecord>(labeled);
    if (std::holds_alternative<DivertCovid>(decision)) out.covid.push_back(std::move(rec));
    else out.kept.push_back(std::move(rec));
  }
  auto by_id = [](const auto& a, const auto& b) { return a.person_id < b.person_id; };
  std::stable_sort(out.kept.begin(), out.kept.end(), by_id);
  std::stable_sort(out.covid.begin(), out.covid.end(), by_id);
  std::stable_sort(out.drops.begin(), out.drops.end(), by_id);
  return out;
}

// Age-at-death counts per integer year. Empty input is an error.
template <typename Range>
std::map<int, std::size_t> age_at_death_histogram(const Range& records) {
  std::map<int, std::size_t> h;
  for (const auto& r : records) ++h[r.age_at_death];
  if (h.empty()) throw StructuralError("age-at-death histogram of an empty record set");
  return h;
}

inline std::string histogram_csv(const std::map<int, std::size_t>& h, const std::string& key = "age_at_death") {
  std::string out = key + ",count\n";
  for (const auto& [k, n] : h) out += std::to_string(k) + "," + std::to_string(n) + "\n";
  return out;
}

}  // namespace rlface::labeling
