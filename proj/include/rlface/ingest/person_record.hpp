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

#include <optional>
#include <string>

#include <json.hpp>

#include "rlface/core/error.hpp"

namespace rlface::ingest {

// Year window of the knowledge-graph query, inclusive on both ends.
struct YearWindow {
  int first = 1990;
  int last = 2022;
  bool contains(int y) const { return first <= y && y <= last; }
  bool empty() const { return last < first; }
};

enum class MannerKind { natural, unspecified, other };

struct MannerOfDeath {
  MannerKind kind = MannerKind::unspecified;
  std::string other;  // label of the non-natural manner when kind == other

  static MannerOfDeath natural() { return {MannerKind::natural, {}}; }
  static MannerOfDeath unspecified() { return {MannerKind::unspecified, {}}; }
  static MannerOfDeath other_manner(std::string label) {
    return {MannerKind::other, std::move(label)};
  }

  // "natural", "unspecified" or "other:<label>".
  std::string str() const {
    switch (kind) {
      case MannerKind::natural: return "natural";
      case MannerKind::unspecified: return "unspecified";
      case MannerKind::other: return "other:" + other;
    }
    return "unspecified";
  }
  static MannerOfDeath parse(const std::string& s) {
    if (s == "natural") return natural();
    if (s == "unspecified") return unspecified();
    if (s.rfind("other:", 0) == 0) return other_manner(s.substr(6));
    throw StructuralError("unknown manner_of_death '" + s + "'");
  }
  friend bool operator==(const MannerOfDeath&, const MannerOfDeath&) = default;
};

enum class ImageYearSource { graph_point_in_time, caption_parse };

inline const char* to_string(ImageYearSource s) {
  return s == ImageYearSource::graph_point_in_time ? "graph_point_in_time" : "caption_parse";
}

struct PersonRecord {
  std::string person_id;
  std::string name;
  int birth_year = 0;
  int death_year = 0;
  MannerOfDeath manner_of_death;
  std::optional<std::string> cause_of_death;  // '|'-separated when several
  std::optional<std::string> image_ref;
  std::optional<int> image_year;
  std::optional<ImageYearSource> image_year_source;

  friend bool operator==(const PersonRecord&, const PersonRecord&) = default;
};

// Throws StructuralError naming the first violated invariant.
inline void check_invariants(const PersonRecord& r, YearWindow window = {}) {
  if (r.person_id.empty()) throw StructuralError("person_id empty");
  if (r.birth_year > r.death_year)
    throw StructuralError(r.person_id + ": birth_year > death_year");
  if (!window.contains(r.death_year))
    throw StructuralError(r.person_id + ": death_year outside window");
  if (r.image_year && !r.image_year_source)
    throw StructuralError(r.person_id + ": image_year without source");
}

inline void to_json(nlohmann::json& j, const PersonRecord& r) {
  j = nlohmann::json{{"person_id", r.person_id},
                     {"name", r.name},
                     {"birth_year", r.birth_year},
                     {"death_year", r.death_year},
                     {"manner_of_death", r.manner_of_death.str()},
                     {"cause_of_death", nullptr},
                     {"image_ref", nullptr},
                     {"image_year", nullptr},
                     {"image_year_source", nullptr}};
  if (r.cause_of_death) j["cause_of_death"] = *r.cause_of_death;
  if (r.image_ref) j["image_ref"] = *r.image_ref;
  if (r.image_year) j["image_year"] = *r.image_year;
  if (r.image_year_source) j["image_year_source"] = to_string(*r.image_year_source);
}

inline void from_json(const nlohmann::json& j, PersonRecord& r) {
  r.person_id = j.at("person_id").get<std::string>();
  r.name = j.value("name", "");
  r.birth_year = j.at("birth_year").get<int>();
  r.death_year = j.at("death_year").get<int>();
  r.manner_of_death = MannerOfDeath::parse(j.value("manner_of_death", "unspecified"));
  auto opt_string = [&](const char* key) -> std::optional<std::string> {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<std::string>();
  };
  r.cause_of_death = opt_string("cause_of_death");
  r.image_ref = opt_string("image_ref");
  r.image_year.reset();
  if (j.contains("image_year") && !j["image_year"].is_null())
    r.image_year = j["image_year"].get<int>();
  r.image_year_source.reset();
  if (auto s = opt_string("image_year_source")) {
    if (*s == "graph_point_in_time") r.image_year_source = ImageYearSource::graph_point_in_time;
    else if (*s == "caption_parse") r.image_year_source = ImageYearSource::caption_parse;
    else throw StructuralError("unknown image_year_source '" + *s + "'");
  }
}

}  // namespace rlface::ingest
