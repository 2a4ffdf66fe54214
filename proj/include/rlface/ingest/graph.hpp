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
#include <cctype>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "rlface/ingest/person_record.hpp"

namespace rlface::ingest {

// Wikibase time precision codes.
inline constexpr int kPrecisionDecade = 8;
inline constexpr int kPrecisionYear = 9;
inline constexpr int kPrecisionMonth = 10;
inline constexpr int kPrecisionDay = 11;

inline constexpr const char* kNaturalCausesId = "Q3739104";

struct TimeValue {
  std::string iso;  // "+1945-06-01T00:00:00Z" or "1945-06-01T00:00:00Z"
  int precision = kPrecisionDay;

  // Signed year from the ISO string, regardless of precision.
  std::optional<int> raw_year() const {
    std::size_t i = 0;
    int sign = 1;
    if (i < iso.size() && (iso[i] == '+' || iso[i] == '-')) {
      sign = iso[i] == '-' ? -1 : 1;
      ++i;
    }
    std::size_t j = i;
    while (j < iso.size() && std::isdigit(static_cast<unsigned char>(iso[j]))) ++j;
    if (j == i) return std::nullopt;
    return sign * std::stoi(iso.substr(i, j - i));
  }

  // The year when the value is known at least to the year.
  std::optional<int> year() const {
    if (precision < kPrecisionYear) return std::nullopt;
    return raw_year();
  }
};

struct ImageClaim {
  std::string url;
  std::optional<TimeValue> point_in_time;
  std::optional<std::string> legend;  // English media legend, used as caption
};

// One knowledge-graph person as retrieved, before year resolution.
struct GraphEntity {
  std::string id;
  std::string label;
  std::vector<TimeValue> births;
  std::vector<TimeValue> deaths;
  std::vector<std::string> manner_ids;
  std::vector<std::string> manner_labels;
  std::vector<std::string> cause_labels;
  std::vector<ImageClaim> images;
  std::optional<std::string> article_url;
};

// Year of an image from its point-in-time qualifier; absent without a
// qualifier or when the qualifier is coarser than a year.
inline std::optional<int> extract_graph_image_year(const ImageClaim& claim) {
  if (!claim.point_in_time) return std::nullopt;
  return claim.point_in_time->year();
}

namespace detail {

inline std::optional<TimeValue> time_from_snak(const nlohmann::json& snak) {
  if (snak.value("snaktype", "value") != "value") return std::nullopt;
  const auto& dv = snak.at("datavalue");
  if (dv.value("type", "") != "time") return std::nullopt;
  const auto& v = dv.at("value");
  return TimeValue{v.at("time").get<std::string>(), v.value("precision", kPrecisionDay)};
}

inline std::string entity_id_from_snak(const nlohmann::json& snak) {
  if (snak.value("snaktype", "value") != "value") return {};
  return snak.at("datavalue").at("value").value("id", "");
}

inline std::string commons_file_url(const std::string& file) {
  std::string name = file;
  std::replace(name.begin(), name.end(), ' ', '_');
  return "http://commons.wikimedia.org/wiki/Special:FilePath/" + name;
}

}  // namespace detail

// Reads an entity in the Wikibase JSON format (one element of
// wbgetentities' "entities").
inline GraphEntity parse_wikibase_entity(const nlohmann::json& e) {
  GraphEntity g;
  g.id = e.at("id").get<std::string>();
  if (e.contains("labels") && e["labels"].contains("en"))
    g.label = e["labels"]["en"].value("value", "");
  const nlohmann::json claims = e.value("claims", nlohmann::json::object());
  auto each = [&](const char* prop, auto&& fn) {
    if (!claims.contains(prop)) return;
    for (const auto& st : claims[prop]) fn(st);
  };
  each("P569", [&](const nlohmann::json& st) {
    if (auto t = detail::time_from_snak(st.at("mainsnak"))) g.births.push_back(*t);
  });
  each("P570", [&](const nlohmann::json& st) {
    if (auto t = detail::time_from_snak(st.at("mainsnak"))) g.deaths.push_back(*t);
  });
  each("P1196", [&](const nlohmann::json& st) {
    auto id = detail::entity_id_from_snak(st.at("mainsnak"));
    if (!id.empty()) {
      g.manner_ids.push_back(id);
      g.manner_labels.push_back(id);
    }
  });
  each("P509", [&](const nlohmann::json& st) {
    auto id = detail::entity_id_from_snak(st.at("mainsnak"));
    if (!id.empty()) g.cause_labels.push_back(id);
  });
  each("P18", [&](const nlohmann::json& st) {
    const auto& snak = st.at("mainsnak");
    if (snak.value("snaktype", "value") != "value") return;
    ImageClaim c;
    c.url = detail::commons_file_url(snak.at("datavalue").at("value").get<std::string>());
    const auto q = st.value("qualifiers", nlohmann::json::object());
    if (q.contains("P585") && !q["P585"].empty()) c.point_in_time = detail::time_from_snak(q["P585"][0]);
    if (q.contains("P2096")) {
      for (const auto& leg : q["P2096"]) {
        const auto& v = leg.at("datavalue").at("value");
        if (v.value("language", "") == "en") c.legend = v.value("text", "");
      }
    }
    g.images.push_back(std::move(c));
  });
  if (e.contains("sitelinks") && e["sitelinks"].contains("enwiki")) {
    const auto& s = e["sitelinks"]["enwiki"];
    if (s.contains("url")) {
      g.article_url = s["url"].get<std::string>();
    } else {
      std::string title = s.value("title", "");
      std::replace(title.begin(), title.end(), ' ', '_');
      g.article_url = "https://en.wikipedia.org/wiki/" + title;
    }
  }
  return g;
}

// Convenience over the first image claim of a Wikibase entity.
inline std::optional<int> extract_graph_image_year(const nlohmann::json& entity) {
  const auto g = parse_wikibase_entity(entity);
  if (g.images.empty()) return std::nullopt;
  return extract_graph_image_year(g.images.front());
}

// Outcome of resolving a GraphEntity into a PersonRecord.
struct Resolved {
  std::optional<PersonRecord> record;
  std::string drop_reason;  // set when record is empty
  // Image candidates and article kept for the enrichment step.
  std::optional<ImageClaim> image;
  std::optional<std::string> article_url;
};

namespace detail {

// Distinct years among year-precision values; empty when none qualify.
inline std::set<int> resolved_years(const std::vector<TimeValue>& values) {
  std::set<int> years;
  for (const auto& v : values)
    if (auto y = v.year()) years.insert(*y);
  return years;
}

}  // namespace detail

// Applies the year-level rules: birth and death must each resolve to exactly
// one year, and death must fall inside the window. The chosen image is the
// first claim (by URL) carrying a point-in-time year, else the first by URL.
inline Resolved resolve_entity(const GraphEntity& g, YearWindow window) {
  Resolved out;
  const auto births = detail::resolved_years(g.births);
  const auto deaths = detail::resolved_years(g.deaths);
  if (births.empty()) return {std::nullopt, "birth year unresolved", {}, {}};
  if (deaths.empty()) return {std::nullopt, "death year unresolved", {}, {}};
  if (births.size() > 1) return {std::nullopt, "conflicting birth years", {}, {}};
  if (deaths.size() > 1) return {std::nullopt, "conflicting death years", {}, {}};
  PersonRecord r;
  r.person_id = g.id;
  r.name = g.label;
  r.birth_year = *births.begin();
  r.death_year = *deaths.begin();
  if (!window.contains(r.death_year)) return {std::nullopt, "death year outside window", {}, {}};
  if (r.birth_year > r.death_year) return {std::nullopt, "birth after death", {}, {}};

  std::set<std::string> manners(g.manner_ids.begin(), g.manner_ids.end());
  if (manners.empty()) {
    r.manner_of_death = MannerOfDeath::unspecified();
  } else if (manners.size() == 1 && *manners.begin() == kNaturalCausesId) {
    r.manner_of_death = MannerOfDeath::natural();
  } else {
    std::string label;
    for (std::size_t i = 0; i < g.manner_ids.size(); ++i) {
      if (g.manner_ids[i] != kNaturalCausesId) {
        label = i < g.manner_labels.size() ? g.manner_labels[i] : g.manner_ids[i];
        break;
      }
    }
    r.manner_of_death = MannerOfDeath::other_manner(label);
  }

  std::set<std::string> causes(g.cause_labels.begin(), g.cause_labels.end());
  if (!causes.empty()) {
    std::string joined;
    for (const auto& c : causes) joined += (joined.empty() ? "" : "|") + c;
    r.cause_of_death = joined;
  }

  std::vector<ImageClaim> images = g.images;
  std::stable_sort(images.begin(), images.end(),
                   [](const ImageClaim& a, const ImageClaim& b) { return a.url < b.url; });
  auto dated = std::find_if(images.begin(), images.end(),
                            [](const ImageClaim& c) { return extract_graph_image_year(c).has_value(); });
  if (dated != images.end()) out.image = *dated;
  else if (!images.empty()) out.image = images.front();
  out.article_url = g.article_url;
  out.record = std::move(r);
  return out;
}

}  // namespace rlface::ingest
