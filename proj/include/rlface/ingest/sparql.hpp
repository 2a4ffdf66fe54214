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

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "rlface/core/error.hpp"
#include "rlface/ingest/graph.hpp"
#include "rlface/ingest/http.hpp"

namespace rlface::ingest {

// Query for one death year. All birth/death statements of a matching person
// are returned (not only the in-window one) so that conflicting years can be
// detected. Manner is restricted to natural causes or absent.
inline std::string build_person_query(int death_year, std::size_t limit, std::size_t offset) {
  const std::string y = std::to_string(death_year);
  return
      "PREFIX wd: <http://www.wikidata.org/entity/>\n"
      "PREFIX wdt: <http://www.wikidata.org/prop/direct/>\n"
      "PREFIX p: <http://www.wikidata.org/prop/>\n"
      "PREFIX ps: <http://www.wikidata.org/prop/statement/>\n"
      "PREFIX psv: <http://www.wikidata.org/prop/statement/value/>\n"
      "PREFIX pq: <http://www.wikidata.org/prop/qualifier/>\n"
      "PREFIX pqv: <http://www.wikidata.org/prop/qualifier/value/>\n"
      "PREFIX wikibase: <http://wikiba.se/ontology#>\n"
      "PREFIX schema: <http://schema.org/>\n"
      "PREFIX bd: <http://www.bigdata.com/rdf#>\n"
      "SELECT ?person ?personLabel ?birth ?birthPrecision ?death ?deathPrecision ?manner "
      "?mannerLabel ?cause ?causeLabel ?image ?imageTime ?imageTimePrecision ?legend ?article WHERE {\n"
      "  ?person wdt:P31 wd:Q5 .\n"
      "  FILTER EXISTS { ?person wdt:P570 ?d . FILTER(YEAR(?d) = " + y + ") }\n"
      "  ?person p:P570 ?ds . ?ds wikibase:rank ?dr . FILTER(?dr != wikibase:DeprecatedRank)\n"
      "  ?ds psv:P570 [ wikibase:timeValue ?death ; wikibase:timePrecision ?deathPrecision ] .\n"
      "  ?person p:P569 ?bs . ?bs wikibase:rank ?br . FILTER(?br != wikibase:DeprecatedRank)\n"
      "  ?bs psv:P569 [ wikibase:timeValue ?birth ; wikibase:timePrecision ?birthPrecision ] .\n"
      "  OPTIONAL { ?person wdt:P1196 ?manner . }\n"
      "  FILTER(!BOUND(?manner) || ?manner = wd:Q3739104)\n"
      "  OPTIONAL { ?person wdt:P509 ?cause . }\n"
      "  OPTIONAL { ?person p:P18 ?is . ?is ps:P18 ?image .\n"
      "    OPTIONAL { ?is pqv:P585 [ wikibase:timeValue ?imageTime ; wikibase:timePrecision ?imageTimePrecision ] . }\n"
      "    OPTIONAL { ?is pq:P2096 ?legend . FILTER(LANG(?legend) = \"en\") } }\n"
      "  OPTIONAL { ?article schema:about ?person ; schema:isPartOf <https://en.wikipedia.org/> . }\n"
      "  SERVICE wikibase:label { bd:serviceParam wikibase:language \"en\". }\n"
      "}\n"
      "ORDER BY ?person\n"
      "LIMIT " + std::to_string(limit) + " OFFSET " + std::to_string(offset) + "\n";
}

using SparqlRow = std::map<std::string, std::string>;

// Parses a SPARQL 1.1 JSON results document into var -> lexical value rows.
inline std::vector<SparqlRow> parse_sparql_results(const std::string& body) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("SPARQL response is not JSON: ") + e.what(), body);
  }
  if (!doc.is_object() || !doc.contains("results") || !doc["results"].contains("bindings") ||
      !doc["results"]["bindings"].is_array()) {
    throw ParseError("SPARQL response lacks results.bindings", body);
  }
  std::vector<SparqlRow> rows;
  for (const auto& b : doc["results"]["bindings"]) {
    if (!b.is_object()) throw ParseError("SPARQL binding is not an object", body);
    SparqlRow row;
    for (const auto& [var, term] : b.items()) {
      if (!term.is_object() || !term.contains("value") || !term["value"].is_string())
        throw ParseError("SPARQL term without string value for ?" + var, body);
      row[var] = term["value"].get<std::string>();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// Strips the entity namespace: "http://www.wikidata.org/entity/Q42" -> "Q42".
inline std::string local_id(const std::string& iri) {
  const auto slash = iri.rfind('/');
  return slash == std::string::npos ? iri : iri.substr(slash + 1);
}

// Folds consecutive rows of one person into a GraphEntity.
class RowAggregator {
 public:
  using Sink = std::function<void(GraphEntity&&)>;
  explicit RowAggregator(Sink sink) : sink_(std::move(sink)) {}

  void add(const SparqlRow& row) {
    auto it = row.find("person");
    if (it == row.end()) throw ParseError("row without ?person", {});
    const std::string id = local_id(it->second);
    if (current_ && current_->id != id) flush();
    if (!current_) {
      current_ = GraphEntity{};
      current_->id = id;
    }
    GraphEntity& g = *current_;
    auto get = [&](const char* k) -> const std::string* {
      auto f = row.find(k);
      return f == row.end() ? nullptr : &f->second;
    };
    if (auto v = get("personLabel")) g.label = *v;
    auto time_of = [&](const char* value, const char* precision) -> std::optional<TimeValue> {
      auto v = get(value);
      if (!v) return std::nullopt;
      auto p = get(precision);
      return TimeValue{*v, p ? std::stoi(*p) : kPrecisionDay};
    };
    auto add_unique_time = [](std::vector<TimeValue>& vs, const TimeValue& t) {
      for (const auto& x : vs)
        if (x.iso == t.iso && x.precision == t.precision) return;
      vs.push_back(t);
    };
    if (auto t = time_of("birth", "birthPrecision")) add_unique_time(g.births, *t);
    if (auto t = time_of("death", "deathPrecision")) add_unique_time(g.deaths, *t);
    if (auto v = get("manner")) {
      const std::string mid = local_id(*v);
      if (std::find(g.manner_ids.begin(), g.manner_ids.end(), mid) == g.manner_ids.end()) {
        g.manner_ids.push_back(mid);
        auto l = get("mannerLabel");
        g.manner_labels.push_back(l ? *l : mid);
      }
    }
    if (auto v = get("cause")) {
      auto l = get("causeLabel");
      std::string label = l ? *l : local_id(*v);
      if (std::find(g.cause_labels.begin(), g.cause_labels.end(), label) == g.cause_labels.end())
        g.cause_labels.push_back(label);
    }
    if (auto v = get("image")) {
      auto found = std::find_if(g.images.begin(), g.images.end(),
                                [&](const ImageClaim& c) { return c.url == *v; });
      if (found == g.images.end()) {
        g.images.push_back(ImageClaim{*v, std::nullopt, std::nullopt});
        found = std::prev(g.images.end());
      }
      if (auto t = time_of("imageTime", "imageTimePrecision"); t && !found->point_in_time)
        found->point_in_time = t;
      if (auto l = get("legend"); l && !found->legend) found->legend = *l;
    }
    if (auto v = get("article")) g.article_url = *v;
  }

  void flush() {
    if (current_) {
      GraphEntity g = std::move(*current_);
      current_.reset();
      sink_(std::move(g));
    }
  }

 private:
  Sink sink_;
  std::optional<GraphEntity> current_;
};

struct QueryStats {
  std::size_t pages = 0;
  std::size_t rows = 0;
  std::size_t yielded = 0;
  std::vector<std::pair<std::string, std::string>> dropped;  // (person_id, reason)
};

// Streams resolved persons who died inside `window`. Each death year is a
// separate paginated query; pagination and row folding are hidden from the
// caller. Persons are delivered in (death year, id) order.
inline QueryStats query_persons(YearWindow window, const std::string& endpoint, HttpClient& client,
                                const std::function<void(Resolved&&)>& sink,
                                std::size_t page_size = 5000) {
  if (window.empty()) throw StructuralError("empty year window");
  if (page_size == 0) throw StructuralError("page size must be positive");
  QueryStats stats;
  for (int year = window.first; year <= window.last; ++year) {
    RowAggregator agg([&](GraphEntity&& g) {
      Resolved r = resolve_entity(g, window);
      if (r.record) {
        ++stats.yielded;
        sink(std::move(r));
      } else {
        stats.dropped.emplace_back(g.id, r.drop_reason);
      }
    });
    for (std::size_t offset = 0;; offset += page_size) {
      const std::string url = endpoint + (endpoint.find('?') == std::string::npos ? "?" : "&") +
                              "format=json&query=" + url_encode(build_person_query(year, page_size, offset));
      HttpResponse res = client.get(url, {{"Accept", "application/sparql-results+json"}});
      if (res.status == 429 || res.status >= 500)
        throw TransportError("SPARQL endpoint returned HTTP " + std::to_string(res.status), res.status);
      if (res.status != 200)
        throw ParseError("SPARQL endpoint returned HTTP " + std::to_string(res.status), res.body);
      const auto rows = parse_sparql_results(res.body);
      ++stats.pages;
      stats.rows += rows.size();
      for (const auto& row : rows) agg.add(row);
      if (rows.size() < page_size) break;
    }
    agg.flush();
  }
  return stats;
}

}  // namespace rlface::ingest
