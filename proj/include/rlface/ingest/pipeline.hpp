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
#include <atomic>
#include <filesystem>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "rlface/core/drop.hpp"
#include "rlface/core/jsonl.hpp"
#include "rlface/ingest/caption.hpp"
#include "rlface/ingest/download.hpp"
#include "rlface/ingest/graph.hpp"
#include "rlface/ingest/person_record.hpp"
#include "rlface/ingest/scrape.hpp"
#include "rlface/ingest/sparql.hpp"

namespace rlface::ingest {

struct IngestConfig {
  std::string sparql_endpoint = "https://query.wikidata.org/sparql";
  // When set, article URLs are rewritten onto this base before scraping.
  std::string wiki_base;
  YearWindow window;
  std::size_t page_size = 5000;
  int workers = 4;
  double requests_per_second = 2.0;
  RetryPolicy retry;
};

using rlface::DropEntry;

struct IngestResult {
  std::vector<PersonRecord> records;  // sorted by person_id
  std::vector<DropEntry> drops;       // sorted by person_id
  QueryStats query;
  std::size_t scraped_pages = 0;
  std::size_t downloaded = 0;
};

// Fills image_ref / image_year of one resolved person. The graph image's
// point-in-time wins; then its legend; then the encyclopedia lead image
// caption. Images are only downloaded when a year was found; otherwise
// image_ref keeps the remote URL of the best candidate. Throws Rejection
// when the chosen image cannot be stored.
inline PersonRecord enrich(const Resolved& res, const IngestConfig& cfg, HttpClient& client,
                           const std::filesystem::path& image_store, const std::string& store_prefix,
                           bool* scraped = nullptr) {
  PersonRecord r = *res.record;
  std::optional<std::string> url;
  if (res.image) {
    url = res.image->url;
    if (auto y = extract_graph_image_year(*res.image)) {
      r.image_year = y;
      r.image_year_source = ImageYearSource::graph_point_in_time;
    } else if (res.image->legend) {
      if (auto y = parse_caption_year(*res.image->legend).extracted_year) {
        r.image_year = y;
        r.image_year_source = ImageYearSource::caption_parse;
      }
    }
  }
  if (!r.image_year && res.article_url) {
    if (scraped) *scraped = true;
    if (auto page = scrape_page_image(rebase_article_url(*res.article_url, cfg.wiki_base), client)) {
      if (!url) url = page->image_url;
      if (auto y = parse_caption_year(page->caption).extracted_year) {
        url = page->image_url;
        r.image_year = y;
        r.image_year_source = ImageYearSource::caption_parse;
      }
    }
  }
  if (url && r.image_year) {
    const auto stored = download_image(*url, image_store, client);
    r.image_ref = store_prefix + stored.filename().string();
  } else {
    r.image_ref = url;
  }
  return r;
}

// Runs the graph query, enriches every yielded person with an image and year
// using `cfg.workers` threads, and returns records sorted by person_id.
// Images land in `image_store`; image_ref is `store_prefix` + file name.
inline IngestResult ingest(const IngestConfig& cfg, HttpClient& client, const std::filesystem::path& image_store,
                           const std::string& store_prefix = "images/") {
  std::filesystem::create_directories(image_store);
  IngestResult out;
  std::vector<Resolved> resolved;
  out.query = query_persons(
      cfg.window, cfg.sparql_endpoint, client, [&](Resolved&& r) { resolved.push_back(std::move(r)); },
      cfg.page_size);
  for (const auto& [id, reason] : out.query.dropped) out.drops.push_back({id, "query", reason});

  std::vector<std::optional<PersonRecord>> enriched(resolved.size());
  std::vector<std::string> failures(resolved.size());
  std::atomic<std::size_t> next{0}, scraped{0};
  std::exception_ptr fatal;
  std::mutex fatal_mu;
  auto work = [&] {
    for (std::size_t i = next++; i < resolved.size(); i = next++) {
      try {
        bool did_scrape = false;
        enriched[i] = enrich(resolved[i], cfg, client, image_store, store_prefix, &did_scrape);
        if (did_scrape) ++scraped;
      } catch (const Rejection& e) {
        failures[i] = e.reason();
      } catch (const TransportError& e) {
        failures[i] = std::string("transport: ") + e.what();
      } catch (...) {
        std::lock_guard lock(fatal_mu);
        if (!fatal) fatal = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min<int>(cfg.workers, static_cast<int>(resolved.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (fatal) std::rethrow_exception(fatal);

  for (std::size_t i = 0; i < resolved.size(); ++i) {
    if (enriched[i]) {
      check_invariants(*enriched[i], cfg.window);
      if (enriched[i]->image_year) ++out.downloaded;
      out.records.push_back(std::move(*enriched[i]));
    } else {
      out.drops.push_back({resolved[i].record->person_id, "download", failures[i]});
    }
  }
  out.scraped_pages = scraped;
  std::sort(out.records.begin(), out.records.end(),
            [](const PersonRecord& a, const PersonRecord& b) { return a.person_id < b.person_id; });
  std::stable_sort(out.drops.begin(), out.drops.end(),
                   [](const DropEntry& a, const DropEntry& b) { return a.person_id < b.person_id; });
  return out;
}

}  // namespace rlface::ingest
