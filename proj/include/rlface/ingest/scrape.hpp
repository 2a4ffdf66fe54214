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

#include <cctype>
#include <optional>
#include <string>
#include <string_view>

#include "rlface/core/error.hpp"
#include "rlface/ingest/http.hpp"

namespace rlface::ingest {

struct PageImage {
  std::string image_url;
  std::string caption;
  friend bool operator==(const PageImage&, const PageImage&) = default;
};

namespace html {

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Value of attribute `name` inside the tag text `<tag a="..." b='..'>`.
inline std::optional<std::string> attribute(std::string_view tag, std::string_view name) {
  const std::string lt = lower(tag);
  std::size_t pos = 0;
  while ((pos = lt.find(name, pos)) != std::string::npos) {
    const bool boundary = pos > 0 && (std::isspace(static_cast<unsigned char>(lt[pos - 1])));
    std::size_t p = pos + name.size();
    while (p < lt.size() && std::isspace(static_cast<unsigned char>(lt[p]))) ++p;
    if (!boundary || p >= lt.size() || lt[p] != '=') {
      pos += name.size();
      continue;
    }
    ++p;
    while (p < lt.size() && std::isspace(static_cast<unsigned char>(lt[p]))) ++p;
    if (p >= lt.size()) return std::nullopt;
    if (lt[p] == '"' || lt[p] == '\'') {
      const char q = lt[p];
      const auto end = tag.find(q, p + 1);
      if (end == std::string_view::npos) return std::nullopt;
      return std::string(tag.substr(p + 1, end - p - 1));
    }
    auto end = p;
    while (end < tag.size() && !std::isspace(static_cast<unsigned char>(tag[end])) && tag[end] != '>') ++end;
    return std::string(tag.substr(p, end - p));
  }
  return std::nullopt;
}

inline bool has_class(std::string_view tag, std::string_view cls) {
  auto c = attribute(tag, "class");
  if (!c) return false;
  const std::string classes = " " + lower(*c) + " ";
  return classes.find(" " + lower(cls) + " ") != std::string::npos;
}

struct Tag {
  std::size_t begin = std::string_view::npos;  // position of '<'
  std::size_t end = std::string_view::npos;    // one past '>'
  std::string name;                            // lower case, without '/'
  bool closing = false;
  std::string_view text;
};

// Next tag at or after `pos`; comments and doctype are skipped.
inline std::optional<Tag> next_tag(std::string_view doc, std::size_t pos) {
  while (true) {
    const auto lt = doc.find('<', pos);
    if (lt == std::string_view::npos) return std::nullopt;
    if (doc.substr(lt, 4) == "<!--") {
      const auto close = doc.find("-->", lt + 4);
      if (close == std::string_view::npos) return std::nullopt;
      pos = close + 3;
      continue;
    }
    const auto gt = doc.find('>', lt);
    if (gt == std::string_view::npos) return std::nullopt;
    Tag t;
    t.begin = lt;
    t.end = gt + 1;
    t.text = doc.substr(lt, gt + 1 - lt);
    std::size_t p = lt + 1;
    if (p < doc.size() && doc[p] == '/') {
      t.closing = true;
      ++p;
    }
    auto q = p;
    while (q < gt && (std::isalnum(static_cast<unsigned char>(doc[q])) || doc[q] == '-')) ++q;
    t.name = lower(doc.substr(p, q - p));
    if (t.name.empty()) {
      pos = gt + 1;
      continue;
    }
    return t;
  }
}

// End (one past the closing tag) of the element that opens at `open`.
inline std::size_t element_end(std::string_view doc, const Tag& open) {
  if (open.text.size() >= 2 && open.text[open.text.size() - 2] == '/') return open.end;
  int depth = 1;
  std::size_t pos = open.end;
  while (auto t = next_tag(doc, pos)) {
    pos = t->end;
    if (t->name != open.name) continue;
    depth += t->closing ? -1 : 1;
    if (depth == 0) return t->end;
  }
  return doc.size();
}

// First opening tag satisfying `pred` in [from, to).
template <typename Pred>
std::optional<Tag> find_tag(std::string_view doc, std::size_t from, std::size_t to, Pred pred) {
  std::size_t pos = from;
  while (auto t = next_tag(doc, pos)) {
    if (t->begin >= to) return std::nullopt;
    if (!t->closing && pred(*t)) return t;
    pos = t->end;
  }
  return std::nullopt;
}

inline std::string decode_entities(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '&') {
      out.push_back(s[i]);
      continue;
    }
    const auto semi = s.find(';', i);
    if (semi == std::string_view::npos || semi - i > 10) {
      out.push_back('&');
      continue;
    }
    const std::string ent(s.substr(i + 1, semi - i - 1));
    std::string rep;
    if (ent == "amp") rep = "&";
    else if (ent == "lt") rep = "<";
    else if (ent == "gt") rep = ">";
    else if (ent == "quot") rep = "\"";
    else if (ent == "apos" || ent == "#39") rep = "'";
    else if (ent == "nbsp" || ent == "#160") rep = " ";
    else if (ent == "ndash" || ent == "#8211") rep = "-";
    else if (ent == "mdash" || ent == "#8212") rep = "-";
    else if (!ent.empty() && ent[0] == '#') {
      long cp = ent.size() > 1 && (ent[1] == 'x' || ent[1] == 'X') ? std::strtol(ent.c_str() + 2, nullptr, 16)
                                                                    : std::strtol(ent.c_str() + 1, nullptr, 10);
      if (cp > 0 && cp < 128) rep = std::string(1, static_cast<char>(cp));
      else rep = " ";
    } else {
      out.push_back('&');
      continue;
    }
    out += rep;
    i = semi;
  }
  return out;
}

// Text content with tags removed and whitespace collapsed.
inline std::string text_content(std::string_view fragment) {
  std::string raw;
  bool in_tag = false;
  for (char c : fragment) {
    if (c == '<') in_tag = true;
    else if (c == '>') {
      in_tag = false;
      raw.push_back(' ');
    } else if (!in_tag) raw.push_back(c);
  }
  const std::string decoded = decode_entities(raw);
  std::string out;
  bool space = false;
  for (char c : decoded) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = !out.empty();
    } else {
      if (space) out.push_back(' ');
      space = false;
      out.push_back(c);
    }
  }
  return out;
}

}  // namespace html

// Maps a MediaWiki thumbnail URL to its original file:
// ".../thumb/a/ab/File.jpg/220px-File.jpg" -> ".../a/ab/File.jpg".
inline std::string original_from_thumbnail(const std::string& url) {
  const auto thumb = url.find("/thumb/");
  if (thumb == std::string::npos) return url;
  const auto last = url.rfind('/');
  if (last <= thumb + 6) return url;
  return url.substr(0, thumb) + url.substr(thumb + 6, last - thumb - 6);
}

// Extracts the infobox image and caption, falling back to the first captioned
// figure of the lead section. Images anywhere else (site logos, icons, body
// figures) are ignored.
inline std::optional<PageImage> extract_page_image(std::string_view doc, const Url& page) {
  using namespace html;
  auto finish = [&](std::string_view src, std::string caption) -> std::optional<PageImage> {
    if (src.empty() || caption.empty()) return std::nullopt;
    return PageImage{original_from_thumbnail(resolve_url(page, src)), std::move(caption)};
  };

  if (auto box = find_tag(doc, 0, doc.size(), [](const Tag& t) {
        return t.name == "table" && has_class(t.text, "infobox");
      })) {
    const auto box_end = element_end(doc, *box);
    if (auto img = find_tag(doc, box->end, box_end, [](const Tag& t) { return t.name == "img"; })) {
      const auto src = attribute(img->text, "src").value_or("");
      std::string caption;
      if (auto cap = find_tag(doc, img->end, box_end, [](const Tag& t) {
            return has_class(t.text, "infobox-caption");
          })) {
        const auto cap_end = element_end(doc, *cap);
        caption = text_content(doc.substr(cap->end, cap_end - cap->end));
      }
      if (!caption.empty()) return finish(src, caption);
      return std::nullopt;
    }
  }

  // Lead section: everything before the first section heading.
  std::size_t lead_end = doc.size();
  if (auto h2 = find_tag(doc, 0, doc.size(), [](const Tag& t) { return t.name == "h2"; })) lead_end = h2->begin;
  if (auto fig = find_tag(doc, 0, lead_end, [](const Tag& t) { return t.name == "figure"; })) {
    const auto fig_end = element_end(doc, *fig);
    auto img = find_tag(doc, fig->end, fig_end, [](const Tag& t) { return t.name == "img"; });
    auto cap = find_tag(doc, fig->end, fig_end, [](const Tag& t) { return t.name == "figcaption"; });
    if (img && cap) {
      const auto cap_end = element_end(doc, *cap);
      return finish(attribute(img->text, "src").value_or(""),
                    text_content(doc.substr(cap->end, cap_end - cap->end)));
    }
  }
  return std::nullopt;
}

// Fetches an encyclopedia page and returns its lead image and caption.
// 404 and pages without a captioned lead image give nullopt; 429/5xx throw a
// retriable TransportError.
inline std::optional<PageImage> scrape_page_image(const std::string& page_url, HttpClient& client) {
  const Url page = parse_url(page_url);
  HttpResponse res = client.get(page_url, {{"Accept", "text/html"}});
  if (res.status == 429 || res.status >= 500)
    throw TransportError("GET " + page_url + " returned HTTP " + std::to_string(res.status), res.status);
  if (res.status != 200) return std::nullopt;
  return extract_page_image(res.body, page);
}

// Rewrites an article URL onto a configured wiki base, so that fixture or
// mirror servers can stand in for the live site.
inline std::string rebase_article_url(const std::string& article_url, const std::string& wiki_base) {
  if (wiki_base.empty()) return article_url;
  const auto wiki = article_url.find("/wiki/");
  if (wiki == std::string::npos) return article_url;
  std::string base = wiki_base;
  while (!base.empty() && base.back() == '/') base.pop_back();
  return base + article_url.substr(wiki);
}

}  // namespace rlface::ingest
