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
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "rlface/core/error.hpp"

namespace rlface::labeling {

enum class CauseClass { natural, unnatural, pandemic_covid, unknown };

inline const char* to_string(CauseClass c) {
  switch (c) {
    case CauseClass::natural: return "natural";
    case CauseClass::unnatural: return "unnatural";
    case CauseClass::pandemic_covid: return "pandemic_covid";
    case CauseClass::unknown: return "unknown";
  }
  return "unknown";
}

inline CauseClass parse_cause_class(std::string_view s) {
  if (s == "natural") return CauseClass::natural;
  if (s == "unnatural") return CauseClass::unnatural;
  if (s == "pandemic_covid") return CauseClass::pandemic_covid;
  throw ConfigError("unknown cause class '" + std::string(s) + "'");
}

// Lower-cased, whitespace-collapsed key.
inline std::string normalise_cause(std::string_view s) {
  std::string out;
  bool space = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      space = !out.empty();
      continue;
    }
    if (space) out.push_back(' ');
    space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

// Maps cause-of-death labels (or graph ids) to a manner class. Lookups are
// case-insensitive; causes missing from the table are `unknown`, which the
// filters treat as natural.
class CauseMannerMap {
 public:
  CauseMannerMap() = default;

  void set(std::string_view cause, CauseClass cls) { entries_[normalise_cause(cause)] = cls; }

  CauseClass classify(std::string_view cause) const {
    auto it = entries_.find(normalise_cause(cause));
    return it == entries_.end() ? CauseClass::unknown : it->second;
  }

  std::size_t size() const { return entries_.size(); }

  // Tab-separated "cause<TAB>class" lines; '#' starts a comment line.
  static CauseMannerMap parse(std::string_view text, const std::string& origin = "cause map") {
    CauseMannerMap m;
    std::size_t lineno = 0, pos = 0;
    while (pos <= text.size()) {
      auto eol = text.find('\n', pos);
      if (eol == std::string_view::npos) eol = text.size();
      std::string_view line = text.substr(pos, eol - pos);
      pos = eol + 1;
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      const auto first = line.find_first_not_of(" \t");
      if (first == std::string_view::npos || line[first] == '#') continue;
      const auto tab = line.rfind('\t');
      if (tab == std::string_view::npos)
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected cause<TAB>class");
      auto cls = line.substr(tab + 1);
      while (!cls.empty() && cls.back() == ' ') cls.remove_suffix(1);
      m.set(line.substr(0, tab), parse_cause_class(cls));
    }
    return m;
  }

  static CauseMannerMap load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifact("cause map not found: " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse(text, path.string());
  }

 private:
  std::map<std::string, CauseClass> entries_;
};

// Splits the '|'-joined cause field of a PersonRecord.
inline std::vector<std::string> split_causes(std::string_view joined) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= joined.size()) {
    auto bar = joined.find('|', pos);
    if (bar == std::string_view::npos) bar = joined.size();
    if (bar > pos) out.emplace_back(joined.substr(pos, bar - pos));
    pos = bar + 1;
  }
  return out;
}

}  // namespace rlface::labeling
