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

namespace rlface::ingest {

struct CaptionParse {
  std::string caption;
  std::optional<int> extracted_year;
  int match_count = 0;
};

// Finds year tokens in a caption: maximal runs of ASCII digits that are exactly
// four long and fall in [1900, 2099]. A run longer than four digits ("41992")
// is not a year. The year is extracted only when exactly one token matches.
inline CaptionParse parse_caption_year(std::string_view caption) {
  CaptionParse out{std::string(caption), std::nullopt, 0};
  int last = 0;
  std::size_t i = 0;
  while (i < caption.size()) {
    if (!std::isdigit(static_cast<unsigned char>(caption[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < caption.size() && std::isdigit(static_cast<unsigned char>(caption[j]))) ++j;
    if (j - i == 4) {
      const int v = std::stoi(std::string(caption.substr(i, 4)));
      if (v >= 1900 && v <= 2099) {
        ++out.match_count;
        last = v;
      }
    }
    i = j;
  }
  if (out.match_count == 1) out.extracted_year = last;
  return out;
}

}  // namespace rlface::ingest
