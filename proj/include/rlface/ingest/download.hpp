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

#include <filesystem>
#include <string>
#include <string_view>
#include <thread>

#include "rlface/core/error.hpp"
#include "rlface/core/hash.hpp"
#include "rlface/ingest/http.hpp"

namespace rlface::ingest {

// File extension from the leading bytes, or empty when the bytes are not a
// supported raster format.
inline std::string sniff_image_extension(std::string_view bytes) {
  auto starts = [&](std::string_view magic) { return bytes.substr(0, magic.size()) == magic; };
  if (starts("\xFF\xD8\xFF")) return ".jpg";
  if (starts("\x89PNG\r\n\x1A\n")) return ".png";
  if (starts("GIF87a") || starts("GIF89a")) return ".gif";
  if (bytes.size() > 12 && starts("RIFF") && bytes.substr(8, 4) == "WEBP") return ".webp";
  if (starts("II*\0") || starts("MM\0*")) return ".tif";
  return {};
}

// Stores the bytes at `image_url` under `<store>/<sha256><ext>`. Downloading
// the same content twice yields the same path and a single file.
// Throws Rejection("not an image") for non-image responses and
// TransportError for network failures and 429/5xx.
inline std::filesystem::path download_image(const std::string& image_url,
                                            const std::filesystem::path& store,
                                            HttpClient& client) {
  HttpResponse res = client.get(image_url, {{"Accept", "image/*"}});
  if (res.status == 429 || res.status >= 500)
    throw TransportError("GET " + image_url + " returned HTTP " + std::to_string(res.status), res.status);
  if (res.status != 200) throw Rejection("HTTP " + std::to_string(res.status));
  const bool declared_image = res.content_type.rfind("image/", 0) == 0;
  const std::string ext = sniff_image_extension(res.body);
  if (!declared_image || ext.empty()) throw Rejection("not an image");
  const auto path = store / (sha256_hex(res.body) + ext);
  if (!std::filesystem::exists(path)) {
    // Concurrent workers may fetch identical content; rename is atomic.
    const auto tmp = path.string() + ".part" +
                     std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
    write_file(tmp, res.body);
    std::filesystem::rename(tmp, path);
  }
  return path;
}

}  // namespace rlface::ingest
