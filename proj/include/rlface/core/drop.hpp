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

#include <string>

#include <json.hpp>

namespace rlface {

// A record removed by a pipeline stage, with a machine-readable reason.
struct DropEntry {
  std::string person_id;
  std::string stage;
  std::string reason;
  friend bool operator==(const DropEntry&, const DropEntry&) = default;
};

inline void to_json(nlohmann::json& j, const DropEntry& d) {
  j = nlohmann::json{{"person_id", d.person_id}, {"stage", d.stage}, {"reason", d.reason}};
}

inline void from_json(const nlohmann::json& j, DropEntry& d) {
  d.person_id = j.at("person_id").get<std::string>();
  d.stage = j.value("stage", "");
  d.reason = j.at("reason").get<std::string>();
}

}  // namespace rlface
