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
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rlface/core/error.hpp"
#include "rlface/core/hash.hpp"
#include "rlface/core/rng.hpp"

namespace rlface::datamod {

// [0,5), [5,10), ..., [65,70), [70, inf).
struct BinScheme {
  static constexpr int kWidth = 5;
  static constexpr int kBins = 15;
};

inline int assign_bin(int rl_years) {
  if (rl_years < 0) throw StructuralError("negative rl_years " + std::to_string(rl_years));
  return std::min(rl_years / BinScheme::kWidth, BinScheme::kBins - 1);
}

// Groups example indices by bin.
inline std::vector<std::vector<std::size_t>> indices_by_bin(const std::vector<int>& rl_years) {
  std::vector<std::vector<std::size_t>> bins(BinScheme::kBins);
  for (std::size_t i = 0; i < rl_years.size(); ++i) bins[assign_bin(rl_years[i])].push_back(i);
  return bins;
}

// One epoch of training indices in which every nonempty bin contributes
// exactly as many entries as the largest bin: floor(max / n) full copies of
// the bin plus (max mod n) members drawn without replacement. The result is
// shuffled. Deterministic in (bins, seed).
inline std::vector<std::size_t> oversample_train(const std::vector<std::vector<std::size_t>>& bins,
                                                 std::uint64_t seed) {
  std::size_t largest = 0;
  for (const auto& b : bins) largest = std::max(largest, b.size());
  if (largest == 0) throw StructuralError("oversampling with every bin empty");
  Rng rng(derive_seed(seed, 0x6f7665727361ULL));
  std::vector<std::size_t> out;
  for (const auto& b : bins) {
    if (b.empty()) continue;
    const std::size_t copies = largest / b.size(), rest = largest % b.size();
    for (std::size_t c = 0; c < copies; ++c) out.insert(out.end(), b.begin(), b.end());
    if (rest) {
      std::vector<std::size_t> pool = b;
      // Partial Fisher-Yates: the first `rest` slots become the sample.
      for (std::size_t i = 0; i < rest; ++i) std::swap(pool[i], pool[i + rng.index(pool.size() - i)]);
      out.insert(out.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(rest));
    }
  }
  rng.shuffle(std::span<std::size_t>(out));
  return out;
}

enum class Split { train, val };

inline const char* to_string(Split s) { return s == Split::train ? "train" : "val"; }

// Person-level split keyed by a stable hash of (seed, person_id), so the
// assignment survives manifest reordering.
inline Split assign_split(const std::string& person_id, std::uint64_t seed, double train_ratio = 0.7) {
  if (!(train_ratio > 0.0 && train_ratio < 1.0)) throw ConfigError("split ratio must be in (0, 1)");
  const std::uint64_t h = mix_seed(fnv1a64(std::to_string(seed) + ":" + person_id));
  const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
  return u < train_ratio ? Split::train : Split::val;
}

}  // namespace rlface::datamod
