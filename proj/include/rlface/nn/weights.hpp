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

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "rlface/core/error.hpp"
#include "rlface/nn/layers.hpp"

namespace rlface::nn {

// Named tensors in the RLW1 container:
//   "RLW1" u32 count, then per tensor: u32 name_len, name, u32 ndim,
//   i64 dims[ndim], f32 data. Little endian.
using NamedTensors = std::map<std::string, Tensor>;

namespace detail {

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& in, const std::string& what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw Error("truncated weights file: " + what);
  return v;
}

}  // namespace detail

inline void write_weights(const std::filesystem::path& path, const std::vector<ParamRef>& params) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write("RLW1", 4);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(p.path.size()));
    out.write(p.path.data(), static_cast<std::streamsize>(p.path.size()));
    const auto& shape = p.param->value.shape();
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
    for (int d : shape) detail::put<std::int64_t>(out, d);
    out.write(reinterpret_cast<const char*>(p.param->value.data()),
              static_cast<std::streamsize>(p.param->value.size() * sizeof(float)));
  }
}

inline NamedTensors read_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact("weights file not found: " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "RLW1", 4) != 0) throw Error(path.string() + " is not an RLW1 file");
  const auto count = detail::take<std::uint32_t>(in, path.string());
  NamedTensors out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = detail::take<std::uint32_t>(in, path.string());
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw Error("truncated weights file: " + path.string());
    const auto ndim = detail::take<std::uint32_t>(in, path.string());
    std::vector<int> shape;
    for (std::uint32_t d = 0; d < ndim; ++d) shape.push_back(static_cast<int>(detail::take<std::int64_t>(in, path.string())));
    Tensor t(shape);
    if (!in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float))))
      throw Error("truncated weights file: " + path.string());
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

// Copies tensors into matching parameters. With `strict`, every parameter of
// the module must be present. Returns the number of parameters loaded.
inline std::size_t load_weights(Module& root, const NamedTensors& tensors, bool strict, const std::string& prefix = {}) {
  std::vector<ParamRef> params;
  root.collect(params, prefix);
  std::size_t loaded = 0;
  for (auto& p : params) {
    auto it = tensors.find(p.path);
    if (it == tensors.end()) {
      if (strict) throw Error("weights missing parameter '" + p.path + "'");
      continue;
    }
    if (it->second.size() != p.param->value.size())
      throw Error("weights shape mismatch for '" + p.path + "': file " + it->second.shape_str() + ", model " +
                  p.param->value.shape_str());
    std::copy(it->second.values().begin(), it->second.values().end(), p.param->value.data());
    ++loaded;
  }
  return loaded;
}

}  // namespace rlface::nn
