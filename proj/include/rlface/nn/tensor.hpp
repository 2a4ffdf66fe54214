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
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rlface/core/error.hpp"

namespace rlface::nn {

// 64-byte aligned storage. Eigen picks its vectorised code path from the
// data alignment, so a fixed alignment keeps float results reproducible
// from run to run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator&) { return true; }
};

using FloatBuffer = std::vector<float, AlignedAllocator<float>>;

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

// Dense float tensor, row-major. Images are (N, C, H, W); feature batches are
// (N, F).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, float fill = 0.0f)
      : shape_(std::move(shape)), data_(count(shape_), fill) {}
  Tensor(std::vector<int> shape, const std::vector<float>& data)
      : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    if (data_.size() != count(shape_)) throw StructuralError("tensor data does not match shape");
  }
  Tensor(std::vector<int> shape, FloatBuffer data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != count(shape_)) throw StructuralError("tensor data does not match shape");
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i < 0 ? rank() + i : i)); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }
  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  // Elements per leading-axis slice.
  std::size_t stride0() const { return shape_.empty() || shape_[0] == 0 ? 0 : data_.size() / static_cast<std::size_t>(shape_[0]); }

  MatrixMap matrix(int rows, int cols) {
    check_count(rows, cols);
    return MatrixMap(data(), rows, cols);
  }
  ConstMatrixMap matrix(int rows, int cols) const {
    check_count(rows, cols);
    return ConstMatrixMap(data(), rows, cols);
  }
  // View as (shape[0], everything else).
  MatrixMap rows() { return matrix(dim(0), static_cast<int>(stride0())); }
  ConstMatrixMap rows() const { return matrix(dim(0), static_cast<int>(stride0())); }

  Tensor reshaped(std::vector<int> shape) const {
    if (count(shape) != data_.size()) throw StructuralError("reshape changes element count");
    return Tensor(std::move(shape), data_);
  }

  void fill(float v) { std::fill(data_.begin(), data_.end(), v); }

  // Copy of slice `i` of the leading axis.
  Tensor slice0(int i) const {
    std::vector<int> s = shape_;
    s[0] = 1;
    const auto n = stride0();
    return Tensor(std::move(s), FloatBuffer(data_.begin() + static_cast<std::ptrdiff_t>(i * n),
                                                   data_.begin() + static_cast<std::ptrdiff_t>((i + 1) * n)));
  }

  static std::size_t count(const std::vector<int>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           [](std::size_t a, int d) { return a * static_cast<std::size_t>(d); });
  }

  std::string shape_str() const {
    std::string s = "(";
    for (std::size_t i = 0; i < shape_.size(); ++i) s += (i ? ", " : "") + std::to_string(shape_[i]);
    return s + ")";
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  void check_count(int rows, int cols) const {
    if (static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) != data_.size())
      throw StructuralError("matrix view " + std::to_string(rows) + "x" + std::to_string(cols) +
                            " does not match tensor " + shape_str());
  }

  std::vector<int> shape_;
  FloatBuffer data_;
};

// Stacks equally shaped tensors of shape (1, ...) or (...) along a new or
// existing leading axis.
inline Tensor concat0(const std::vector<Tensor>& parts) {
  if (parts.empty()) return {};
  std::vector<int> shape = parts.front().shape();
  int n = 0;
  for (const auto& p : parts) {
    if (p.rank() != static_cast<int>(shape.size()) ||
        !std::equal(p.shape().begin() + 1, p.shape().end(), shape.begin() + 1))
      throw StructuralError("concat0 shape mismatch");
    n += p.dim(0);
  }
  shape[0] = n;
  Tensor out(shape);
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.values().begin(), p.values().end(), out.data() + off);
    off += p.size();
  }
  return out;
}

}  // namespace rlface::nn
