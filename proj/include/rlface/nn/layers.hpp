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

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "rlface/core/error.hpp"
#include "rlface/core/rng.hpp"
#include "rlface/nn/tensor.hpp"

namespace rlface::nn {

struct Parameter {
  std::string name;  // local name ("weight", "bias", ...)
  Tensor value;
  Tensor grad;
  bool trainable = true;
  bool buffer = false;  // running statistics: saved with weights, never optimized
};

// A named parameter as seen from the network root.
struct ParamRef {
  std::string path;
  Parameter* param;
};

inline std::string join_path(const std::string& prefix, const std::string& name) {
  if (prefix.empty()) return name;
  if (name.empty()) return prefix;
  return prefix + "." + name;
}

// Layer with explicit forward and backward passes. A module caches what its
// backward pass needs only while recording is on; frozen prefixes of a
// network run without recording and are never differentiated.
class Module {
 public:
  explicit Module(std::string name = {}) : name_(std::move(name)) {}
  virtual ~Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  const std::string& name() const { return name_; }
  virtual const char* type() const = 0;

  virtual Tensor forward(const Tensor& x, bool training) = 0;
  // Consumes d(loss)/d(output), accumulates parameter gradients and returns
  // d(loss)/d(input).
  virtual Tensor backward(const Tensor& /*grad*/) {
    throw StructuralError(std::string(type()) + " '" + name_ + "' does not support backward");
  }

  virtual void set_recording(bool on) { recording_ = on; }
  bool recording() const { return recording_; }

  // Visits this module and all descendants in definition order.
  virtual void visit(const std::function<void(Module&, const std::string&)>& fn, const std::string& prefix) {
    fn(*this, join_path(prefix, name_));
  }

  void collect(std::vector<ParamRef>& out, const std::string& prefix = {}) {
    visit(
        [&](Module& m, const std::string& path) {
          for (auto& p : m.params_) out.push_back({join_path(path, p.name), &p});
        },
        prefix);
  }

  std::vector<Parameter>& own_parameters() { return params_; }

 protected:
  Parameter& add_parameter(std::string name, std::vector<int> shape, bool trainable = true, bool buffer = false) {
    Tensor v(shape);
    params_.push_back({std::move(name), std::move(v), Tensor(std::move(shape)), trainable && !buffer, buffer});
    return params_.back();
  }
  Parameter& param(std::size_t i) { return params_[i]; }

  std::string name_;
  bool recording_ = false;

 private:
  std::vector<Parameter> params_;
};

using ModulePtr = std::unique_ptr<Module>;

namespace detail {

inline void im2col(const float* x, int c, int h, int w, int kh, int kw, int stride, int ph, int pw, int oh, int ow,
                   float* cols) {
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        float* row = cols + (static_cast<std::size_t>((ci * kh + ky) * kw + kx)) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - ph + ky;
          float* dst = row + static_cast<std::size_t>(oy) * ow;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + ow, 0.0f);
            continue;
          }
          const float* src = x + (static_cast<std::size_t>(ci) * h + iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pw + kx;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0f;
          }
        }
      }
    }
  }
}

inline void col2im(const float* cols, int c, int h, int w, int kh, int kw, int stride, int ph, int pw, int oh, int ow,
                   float* x) {
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const float* row = cols + (static_cast<std::size_t>((ci * kh + ky) * kw + kx)) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - ph + ky;
          if (iy < 0 || iy >= h) continue;
          float* dst = x + (static_cast<std::size_t>(ci) * h + iy) * w;
          const float* src = row + static_cast<std::size_t>(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pw + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

class Conv2d : public Module {
 public:
  Conv2d(std::string name, int in, int out, int kernel, int stride = 1, int pad = 0, bool bias = true)
      : Conv2d(std::move(name), in, out, kernel, kernel, stride, pad, pad, bias) {}
  // Rectangular kernel (kh x kw) with per-axis padding.
  Conv2d(std::string name, int in, int out, int kh, int kw, int stride, int ph, int pw, bool bias)
      : Module(std::move(name)), in_(in), out_(out), kh_(kh), kw_(kw), stride_(stride), ph_(ph), pw_(pw), bias_(bias) {
    add_parameter("weight", {out, in, kh, kw});
    if (bias) add_parameter("bias", {out});
  }
  const char* type() const override { return "Conv2d"; }
  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int kernel() const { return kh_; }
  Parameter& weight() { return param(0); }
  Parameter* bias() { return bias_ ? &param(1) : nullptr; }

  Tensor forward(const Tensor& x, bool) override {
    if (x.rank() != 4 || x.dim(1) != in_)
      throw StructuralError("Conv2d '" + name_ + "' expects (N, " + std::to_string(in_) + ", H, W), got " + x.shape_str());
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int oh = (h + 2 * ph_ - kh_) / stride_ + 1, ow = (w + 2 * pw_ - kw_) / stride_ + 1;
    if (oh <= 0 || ow <= 0) throw StructuralError("Conv2d '" + name_ + "' input too small: " + x.shape_str());
    Tensor y({n, out_, oh, ow});
    const int ckk = in_ * kh_ * kw_;
    ConstMatrixMap wmat(weight().value.data(), out_, ckk);
    RowMatrix cols;
    for (int i = 0; i < n; ++i) {
      const float* xi = x.data() + static_cast<std::size_t>(i) * in_ * h * w;
      MatrixMap yi(y.data() + static_cast<std::size_t>(i) * out_ * oh * ow, out_, oh * ow);
      if (pointwise()) {
        yi.noalias() = wmat * ConstMatrixMap(xi, in_, h * w);
      } else {
        cols.resize(ckk, oh * ow);
        detail::im2col(xi, in_, h, w, kh_, kw_, stride_, ph_, pw_, oh, ow, cols.data());
        yi.noalias() = wmat * cols;
      }
      if (bias_) yi.colwise() += Eigen::Map<const Eigen::VectorXf>(param(1).value.data(), out_);
    }
    if (recording_) input_ = x;
    return y;
  }

  Tensor backward(const Tensor& grad) override {
    const int n = input_.dim(0), h = input_.dim(2), w = input_.dim(3);
    const int oh = grad.dim(2), ow = grad.dim(3), ckk = in_ * kh_ * kw_;
    Tensor dx(input_.shape());
    ConstMatrixMap wmat(weight().value.data(), out_, ckk);
    MatrixMap dw(weight().grad.data(), out_, ckk);
    RowMatrix cols, dcols;
    for (int i = 0; i < n; ++i) {
      const float* xi = input_.data() + static_cast<std::size_t>(i) * in_ * h * w;
      ConstMatrixMap gi(grad.data() + static_cast<std::size_t>(i) * out_ * oh * ow, out_, oh * ow);
      float* dxi = dx.data() + static_cast<std::size_t>(i) * in_ * h * w;
      if (pointwise()) {
        if (weight().trainable) dw.noalias() += gi * ConstMatrixMap(xi, in_, h * w).transpose();
        MatrixMap(dxi, in_, h * w).noalias() = wmat.transpose() * gi;
      } else {
        if (weight().trainable) {
          cols.resize(ckk, oh * ow);
          detail::im2col(xi, in_, h, w, kh_, kw_, stride_, ph_, pw_, oh, ow, cols.data());
          dw.noalias() += gi * cols.transpose();
        }
        dcols.noalias() = wmat.transpose() * gi;
        detail::col2im(dcols.data(), in_, h, w, kh_, kw_, stride_, ph_, pw_, oh, ow, dxi);
      }
      if (bias_ && param(1).trainable)
        Eigen::Map<Eigen::VectorXf>(param(1).grad.data(), out_) += gi.rowwise().sum();
    }
    return dx;
  }

 private:
  bool pointwise() const { return kh_ == 1 && kw_ == 1 && stride_ == 1 && ph_ == 0 && pw_ == 0; }
  int in_, out_, kh_, kw_, stride_, ph_, pw_;
  bool bias_;
  Tensor input_;
};

class Linear : public Module {
 public:
  Linear(std::string name, int in, int out, bool bias = true) : Module(std::move(name)), in_(in), out_(out), bias_(bias) {
    add_parameter("weight", {out, in});
    if (bias) add_parameter("bias", {out});
  }
  const char* type() const override { return "Linear"; }
  int in_features() const { return in_; }
  int out_features() const { return out_; }
  Parameter& weight() { return param(0); }
  Parameter* bias() { return bias_ ? &param(1) : nullptr; }

  Tensor forward(const Tensor& x, bool) override {
    const int n = x.dim(0);
    if (static_cast<int>(x.stride0()) != in_)
      throw StructuralError("Linear '" + name_ + "' expects " + std::to_string(in_) + " features, got " + x.shape_str());
    Tensor y({n, out_});
    auto ym = y.matrix(n, out_);
    ym.noalias() = x.matrix(n, in_) * ConstMatrixMap(weight().value.data(), out_, in_).transpose();
    if (bias_) ym.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(param(1).value.data(), out_);
    if (recording_) input_ = x;
    return y;
  }

  Tensor backward(const Tensor& grad) override {
    const int n = input_.dim(0);
    auto g = grad.matrix(n, out_);
    auto x = input_.matrix(n, in_);
    if (weight().trainable) MatrixMap(weight().grad.data(), out_, in_).noalias() += g.transpose() * x;
    if (bias_ && param(1).trainable) Eigen::Map<Eigen::RowVectorXf>(param(1).grad.data(), out_) += g.colwise().sum();
    Tensor dx(input_.shape());
    dx.matrix(n, in_).noalias() = g * ConstMatrixMap(weight().value.data(), out_, in_);
    return dx;
  }

 private:
  int in_, out_;
  bool bias_;
  Tensor input_;
};

class ReLU : public Module {
 public:
  explicit ReLU(std::string name = {}) : Module(std::move(name)) {}
  const char* type() const override { return "ReLU"; }
  Tensor forward(const Tensor& x, bool) override {
    Tensor y = x;
    for (auto& v : y.values()) v = v > 0.0f ? v : 0.0f;
    if (recording_) output_ = y;
    return y;
  }
  Tensor backward(const Tensor& grad) override {
    Tensor dx = grad;
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (output_[i] <= 0.0f) dx[i] = 0.0f;
    return dx;
  }

 private:
  Tensor output_;
};

// Per-channel leaky rectifier with learned slopes (slopes are not trained here).
class PReLU : public Module {
 public:
  PReLU(std::string name, int channels) : Module(std::move(name)), channels_(channels) {
    add_parameter("weight", {channels}, false).value.fill(0.25f);
  }
  const char* type() const override { return "PReLU"; }
  Tensor forward(const Tensor& x, bool) override {
    if (x.rank() < 2 || x.dim(1) != channels_) throw StructuralError("PReLU '" + name_ + "' channel mismatch " + x.shape_str());
    Tensor y = x;
    const std::size_t inner = x.stride0() / static_cast<std::size_t>(channels_);
    const float* a = param(0).value.data();
    for (std::size_t i = 0; i < y.size(); ++i) {
      const std::size_t c = (i / inner) % static_cast<std::size_t>(channels_);
      if (y[i] < 0.0f) y[i] *= a[c];
    }
    if (recording_) input_ = x;
    return y;
  }
  Tensor backward(const Tensor& grad) override {
    Tensor dx = grad;
    const std::size_t inner = input_.stride0() / static_cast<std::size_t>(channels_);
    const float* a = param(0).value.data();
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (input_[i] < 0.0f) dx[i] *= a[(i / inner) % static_cast<std::size_t>(channels_)];
    return dx;
  }

 private:
  int channels_;
  Tensor input_;
};

class MaxPool2d : public Module {
 public:
  MaxPool2d(std::string name, int kernel, int stride, int pad = 0, bool ceil_mode = false)
      : Module(std::move(name)), k_(kernel), stride_(stride), pad_(pad), ceil_(ceil_mode) {}
  const char* type() const override { return "MaxPool2d"; }

  int out_size(int in) const {
    const int span = in + 2 * pad_ - k_;
    int o = (ceil_ ? (span + stride_ - 1) / stride_ : span / stride_) + 1;
    if (ceil_ && (o - 1) * stride_ >= in + pad_) --o;
    return o;
  }

  Tensor forward(const Tensor& x, bool) override {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int oh = out_size(h), ow = out_size(w);
    Tensor y({n, c, oh, ow});
    if (recording_) {
      argmax_.assign(y.size(), 0);
      in_shape_ = x.shape();
    }
    std::size_t o = 0;
    for (int plane = 0; plane < n * c; ++plane) {
      const float* src = x.data() + static_cast<std::size_t>(plane) * h * w;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox, ++o) {
          const int y0 = std::max(oy * stride_ - pad_, 0), y1 = std::min(oy * stride_ - pad_ + k_, h);
          const int x0 = std::max(ox * stride_ - pad_, 0), x1 = std::min(ox * stride_ - pad_ + k_, w);
          float best = -std::numeric_limits<float>::infinity();
          std::size_t arg = 0;
          for (int yy = y0; yy < y1; ++yy)
            for (int xx = x0; xx < x1; ++xx) {
              const float v = src[yy * w + xx];
              if (v > best) {
                best = v;
                arg = static_cast<std::size_t>(plane) * h * w + static_cast<std::size_t>(yy * w + xx);
              }
            }
          y[o] = best;
          if (recording_) argmax_[o] = arg;
        }
      }
    }
    return y;
  }

  Tensor backward(const Tensor& grad) override {
    Tensor dx(in_shape_);
    for (std::size_t i = 0; i < grad.size(); ++i) dx[argmax_[i]] += grad[i];
    return dx;
  }

 private:
  int k_, stride_, pad_;
  bool ceil_;
  std::vector<std::size_t> argmax_;
  std::vector<int> in_shape_;
};

// Mean over all spatial positions: (N, C, H, W) -> (N, C, 1, 1).
class GlobalAvgPool : public Module {
 public:
  explicit GlobalAvgPool(std::string name = {}) : Module(std::move(name)) {}
  const char* type() const override { return "GlobalAvgPool"; }
  Tensor forward(const Tensor& x, bool) override {
    const int n = x.dim(0), c = x.dim(1);
    const std::size_t hw = x.stride0() / static_cast<std::size_t>(c);
    Tensor y({n, c, 1, 1});
    for (std::size_t p = 0; p < y.size(); ++p) {
      double s = 0;
      for (std::size_t i = 0; i < hw; ++i) s += x[p * hw + i];
      y[p] = static_cast<float>(s / static_cast<double>(hw));
    }
    if (recording_) in_shape_ = x.shape();
    return y;
  }
  Tensor backward(const Tensor& grad) override {
    Tensor dx(in_shape_);
    const std::size_t hw = dx.size() / grad.size();
    for (std::size_t p = 0; p < grad.size(); ++p)
      for (std::size_t i = 0; i < hw; ++i) dx[p * hw + i] = grad[p] / static_cast<float>(hw);
    return dx;
  }

 private:
  std::vector<int> in_shape_;
};

// Inference-mode batch normalisation over axis 1 using running statistics.
// The affine scale and shift may be trained; the statistics are buffers.
class BatchNorm : public Module {
 public:
  BatchNorm(std::string name, int channels, float eps = 1e-5f) : Module(std::move(name)), channels_(channels), eps_(eps) {
    add_parameter("weight", {channels}).value.fill(1.0f);
    add_parameter("bias", {channels});
    add_parameter("running_mean", {channels}, false, true);
    add_parameter("running_var", {channels}, false, true).value.fill(1.0f);
  }
  const char* type() const override { return "BatchNorm"; }
  Tensor forward(const Tensor& x, bool) override {
    if (x.rank() < 2 || x.dim(1) != channels_) throw StructuralError("BatchNorm '" + name_ + "' channel mismatch " + x.shape_str());
    Tensor y = x;
    const std::size_t inner = x.stride0() / static_cast<std::size_t>(channels_);
    for (std::size_t i = 0; i < y.size(); ++i) {
      const std::size_t c = (i / inner) % static_cast<std::size_t>(channels_);
      y[i] = (y[i] - mean()[c]) * inv_std(c) * gamma()[c] + beta()[c];
    }
    if (recording_) input_ = x;
    return y;
  }
  Tensor backward(const Tensor& grad) override {
    Tensor dx = grad;
    const std::size_t inner = input_.stride0() / static_cast<std::size_t>(channels_);
    Parameter& g = param(0);
    Parameter& b = param(1);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const std::size_t c = (i / inner) % static_cast<std::size_t>(channels_);
      const float is = inv_std(c);
      if (g.trainable) g.grad[c] += grad[i] * (input_[i] - mean()[c]) * is;
      if (b.trainable) b.grad[c] += grad[i];
      dx[i] = grad[i] * gamma()[c] * is;
    }
    return dx;
  }

 private:
  const float* gamma() { return param(0).value.data(); }
  const float* beta() { return param(1).value.data(); }
  const float* mean() { return param(2).value.data(); }
  float inv_std(std::size_t c) { return 1.0f / std::sqrt(param(3).value[c] + eps_); }
  int channels_;
  float eps_;
  Tensor input_;
};

class Dropout : public Module {
 public:
  Dropout(std::string name, double rate, std::uint64_t seed) : Module(std::move(name)), rate_(rate), rng_(seed) {
    if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must lie in [0, 1)");
  }
  const char* type() const override { return "Dropout"; }
  double rate() const { return rate_; }
  void reseed(std::uint64_t seed) { rng_ = Rng(seed); }

  Tensor forward(const Tensor& x, bool training) override {
    if (!training || rate_ == 0.0) {
      if (recording_) mask_.clear();
      return x;
    }
    Tensor y = x;
    mask_.assign(x.size(), 0.0f);
    const float keep = static_cast<float>(1.0 / (1.0 - rate_));
    for (std::size_t i = 0; i < y.size(); ++i) {
      mask_[i] = rng_.uniform() >= rate_ ? keep : 0.0f;
      y[i] *= mask_[i];
    }
    return y;
  }
  Tensor backward(const Tensor& grad) override {
    if (mask_.empty()) return grad;
    Tensor dx = grad;
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= mask_[i];
    return dx;
  }

 private:
  double rate_;
  Rng rng_;
  std::vector<float> mask_;
};

class Flatten : public Module {
 public:
  explicit Flatten(std::string name = {}) : Module(std::move(name)) {}
  const char* type() const override { return "Flatten"; }
  Tensor forward(const Tensor& x, bool) override {
    if (recording_) in_shape_ = x.shape();
    return x.reshaped({x.dim(0), static_cast<int>(x.stride0())});
  }
  Tensor backward(const Tensor& grad) override { return grad.reshaped(in_shape_); }

 private:
  std::vector<int> in_shape_;
};

// Fixed per-channel map y = x * scale + shift[c]; converts [0, 1] input to
// the range a pretrained backbone expects.
class ChannelAffine : public Module {
 public:
  ChannelAffine(std::string name, float scale, std::vector<float> shift)
      : Module(std::move(name)), scale_(scale), shift_(std::move(shift)) {}
  const char* type() const override { return "ChannelAffine"; }
  Tensor forward(const Tensor& x, bool) override {
    const int c = static_cast<int>(shift_.size());
    if (x.rank() < 2 || x.dim(1) != c) throw StructuralError("ChannelAffine '" + name_ + "' channel mismatch " + x.shape_str());
    Tensor y = x;
    const std::size_t inner = x.stride0() / static_cast<std::size_t>(c);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = y[i] * scale_ + shift_[(i / inner) % shift_.size()];
    return y;
  }
  Tensor backward(const Tensor& grad) override {
    Tensor dx = grad;
    for (auto& v : dx.values()) v *= scale_;
    return dx;
  }

 private:
  float scale_;
  std::vector<float> shift_;
};

// Runs children in order.
class Sequential : public Module {
 public:
  explicit Sequential(std::string name = {}) : Module(std::move(name)) {}
  const char* type() const override { return "Sequential"; }

  template <typename M, typename... Args>
  M& add(Args&&... args) {
    auto m = std::make_unique<M>(std::forward<Args>(args)...);
    M& ref = *m;
    children_.push_back(std::move(m));
    return ref;
  }
  Module& add_module(ModulePtr m) {
    children_.push_back(std::move(m));
    return *children_.back();
  }

  std::size_t size() const { return children_.size(); }
  Module& at(std::size_t i) { return *children_.at(i); }

  Tensor forward(const Tensor& x, bool training) override { return forward_range(x, 0, children_.size(), training); }

  // Runs children [from, to).
  Tensor forward_range(const Tensor& x, std::size_t from, std::size_t to, bool training) {
    Tensor h = x;
    for (std::size_t i = from; i < to && i < children_.size(); ++i) h = children_[i]->forward(h, training);
    return h;
  }

  // Differentiates back through the recorded suffix of children. Returns an
  // empty tensor when the walk stopped at a child that was not recorded.
  Tensor backward(const Tensor& grad) override {
    Tensor g = grad;
    for (std::size_t i = children_.size(); i-- > 0;) {
      if (!children_[i]->recording()) return {};
      g = children_[i]->backward(g);
    }
    return g;
  }

  void set_recording(bool on) override {
    recording_ = on;
    for (auto& c : children_) c->set_recording(on);
  }

  // Records only children from index `first` onwards.
  void set_recording_from(std::size_t first) {
    recording_ = first < children_.size();
    for (std::size_t i = 0; i < children_.size(); ++i) children_[i]->set_recording(i >= first);
  }

  void visit(const std::function<void(Module&, const std::string&)>& fn, const std::string& prefix) override {
    const std::string path = join_path(prefix, name_);
    fn(*this, path);
    for (auto& c : children_) c->visit(fn, path);
  }

 private:
  std::vector<ModulePtr> children_;
};

// Runs every branch on the same input and concatenates outputs along axis 1.
class Concat : public Module {
 public:
  explicit Concat(std::string name = {}) : Module(std::move(name)) {}
  const char* type() const override { return "Concat"; }
  Sequential& branch(std::string name) {
    branches_.push_back(std::make_unique<Sequential>(std::move(name)));
    return *branches_.back();
  }

  Tensor forward(const Tensor& x, bool training) override {
    std::vector<Tensor> outs;
    int channels = 0;
    for (auto& b : branches_) {
      outs.push_back(b->forward(x, training));
      channels += outs.back().dim(1);
    }
    const int n = outs[0].dim(0);
    std::vector<int> shape = outs[0].shape();
    shape[1] = channels;
    Tensor y(shape);
    const std::size_t inner = outs[0].stride0() / static_cast<std::size_t>(outs[0].dim(1));
    for (int i = 0; i < n; ++i) {
      float* dst = y.data() + static_cast<std::size_t>(i) * channels * inner;
      for (const auto& o : outs) {
        const std::size_t len = o.stride0();
        std::copy(o.data() + i * len, o.data() + (i + 1) * len, dst);
        dst += len;
      }
    }
    if (recording_) {
      widths_.clear();
      for (const auto& o : outs) widths_.push_back(o.dim(1));
    }
    return y;
  }

  Tensor backward(const Tensor& grad) override {
    const int n = grad.dim(0);
    const std::size_t inner = grad.stride0() / static_cast<std::size_t>(grad.dim(1));
    Tensor dx;
    std::size_t offset = 0;
    for (std::size_t b = 0; b < branches_.size(); ++b) {
      std::vector<int> shape = grad.shape();
      shape[1] = widths_[b];
      Tensor gb(shape);
      const std::size_t len = static_cast<std::size_t>(widths_[b]) * inner;
      for (int i = 0; i < n; ++i)
        std::copy(grad.data() + i * grad.stride0() + offset, grad.data() + i * grad.stride0() + offset + len,
                  gb.data() + i * len);
      offset += len;
      Tensor d = branches_[b]->backward(gb);
      if (dx.empty()) dx = std::move(d);
      else
        for (std::size_t k = 0; k < dx.size(); ++k) dx[k] += d[k];
    }
    return dx;
  }

  void set_recording(bool on) override {
    recording_ = on;
    for (auto& b : branches_) b->set_recording(on);
  }
  void visit(const std::function<void(Module&, const std::string&)>& fn, const std::string& prefix) override {
    const std::string path = join_path(prefix, name_);
    fn(*this, path);
    for (auto& b : branches_) b->visit(fn, path);
  }

 private:
  std::vector<std::unique_ptr<Sequential>> branches_;
  std::vector<int> widths_;
};

// y = act(shortcut(x) + scale * body(x)); the shortcut is the identity when
// not given.
class Residual : public Module {
 public:
  Residual(std::string name, float scale = 1.0f, bool relu = true)
      : Module(std::move(name)), scale_(scale), relu_(relu), body_(std::make_unique<Sequential>("")) {}
  const char* type() const override { return "Residual"; }
  Sequential& body() { return *body_; }
  Sequential& shortcut() {
    if (!shortcut_) shortcut_ = std::make_unique<Sequential>("downsample");
    return *shortcut_;
  }

  Tensor forward(const Tensor& x, bool training) override {
    Tensor y = body_->forward(x, training);
    Tensor s = shortcut_ ? shortcut_->forward(x, training) : x;
    if (s.shape() != y.shape()) throw StructuralError("Residual '" + name_ + "' branch shapes differ");
    for (std::size_t i = 0; i < y.size(); ++i) {
      const float v = s[i] + scale_ * y[i];
      y[i] = relu_ && v < 0.0f ? 0.0f : v;
    }
    if (recording_) output_ = y;
    return y;
  }

  Tensor backward(const Tensor& grad) override {
    Tensor g = grad;
    if (relu_)
      for (std::size_t i = 0; i < g.size(); ++i)
        if (output_[i] <= 0.0f) g[i] = 0.0f;
    Tensor gb = g;
    for (auto& v : gb.values()) v *= scale_;
    Tensor dx = body_->backward(gb);
    Tensor ds = shortcut_ ? shortcut_->backward(g) : g;
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += ds[i];
    return dx;
  }

  void set_recording(bool on) override {
    recording_ = on;
    body_->set_recording(on);
    if (shortcut_) shortcut_->set_recording(on);
  }
  void visit(const std::function<void(Module&, const std::string&)>& fn, const std::string& prefix) override {
    const std::string path = join_path(prefix, name_);
    fn(*this, path);
    body_->visit(fn, path);
    if (shortcut_) shortcut_->visit(fn, path);
  }

 private:
  float scale_;
  bool relu_;
  std::unique_ptr<Sequential> body_;
  std::unique_ptr<Sequential> shortcut_;
  Tensor output_;
};

// He-normal weights, zero biases, identity batch norms.
inline void init_he(Module& root, Rng& rng) {
  root.visit(
      [&](Module& m, const std::string&) {
        auto& ps = m.own_parameters();
        if (std::string(m.type()) == "Conv2d" || std::string(m.type()) == "Linear") {
          Tensor& w = ps[0].value;
          const double fan_in = static_cast<double>(w.stride0());
          const double sd = std::sqrt(2.0 / fan_in);
          for (auto& v : w.values()) v = static_cast<float>(rng.normal() * sd);
          if (ps.size() > 1) ps[1].value.fill(0.0f);
        }
      },
      "");
}

}  // namespace rlface::nn
