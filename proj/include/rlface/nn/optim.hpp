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
#include <unordered_map>
#include <vector>

#include "rlface/nn/layers.hpp"

namespace rlface::nn {

inline void zero_grad(const std::vector<ParamRef>& params) {
  for (const auto& p : params) p.param->grad.fill(0.0f);
}

// Adam with bias correction. Only trainable, non-buffer parameters move.
class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-7) : b1_(beta1), b2_(beta2), eps_(eps) {}

  // Gradients are divided by `grad_scale` (the batch size) before use.
  void step(const std::vector<ParamRef>& params, double lr, double grad_scale = 1.0) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (const auto& ref : params) {
      Parameter& p = *ref.param;
      if (!p.trainable || p.buffer) continue;
      auto& st = state_[&p];
      if (st.m.size() != p.value.size()) {
        st.m.assign(p.value.size(), 0.0f);
        st.v.assign(p.value.size(), 0.0f);
      }
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i] / grad_scale;
        st.m[i] = static_cast<float>(b1_ * st.m[i] + (1.0 - b1_) * g);
        st.v[i] = static_cast<float>(b2_ * st.v[i] + (1.0 - b2_) * g * g);
        const double mh = st.m[i] / c1, vh = st.v[i] / c2;
        p.value[i] -= static_cast<float>(lr * mh / (std::sqrt(vh) + eps_));
      }
    }
  }

  void reset() {
    state_.clear();
    t_ = 0;
  }

 private:
  struct State {
    std::vector<float> m, v;
  };
  double b1_, b2_, eps_;
  long long t_ = 0;
  std::unordered_map<const Parameter*, State> state_;
};

}  // namespace rlface::nn
