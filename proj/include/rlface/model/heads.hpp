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
#include <span>
#include <vector>

#include "rlface/core/error.hpp"
#include "rlface/model/config.hpp"

namespace rlface::model {

// Huber loss of the error e = pred - target.
inline double huber_loss(double pred, double target, double delta) {
  const double e = pred - target, a = std::abs(e);
  return a <= delta ? 0.5 * e * e : delta * (a - 0.5 * delta);
}

// d(huber)/d(pred).
inline double huber_grad(double pred, double target, double delta) {
  return std::clamp(pred - target, -delta, delta);
}

inline double huber_loss_mean(std::span<const double> preds, std::span<const double> targets, double delta) {
  if (preds.size() != targets.size() || preds.empty()) throw StructuralError("huber_loss_mean needs equal nonempty inputs");
  double s = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += huber_loss(preds[i], targets[i], delta);
  return s / static_cast<double>(preds.size());
}

// Probabilities over labels 0..100.
struct PredictionDistribution {
  std::vector<double> probs;

  void validate() const {
    if (probs.size() != static_cast<std::size_t>(kNumLabels))
      throw StructuralError("distribution must have " + std::to_string(kNumLabels) + " entries");
    double s = 0;
    for (double p : probs) {
      if (!(p >= 0.0)) throw StructuralError("distribution has a negative or NaN probability");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-6) throw StructuralError("distribution sums to " + std::to_string(s));
  }
};

inline PredictionDistribution softmax(std::span<const float> logits) {
  PredictionDistribution d;
  d.probs.resize(logits.size());
  const float mx = *std::max_element(logits.begin(), logits.end());
  double s = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) s += d.probs[i] = std::exp(static_cast<double>(logits[i]) - mx);
  for (auto& p : d.probs) p /= s;
  return d;
}

// Raw regression output: the single unit as is.
inline double head_regression(std::span<const float> output) {
  if (output.size() != 1) throw StructuralError("regression head expects 1 output");
  return output[0];
}

inline double head_expected_value(const PredictionDistribution& d) {
  d.validate();
  double e = 0;
  for (std::size_t i = 0; i < d.probs.size(); ++i) e += static_cast<double>(i) * d.probs[i];
  return e;
}

// Argmax; the smallest label wins ties.
inline int head_classification(const PredictionDistribution& d) {
  if (d.probs.empty()) throw StructuralError("empty distribution");
  return static_cast<int>(std::max_element(d.probs.begin(), d.probs.end()) - d.probs.begin());
}

// Classification target for a label in years.
inline int class_label(double target) {
  return std::clamp(static_cast<int>(std::lround(target)), 0, kNumLabels - 1);
}

// Prediction in years from one output row.
inline double decode_output(HeadKind head, std::span<const float> row) {
  switch (head) {
    case HeadKind::regression: return head_regression(row);
    case HeadKind::expected_value: return head_expected_value(softmax(row));
    case HeadKind::classification: return head_classification(softmax(row));
  }
  return 0.0;
}

// Training loss for one output row; writes d(loss)/d(row) into `grad`.
// Regression and expected value use Huber on the prediction; classification
// uses cross-entropy against the rounded label.
inline double head_loss(HeadKind head, std::span<const float> row, double target, double delta, std::span<float> grad) {
  switch (head) {
    case HeadKind::regression: {
      const double y = head_regression(row);
      grad[0] = static_cast<float>(huber_grad(y, target, delta));
      return huber_loss(y, target, delta);
    }
    case HeadKind::expected_value: {
      const auto d = softmax(row);
      double e = 0;
      for (std::size_t i = 0; i < d.probs.size(); ++i) e += static_cast<double>(i) * d.probs[i];
      const double g = huber_grad(e, target, delta);
      for (std::size_t j = 0; j < d.probs.size(); ++j)
        grad[j] = static_cast<float>(g * d.probs[j] * (static_cast<double>(j) - e));
      return huber_loss(e, target, delta);
    }
    case HeadKind::classification: {
      const auto d = softmax(row);
      const int t = class_label(target);
      for (std::size_t j = 0; j < d.probs.size(); ++j)
        grad[j] = static_cast<float>(d.probs[j] - (static_cast<int>(j) == t ? 1.0 : 0.0));
      return -std::log(std::max(d.probs[static_cast<std::size_t>(t)], 1e-300));
    }
  }
  return 0.0;
}

}  // namespace rlface::model
