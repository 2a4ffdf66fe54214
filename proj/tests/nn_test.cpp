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


#include <cmath>
#include <functional>

#include <gtest/gtest.h>

#include "rlface/nn/layers.hpp"
#include "rlface/nn/optim.hpp"
#include "rlface/nn/weights.hpp"

namespace rlface::nn {
namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<float>(rng.normal() * scale);
  return t;
}

double weighted_sum(const Tensor& y, const Tensor& w) {
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += static_cast<double>(y[i]) * w[i];
  return s;
}

// Central differences of L = sum(w * f(x)) against the analytic input
// gradient and every trainable parameter gradient.
void check_gradients(Module& m, Tensor x, std::uint64_t seed, double eps = 1e-2, double tol = 2e-2) {
  Rng rng(seed);
  m.set_recording(true);
  std::vector<ParamRef> params;
  m.collect(params);
  zero_grad(params);
  const Tensor y = m.forward(x, false);
  const Tensor w = random_tensor(y.shape(), rng);
  const Tensor dx = m.backward(w);
  m.set_recording(false);
  auto loss = [&](const Tensor& in) { return weighted_sum(m.forward(in, false), w); };
  auto close = [&](double a, double n, const std::string& what) {
    EXPECT_NEAR(a, n, tol * std::max({1.0, std::abs(a), std::abs(n)})) << what;
  };
  for (std::size_t i = 0; i < x.size(); i += std::max<std::size_t>(1, x.size() / 23)) {
    Tensor p = x, q = x;
    p[i] += static_cast<float>(eps);
    q[i] -= static_cast<float>(eps);
    close(dx[i], (loss(p) - loss(q)) / (2 * eps), "input " + std::to_string(i));
  }
  for (auto& ref : params) {
    if (!ref.param->trainable) continue;
    Tensor& v = ref.param->value;
    for (std::size_t i = 0; i < v.size(); i += std::max<std::size_t>(1, v.size() / 11)) {
      const float orig = v[i];
      v[i] = orig + static_cast<float>(eps);
      const double lp = loss(x);
      v[i] = orig - static_cast<float>(eps);
      const double lq = loss(x);
      v[i] = orig;
      close(ref.param->grad[i], (lp - lq) / (2 * eps), ref.path + "[" + std::to_string(i) + "]");
    }
  }
}

void randomize(Module& m, Rng& rng) {
  std::vector<ParamRef> params;
  m.collect(params);
  for (auto& p : params)
    for (auto& v : p.param->value.values()) v = static_cast<float>(p.param->buffer ? 0.5 + rng.uniform() : rng.normal() * 0.5);
}

TEST(NnGradients, Conv2dSquareAndRectangular) {
  Rng rng(1);
  Conv2d sq("c", 2, 3, 3, 2, 1);
  randomize(sq, rng);
  check_gradients(sq, random_tensor({2, 2, 7, 6}, rng), 11);
  Conv2d rect("r", 2, 3, 1, 5, 1, 0, 2, false);
  randomize(rect, rng);
  check_gradients(rect, random_tensor({1, 2, 6, 7}, rng), 12);
  Conv2d point("p", 3, 4, 1);
  randomize(point, rng);
  check_gradients(point, random_tensor({2, 3, 4, 4}, rng), 13);
}

TEST(NnGradients, LinearBatchNormPool) {
  Rng rng(2);
  Linear lin("l", 6, 4);
  randomize(lin, rng);
  check_gradients(lin, random_tensor({3, 6}, rng), 21);
  BatchNorm bn("b", 3);
  randomize(bn, rng);
  check_gradients(bn, random_tensor({2, 3, 4, 4}, rng), 22);
  MaxPool2d pool("m", 3, 2, 0, true);
  check_gradients(pool, random_tensor({1, 2, 8, 8}, rng), 23);
  GlobalAvgPool gap("g");
  check_gradients(gap, random_tensor({2, 3, 3, 3}, rng), 24);
  ChannelAffine aff("a", 2.5f, {0.1f, -0.2f, 0.3f});
  check_gradients(aff, random_tensor({1, 3, 2, 2}, rng), 25);
}

TEST(NnGradients, ResidualConcatSequential) {
  Rng rng(32);
  Residual res("res", 0.3f, true);
  auto& cat = res.body().add<Concat>("");
  cat.branch("b0").add<Conv2d>("conv", 4, 2, 1);
  auto& b1 = cat.branch("b1");
  b1.add<Conv2d>("0", 4, 2, 3, 1, 1);
  b1.add<ReLU>("relu");
  res.body().add<Conv2d>("proj", 4, 4, 1);
  randomize(res, rng);
  check_gradients(res, random_tensor({2, 4, 5, 5}, rng), 31, 1e-3);

  Residual down("down");
  down.body().add<Conv2d>("conv", 2, 4, 3, 2, 1);
  down.shortcut().add<Conv2d>("0", 2, 4, 1, 2, 0, false);
  randomize(down, rng);
  check_gradients(down, random_tensor({1, 2, 6, 6}, rng), 32);
}

TEST(NnLayers, RectangularConvMatchesDirectSum) {
  Rng rng(4);
  Conv2d c("c", 2, 1, 3, 1, 1, 1, 0, true);
  randomize(c, rng);
  const Tensor x = random_tensor({1, 2, 4, 3}, rng);
  const Tensor y = c.forward(x, false);
  ASSERT_EQ(y.shape(), (std::vector<int>{1, 1, 4, 3}));
  const Tensor& w = c.weight().value;
  for (int oy = 0; oy < 4; ++oy)
    for (int ox = 0; ox < 3; ++ox) {
      double s = c.bias()->value[0];
      for (int ci = 0; ci < 2; ++ci)
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = oy + ky - 1;
          if (iy < 0 || iy >= 4) continue;
          s += w[static_cast<std::size_t>(ci * 3 + ky)] * x[static_cast<std::size_t>((ci * 4 + iy) * 3 + ox)];
        }
      EXPECT_NEAR(y[static_cast<std::size_t>(oy * 3 + ox)], s, 1e-5);
    }
}

TEST(NnLayers, DropoutIsIdentityInEvalAndScaledInTraining) {
  Dropout d("d", 0.5, 9);
  Tensor x({1, 1000}, 1.0f);
  EXPECT_EQ(d.forward(x, false), x);
  const Tensor y = d.forward(x, true);
  int zeros = 0;
  for (float v : y.values()) {
    EXPECT_TRUE(v == 0.0f || v == 2.0f);
    zeros += v == 0.0f;
  }
  EXPECT_GT(zeros, 400);
  EXPECT_LT(zeros, 600);
  EXPECT_THROW(Dropout("x", 1.0, 0), ConfigError);
}

TEST(NnOptim, AdamSkipsFrozenAndBuffers) {
  BatchNorm bn("bn", 2);
  std::vector<ParamRef> params;
  bn.collect(params);
  params[0].param->trainable = false;
  for (auto& p : params) p.param->grad.fill(1.0f);
  std::vector<Tensor> values;
  for (auto& p : params) values.push_back(p.param->value);
  Adam adam;
  adam.step(params, 0.1);
  EXPECT_EQ(params[0].param->value, values[0]);
  EXPECT_NE(params[1].param->value, values[1]);
  EXPECT_EQ(params[2].param->value, values[2]);
  EXPECT_EQ(params[3].param->value, values[3]);
}

TEST(NnOptim, AdamFirstStepMovesByLearningRate) {
  Linear lin("l", 1, 1, false);
  std::vector<ParamRef> params;
  lin.collect(params);
  params[0].param->grad[0] = 3.0f;
  Adam adam;
  adam.step(params, 0.01);
  // Bias-corrected m/sqrt(v) is sign(g) on the first step.
  EXPECT_NEAR(params[0].param->value[0], -0.01, 1e-6);
}

TEST(NnWeights, RoundTripAndStrictLoad) {
  Rng rng(5);
  Sequential a("");
  a.add<Conv2d>("c", 1, 2, 3);
  a.add<BatchNorm>("bn", 2);
  randomize(a, rng);
  std::vector<ParamRef> pa;
  a.collect(pa);
  const auto path = std::filesystem::temp_directory_path() / "rlface_nn_weights.rlw";
  write_weights(path, pa);
  Sequential b("");
  b.add<Conv2d>("c", 1, 2, 3);
  b.add<BatchNorm>("bn", 2);
  EXPECT_EQ(load_weights(b, read_weights(path), true), 6u);
  std::vector<ParamRef> pb;
  b.collect(pb);
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i].param->value, pb[i].param->value);
  Sequential c("");
  c.add<Conv2d>("c", 1, 2, 3);
  c.add<Conv2d>("extra", 2, 2, 1);
  EXPECT_THROW(load_weights(c, read_weights(path), true), Error);
  EXPECT_THROW(read_weights(path.string() + ".missing"), MissingArtifact);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace rlface::nn
