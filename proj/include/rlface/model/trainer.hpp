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
#include <sstream>
#include <string>
#include <vector>

#include "rlface/datamod/preprocess.hpp"
#include "rlface/datamod/streams.hpp"
#include "rlface/model/network.hpp"
#include "rlface/nn/optim.hpp"

namespace rlface::model {

struct EpochRecord {
  int epoch = 0;  // 1-based, counted across stages
  int stage = 0;  // 1-based
  double learning_rate = 0;
  double train_loss = 0, train_mae = 0;
  double val_loss = 0, val_mae = 0;
};

struct TrainOptions {
  // Random light/flip/crop augmentation. Without it the frozen part of the
  // backbone is run once per stage and its outputs are reused.
  bool augment = true;
  datamod::AugmentConfig augment_cfg;
  // Leave the network at the best-validation weights when training ends.
  bool restore_best = true;
  std::function<void(const EpochRecord&)> on_epoch;
  std::function<void(std::size_t stage, RlNet&)> on_stage_end;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_mae = std::numeric_limits<double>::infinity();
  std::vector<nn::Tensor> best_weights;  // parallel to RlNet::parameters()
};

// User-facing value: RL cannot be negative.
inline double clamp_prediction(double raw) { return raw < 0.0 ? 0.0 : raw; }

namespace detail {

inline std::vector<nn::Tensor> snapshot(RlNet& net) {
  std::vector<nn::Tensor> out;
  for (const auto& p : net.parameters()) out.push_back(p.param->value);
  return out;
}

inline void restore(RlNet& net, const std::vector<nn::Tensor>& w) {
  auto params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i].param->value = w[i];
}

inline nn::Tensor gather_rows(const nn::Tensor& cache, const std::vector<std::size_t>& rows) {
  std::vector<int> shape = cache.shape();
  shape[0] = static_cast<int>(rows.size());
  nn::Tensor out(shape);
  const std::size_t n = cache.stride0();
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(cache.data() + rows[i] * n, cache.data() + (rows[i] + 1) * n, out.data() + i * n);
  return out;
}

inline nn::Tensor eval_batch(const std::vector<datamod::Example>& ex, std::size_t from, std::size_t to,
                             const datamod::AugmentConfig& aug) {
  std::vector<cv::Mat> imgs;
  for (std::size_t i = from; i < to; ++i) imgs.push_back(datamod::preprocess_eval(datamod::load_crop(ex[i].image), aug));
  return datamod::to_batch(imgs);
}

// Output of backbone stages [0, upto) for every example, eval preprocessing.
inline nn::Tensor prefix_features(RlNet& net, const std::vector<datamod::Example>& ex, std::size_t upto, int batch,
                                  const datamod::AugmentConfig& aug) {
  std::vector<nn::Tensor> parts;
  net.set_recording(false);
  for (std::size_t i = 0; i < ex.size(); i += static_cast<std::size_t>(batch)) {
    const std::size_t j = std::min(ex.size(), i + static_cast<std::size_t>(batch));
    parts.push_back(net.backbone().forward_range(eval_batch(ex, i, j, aug), 0, upto, false));
  }
  return nn::concat0(parts);
}

}  // namespace detail

struct StreamMetrics {
  std::vector<double> raw;  // one raw prediction per example
  double loss = 0, mae = 0;
};

// Eval-mode pass (no dropout, no augmentation). `cache`, when given, holds
// the output of backbone stages [0, cache_upto).
inline StreamMetrics evaluate_stream(RlNet& net, const std::vector<datamod::Example>& ex,
                                     const datamod::AugmentConfig& aug = {}, const nn::Tensor* cache = nullptr,
                                     std::size_t cache_upto = 0) {
  StreamMetrics m;
  if (ex.empty()) return m;
  const auto& cfg = net.config();
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  net.set_recording(false);
  std::vector<float> grad(static_cast<std::size_t>(cfg.output_dim()));
  for (std::size_t i = 0; i < ex.size(); i += bs) {
    const std::size_t j = std::min(ex.size(), i + bs);
    nn::Tensor out;
    if (cache) {
      std::vector<std::size_t> rows;
      for (std::size_t k = i; k < j; ++k) rows.push_back(k);
      out = net.forward_from(detail::gather_rows(*cache, rows), cache_upto, false);
    } else {
      out = net.forward(detail::eval_batch(ex, i, j, aug), false);
    }
    const std::size_t d = out.stride0();
    for (std::size_t k = i; k < j; ++k) {
      std::span<const float> row(out.data() + (k - i) * d, d);
      const double y = decode_output(cfg.head, row);
      m.raw.push_back(y);
      m.loss += head_loss(cfg.head, row, ex[k].target, cfg.huber_delta, grad);
      m.mae += std::abs(clamp_prediction(y) - ex[k].target);
    }
  }
  m.loss /= static_cast<double>(ex.size());
  m.mae /= static_cast<double>(ex.size());
  return m;
}

// Runs the configured stage schedule. Each stage trains the head plus the
// backbone convolutions it unfreezes, with a fresh Adam state at the stage
// learning rate. Every epoch draws a bin-balanced index list.
inline TrainResult train(RlNet& net, const std::vector<datamod::Example>& train_set,
                         const std::vector<datamod::Example>& val_set, const TrainOptions& opt = {}) {
  if (train_set.empty()) throw StructuralError("training stream is empty");
  if (val_set.empty()) throw StructuralError("validation stream is empty");
  const ModelConfig& cfg = net.config();
  std::vector<int> rl;
  for (const auto& e : train_set) rl.push_back(static_cast<int>(std::lround(e.target)));
  const auto bins = datamod::indices_by_bin(rl);
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t out_dim = static_cast<std::size_t>(cfg.output_dim());

  TrainResult result;
  nn::Adam adam;
  int epoch = 0;
  for (std::size_t s = 0; s < cfg.stages.size(); ++s) {
    const Stage& stage = cfg.stages[s];
    net.set_trainable(stage.unfreeze_last_conv);
    adam.reset();
    auto params = net.parameters();
    const std::size_t first = net.first_trainable_stage();
    nn::Tensor train_cache, val_cache;
    const bool cached = !opt.augment && first > 0;
    if (cached) {
      train_cache = detail::prefix_features(net, train_set, first, cfg.batch_size, opt.augment_cfg);
      val_cache = detail::prefix_features(net, val_set, first, cfg.batch_size, opt.augment_cfg);
    }

    for (int e = 0; e < stage.epochs; ++e) {
      ++epoch;
      const auto order = datamod::oversample_train(bins, derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
      double loss_sum = 0, mae_sum = 0;
      std::vector<float> grad_row(out_dim);
      for (std::size_t b = 0; b < order.size(); b += bs) {
        const std::size_t end = std::min(order.size(), b + bs);
        const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(b),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
        nn::Tensor x;
        std::size_t from = 0;
        if (cached) {
          x = detail::gather_rows(train_cache, idx);
          from = first;
        } else {
          std::vector<cv::Mat> imgs;
          for (std::size_t k = 0; k < idx.size(); ++k) {
            const cv::Mat img = datamod::load_crop(train_set[idx[k]].image);
            if (opt.augment) {
              Rng rng(derive_seed(cfg.seed, 0x6175676dULL, static_cast<std::uint64_t>(epoch), b + k));
              imgs.push_back(datamod::preprocess_train(img, rng, opt.augment_cfg));
            } else {
              imgs.push_back(datamod::preprocess_eval(img, opt.augment_cfg));
            }
          }
          x = datamod::to_batch(imgs);
        }
        nn::zero_grad(params);
        net.set_recording(true);
        const nn::Tensor out = net.forward_from(x, from, true);
        nn::Tensor grad(out.shape());
        double batch_loss = 0;
        for (std::size_t k = 0; k < idx.size(); ++k) {
          std::span<const float> row(out.data() + k * out_dim, out_dim);
          const double target = train_set[idx[k]].target;
          batch_loss += head_loss(cfg.head, row, target, cfg.huber_delta, std::span<float>(grad.data() + k * out_dim, out_dim));
          mae_sum += std::abs(clamp_prediction(decode_output(cfg.head, row)) - target);
        }
        if (!std::isfinite(batch_loss)) {
          std::ostringstream msg;
          msg << "non-finite training loss at stage " << s + 1 << ", epoch " << epoch << ", batch " << b / bs
              << " (lr " << stage.learning_rate << "); examples:";
          for (auto i : idx) msg << ' ' << train_set[i].id;
          throw Error(msg.str());
        }
        loss_sum += batch_loss;
        net.backward(grad);
        net.set_recording(false);
        adam.step(params, stage.learning_rate, static_cast<double>(idx.size()));
      }

      EpochRecord rec;
      rec.epoch = epoch;
      rec.stage = static_cast<int>(s + 1);
      rec.learning_rate = stage.learning_rate;
      rec.train_loss = loss_sum / static_cast<double>(order.size());
      rec.train_mae = mae_sum / static_cast<double>(order.size());
      const auto vm = cached ? evaluate_stream(net, val_set, opt.augment_cfg, &val_cache, first)
                             : evaluate_stream(net, val_set, opt.augment_cfg);
      rec.val_loss = vm.loss;
      rec.val_mae = vm.mae;
      result.history.push_back(rec);
      if (opt.on_epoch) opt.on_epoch(rec);
      if (rec.val_mae < result.best_val_mae) {
        result.best_val_mae = rec.val_mae;
        result.best_epoch = epoch;
        result.best_weights = detail::snapshot(net);
      }
    }
    if (opt.on_stage_end) opt.on_stage_end(s, net);
  }
  if (opt.restore_best && !result.best_weights.empty()) detail::restore(net, result.best_weights);
  return result;
}

inline std::string history_csv(const std::vector<EpochRecord>& h) {
  std::ostringstream out;
  out.precision(10);
  out << "epoch,stage,learning_rate,train_loss,train_mae,val_loss,val_mae\n";
  for (const auto& r : h)
    out << r.epoch << ',' << r.stage << ',' << r.learning_rate << ',' << r.train_loss << ',' << r.train_mae << ','
        << r.val_loss << ',' << r.val_mae << '\n';
  return out.str();
}

}  // namespace rlface::model
