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
#include <vector>

#include <opencv2/imgcodecs.hpp>

#include "rlface/datamod/sampling.hpp"
#include "rlface/facepipe/pipeline.hpp"
#include "rlface/nn/tensor.hpp"

namespace rlface::datamod {

// One model input: a face crop on disk and its RL target.
struct Example {
  std::string id;
  std::filesystem::path image;
  double target = 0;
};

// Tags every face with its split. Returns the number assigned to train.
inline std::size_t apply_split(std::vector<facepipe::LabeledFace>& faces, std::uint64_t seed, double ratio = 0.7) {
  std::size_t n = 0;
  for (auto& f : faces) {
    f.split = to_string(assign_split(f.person_id, seed, ratio));
    n += f.split == "train";
  }
  return n;
}

struct Streams {
  std::vector<Example> train, val;
};

// Examples of each split, crop paths resolved against `root`.
inline Streams make_streams(const std::vector<facepipe::LabeledFace>& faces, const std::filesystem::path& root) {
  Streams s;
  for (const auto& f : faces) {
    Example e{f.person_id, root / f.crop_path, static_cast<double>(f.rl_years)};
    if (f.split == "train") s.train.push_back(std::move(e));
    else if (f.split == "val") s.val.push_back(std::move(e));
    else throw StructuralError(f.person_id + ": face has no split; run split first");
  }
  return s;
}

inline cv::Mat load_crop(const std::filesystem::path& path) {
  cv::Mat img = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (img.empty()) throw MissingArtifact("face crop not found or unreadable: " + path.string());
  return img;
}

// Stacks CV_32FC3 rasters into an (N, 3, H, W) tensor.
inline nn::Tensor to_batch(const std::vector<cv::Mat>& images) {
  if (images.empty()) throw StructuralError("empty batch");
  const int h = images[0].rows, w = images[0].cols;
  nn::Tensor t({static_cast<int>(images.size()), 3, h, w});
  float* dst = t.data();
  for (const auto& img : images) {
    if (img.type() != CV_32FC3 || img.rows != h || img.cols != w) throw StructuralError("batch images differ in shape or type");
    std::vector<cv::Mat> planes;
    cv::split(img, planes);
    for (const auto& p : planes) {
      for (int y = 0; y < h; ++y) {
        const float* row = p.ptr<float>(y);
        std::copy(row, row + w, dst);
        dst += w;
      }
    }
  }
  return t;
}

}  // namespace rlface::datamod
