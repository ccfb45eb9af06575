/* Copyright 2026 The coatnet-cpp Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef COATNET_DATA_HPP_
#define COATNET_DATA_HPP_

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "coatnet/tensor.hpp"

namespace coatnet {

// Per-channel normalization statistics of a training split.
struct NormStats {
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> stddev{1.0, 1.0, 1.0};

  bool operator==(const NormStats&) const = default;
};

// Images [n, r, r, 3] with values in [0, 1] and one class id per image.
struct Dataset {
  Tensor<float> images;
  std::vector<int32_t> labels;
  int64_t num_classes = 10;
  std::string split = "train";

  int64_t size() const { return static_cast<int64_t>(labels.size()); }
  int64_t resolution() const { return images.defined() ? images.dim(1) : 0; }
};

inline constexpr int64_t kCifarSide = 32;
inline constexpr int64_t kCifarRecordBytes = 1 + 3 * kCifarSide * kCifarSide;

// CIFAR-10 binary batches: 3073-byte records, one label byte then 1024 red,
// 1024 green and 1024 blue bytes in row-major order. `files` are read in
// order; `limit` > 0 keeps the first `limit` records. Throws IoError.
Dataset load_cifar10(const std::vector<std::string>& files,
                     const std::string& split, int64_t limit = 0);

// The train (data_batch_1..5) or test (test_batch) files under `dir`.
std::vector<std::string> cifar10_files(const std::string& dir, bool train);

// Writes `data` in the same record format (32x32 only).
void write_cifar10(const std::string& path, const Dataset& data);

// Seeded, class-structured images: each class has a smooth random colour
// pattern; samples add per-image jitter and pixel noise. Labels cycle so the
// set is balanced.
Dataset synthetic_dataset(int64_t n, int64_t resolution, int64_t num_classes,
                          uint64_t seed, const std::string& split = "train");

// Bilinear resize of every image to `resolution` (half-pixel centres, edge
// clamped). Returns `data` unchanged when the size already matches.
Dataset resize_dataset(const Dataset& data, int64_t resolution);

Dataset subset(const Dataset& data, const std::vector<int64_t>& indices);
Dataset take_first(const Dataset& data, int64_t n);

NormStats compute_norm_stats(const Dataset& data);

// (images[indices] - mean) / stddev as a [k, r, r, 3] tensor.
template <typename T>
Tensor<T> normalized_batch(const Dataset& data,
                           const std::vector<int64_t>& indices,
                           const NormStats& stats);

// Throws LabelError if a label is outside [0, num_classes).
void check_labels(const std::vector<int32_t>& labels, int64_t num_classes);

// [n, k] rows (1 - eps) onehot + eps / k.
template <typename T>
Tensor<T> smoothed_targets(const std::vector<int32_t>& labels,
                           int64_t num_classes, double eps);

// Mean cross-entropy of logits [N, K] against soft targets [N, K] (rows are
// probability vectors). Differentiable in the logits.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const Tensor<T>& targets);

// Cross-entropy against (1 - eps) onehot + eps / K.
template <typename T>
Tensor<T> loss_ce_smooth(const Tensor<T>& logits,
                         const std::vector<int32_t>& labels, double eps);

// Beta(alpha, alpha) via two gamma draws. alpha == 0 gives 0 or 1 with equal
// probability.
double sample_beta(double alpha, std::mt19937_64& rng);

template <typename T>
struct MixupBatch {
  Tensor<T> images;
  Tensor<T> targets;  // soft labels [N, K]
  double lambda = 1.0;
  std::vector<int64_t> permutation;
};

// lambda * batch + (1 - lambda) * batch[perm], same lambda for images and
// targets. A negative `forced_lambda` draws lambda from Beta(alpha, alpha).
template <typename T>
MixupBatch<T> mixup(const Tensor<T>& images, const Tensor<T>& targets,
                    double alpha, std::mt19937_64& rng,
                    double forced_lambda = -1.0);

}  // namespace coatnet

#endif  // COATNET_DATA_HPP_
