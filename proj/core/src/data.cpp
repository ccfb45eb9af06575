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

#include "coatnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "coatnet/autodiff.hpp"

namespace coatnet {

namespace {

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

Dataset load_cifar10(const std::vector<std::string>& files,
                     const std::string& split, int64_t limit) {
  std::vector<unsigned char> bytes;
  for (const auto& path : files) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open CIFAR-10 file '" + path + "'");
    std::vector<unsigned char> chunk((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (chunk.empty() || chunk.size() % kCifarRecordBytes != 0) {
      throw IoError("'" + path + "' is not a whole number of 3073-byte records");
    }
    bytes.insert(bytes.end(), chunk.begin(), chunk.end());
    if (limit > 0 &&
        static_cast<int64_t>(bytes.size()) >= limit * kCifarRecordBytes) {
      break;
    }
  }
  int64_t n = static_cast<int64_t>(bytes.size()) / kCifarRecordBytes;
  if (limit > 0) n = std::min(n, limit);
  if (n == 0) throw IoError("no CIFAR-10 records found");

  constexpr int64_t plane = kCifarSide * kCifarSide;
  Dataset d;
  d.split = split;
  d.num_classes = 10;
  d.labels.resize(n);
  std::vector<float> px(n * plane * 3);
  for (int64_t i = 0; i < n; ++i) {
    const unsigned char* rec = bytes.data() + i * kCifarRecordBytes;
    d.labels[i] = rec[0];
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t p = 0; p < plane; ++p) {
        px[(i * plane + p) * 3 + c] = rec[1 + c * plane + p] / 255.0f;
      }
  }
  check_labels(d.labels, d.num_classes);
  d.images = Tensor<float>({n, kCifarSide, kCifarSide, 3}, std::move(px));
  return d;
}

std::vector<std::string> cifar10_files(const std::string& dir, bool train) {
  namespace fs = std::filesystem;
  std::vector<std::string> names;
  if (train) {
    for (int i = 1; i <= 5; ++i) {
      names.push_back("data_batch_" + std::to_string(i) + ".bin");
    }
  } else {
    names.push_back("test_batch.bin");
  }
  std::vector<std::string> out;
  for (const auto& name : names) {
    for (const fs::path& p :
         {fs::path(dir) / name, fs::path(dir) / "cifar-10-batches-bin" / name}) {
      if (fs::exists(p)) {
        out.push_back(p.string());
        break;
      }
    }
  }
  if (out.empty()) {
    throw IoError("no CIFAR-10 binary batches under '" + dir + "'");
  }
  return out;
}

void write_cifar10(const std::string& path, const Dataset& data) {
  if (data.resolution() != kCifarSide) {
    throw ShapeError("CIFAR-10 records are 32x32");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  constexpr int64_t plane = kCifarSide * kCifarSide;
  const float* px = data.images.ptr();
  std::vector<unsigned char> rec(kCifarRecordBytes);
  for (int64_t i = 0; i < data.size(); ++i) {
    rec[0] = static_cast<unsigned char>(data.labels[i]);
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t p = 0; p < plane; ++p) {
        const float v = std::clamp(px[(i * plane + p) * 3 + c], 0.0f, 1.0f);
        rec[1 + c * plane + p] =
            static_cast<unsigned char>(std::lround(v * 255.0f));
      }
    out.write(reinterpret_cast<const char*>(rec.data()), kCifarRecordBytes);
  }
  if (!out) throw IoError("short write to '" + path + "'");
}

Dataset synthetic_dataset(int64_t n, int64_t resolution, int64_t num_classes,
                          uint64_t seed, const std::string& split) {
  if (n < 1 || resolution < 1 || num_classes < 2) {
    throw ConfigError("synthetic dataset needs n >= 1, r >= 1, classes >= 2");
  }
  std::mt19937_64 rng(seed);
  // Class prototypes: 4x4 colour grids, bilinearly upsampled.
  constexpr int64_t g = 4;
  std::vector<double> proto(num_classes * g * g * 3);
  for (double& v : proto) v = 0.15 + 0.7 * uniform01(rng);

  const int64_t plane = resolution * resolution;
  std::vector<float> px(n * plane * 3);
  std::vector<int32_t> labels(n);
  std::normal_distribution<double> noise(0.0, 0.08);
  for (int64_t i = 0; i < n; ++i) {
    const int64_t k = i % num_classes;
    labels[i] = static_cast<int32_t>(k);
    const int64_t dy = static_cast<int64_t>(rng() % (resolution / 8 + 1));
    const int64_t dx = static_cast<int64_t>(rng() % (resolution / 8 + 1));
    const double gain = 0.85 + 0.3 * uniform01(rng);
    for (int64_t y = 0; y < resolution; ++y)
      for (int64_t x = 0; x < resolution; ++x) {
        // Position in prototype-grid coordinates, shifted circularly.
        const double fy = static_cast<double>((y + dy) % resolution) *
                          (g - 1) / std::max<int64_t>(resolution - 1, 1);
        const double fx = static_cast<double>((x + dx) % resolution) *
                          (g - 1) / std::max<int64_t>(resolution - 1, 1);
        const int64_t y0 = static_cast<int64_t>(fy), x0 = static_cast<int64_t>(fx);
        const int64_t y1 = std::min(y0 + 1, g - 1), x1 = std::min(x0 + 1, g - 1);
        const double wy = fy - y0, wx = fx - x0;
        for (int64_t c = 0; c < 3; ++c) {
          auto at = [&](int64_t yy, int64_t xx) {
            return proto[((k * g + yy) * g + xx) * 3 + c];
          };
          const double v = (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x1)) +
                           wy * ((1 - wx) * at(y1, x0) + wx * at(y1, x1));
          px[(i * plane + y * resolution + x) * 3 + c] = static_cast<float>(
              std::clamp(gain * v + noise(rng), 0.0, 1.0));
        }
      }
  }
  Dataset d;
  d.images = Tensor<float>({n, resolution, resolution, 3}, std::move(px));
  d.labels = std::move(labels);
  d.num_classes = num_classes;
  d.split = split;
  return d;
}

Dataset resize_dataset(const Dataset& data, int64_t resolution) {
  const int64_t r = data.resolution();
  if (resolution < 1) throw ConfigError("resize target must be positive");
  if (r == resolution) return data;
  const int64_t n = data.size();
  const double scale = static_cast<double>(r) / static_cast<double>(resolution);
  // Source coordinate and weight along one axis.
  struct Tap {
    int64_t i0, i1;
    double w;
  };
  std::vector<Tap> taps(resolution);
  for (int64_t o = 0; o < resolution; ++o) {
    const double f = std::clamp((o + 0.5) * scale - 0.5, 0.0,
                                static_cast<double>(r - 1));
    const int64_t i0 = static_cast<int64_t>(f);
    taps[o] = {i0, std::min(i0 + 1, r - 1), f - static_cast<double>(i0)};
  }
  std::vector<float> px(n * resolution * resolution * 3);
  const float* src = data.images.ptr();
  for (int64_t i = 0; i < n; ++i) {
    const float* img = src + i * r * r * 3;
    float* dst = px.data() + i * resolution * resolution * 3;
    for (int64_t y = 0; y < resolution; ++y)
      for (int64_t x = 0; x < resolution; ++x) {
        const Tap& ty = taps[y];
        const Tap& tx = taps[x];
        for (int64_t c = 0; c < 3; ++c) {
          auto at = [&](int64_t yy, int64_t xx) {
            return static_cast<double>(img[(yy * r + xx) * 3 + c]);
          };
          const double v =
              (1 - ty.w) * ((1 - tx.w) * at(ty.i0, tx.i0) + tx.w * at(ty.i0, tx.i1)) +
              ty.w * ((1 - tx.w) * at(ty.i1, tx.i0) + tx.w * at(ty.i1, tx.i1));
          dst[(y * resolution + x) * 3 + c] = static_cast<float>(v);
        }
      }
  }
  Dataset d = data;
  d.images = Tensor<float>({n, resolution, resolution, 3}, std::move(px));
  return d;
}

Dataset subset(const Dataset& data, const std::vector<int64_t>& indices) {
  const int64_t r = data.resolution();
  const int64_t per = r * r * 3;
  std::vector<float> px(indices.size() * per);
  std::vector<int32_t> labels(indices.size());
  const float* src = data.images.ptr();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int64_t j = indices[i];
    if (j < 0 || j >= data.size()) throw ShapeError("subset index out of range");
    std::copy(src + j * per, src + (j + 1) * per, px.begin() + i * per);
    labels[i] = data.labels[j];
  }
  Dataset d;
  d.images = Tensor<float>({static_cast<int64_t>(indices.size()), r, r, 3},
                           std::move(px));
  d.labels = std::move(labels);
  d.num_classes = data.num_classes;
  d.split = data.split;
  return d;
}

Dataset take_first(const Dataset& data, int64_t n) {
  std::vector<int64_t> idx(std::min(n, data.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int64_t>(i);
  return subset(data, idx);
}

NormStats compute_norm_stats(const Dataset& data) {
  NormStats s;
  const float* px = data.images.ptr();
  const int64_t count = data.images.numel() / 3;
  std::array<double, 3> sum{}, sq{};
  for (int64_t i = 0; i < count; ++i)
    for (int c = 0; c < 3; ++c) sum[c] += px[i * 3 + c];
  for (int c = 0; c < 3; ++c) s.mean[c] = sum[c] / static_cast<double>(count);
  for (int64_t i = 0; i < count; ++i)
    for (int c = 0; c < 3; ++c) {
      const double d = px[i * 3 + c] - s.mean[c];
      sq[c] += d * d;
    }
  for (int c = 0; c < 3; ++c) {
    s.stddev[c] = std::max(std::sqrt(sq[c] / static_cast<double>(count)), 1e-6);
  }
  return s;
}

template <typename T>
Tensor<T> normalized_batch(const Dataset& data,
                           const std::vector<int64_t>& indices,
                           const NormStats& stats) {
  const int64_t r = data.resolution();
  const int64_t per = r * r * 3;
  std::vector<T> out(indices.size() * per);
  const float* src = data.images.ptr();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const float* s = src + indices[i] * per;
    T* o = out.data() + i * per;
    for (int64_t p = 0; p < per; ++p) {
      const int c = static_cast<int>(p % 3);
      o[p] = static_cast<T>((s[p] - stats.mean[c]) / stats.stddev[c]);
    }
  }
  return Tensor<T>({static_cast<int64_t>(indices.size()), r, r, 3},
                   std::move(out));
}

void check_labels(const std::vector<int32_t>& labels, int64_t num_classes) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw LabelError("label " + std::to_string(labels[i]) + " at index " +
                       std::to_string(i) + " is outside [0, " +
                       std::to_string(num_classes) + ")");
    }
  }
}

template <typename T>
Tensor<T> smoothed_targets(const std::vector<int32_t>& labels,
                           int64_t num_classes, double eps) {
  check_labels(labels, num_classes);
  const int64_t n = static_cast<int64_t>(labels.size());
  std::vector<T> t(n * num_classes,
                   static_cast<T>(eps / static_cast<double>(num_classes)));
  for (int64_t i = 0; i < n; ++i) {
    t[i * num_classes + labels[i]] +=
        static_cast<T>(1.0 - eps);
  }
  return Tensor<T>({n, num_classes}, std::move(t));
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const Tensor<T>& targets) {
  if (logits.rank() != 2 || logits.shape() != targets.shape()) {
    throw ShapeError("cross_entropy: logits " + shape_str(logits.shape()) +
                     " vs targets " + shape_str(targets.shape()));
  }
  const int64_t n = logits.dim(0), k = logits.dim(1);
  if (k < 2) throw ShapeError("cross_entropy needs at least 2 classes");
  const T* z = logits.ptr();
  const T* t = targets.ptr();
  std::vector<T> prob(n * k);
  double loss = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double mx = z[i * k];
    for (int64_t j = 1; j < k; ++j) mx = std::max<double>(mx, z[i * k + j]);
    double se = 0.0;
    for (int64_t j = 0; j < k; ++j) se += std::exp(z[i * k + j] - mx);
    const double lse = mx + std::log(se);
    for (int64_t j = 0; j < k; ++j) {
      const double logp = z[i * k + j] - lse;
      prob[i * k + j] = static_cast<T>(std::exp(logp));
      loss -= t[i * k + j] * logp;
    }
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(loss / static_cast<double>(n)));
  if (!autodiff::should_record<T>({&logits})) return out;
  autodiff::attach<T>(out, [z_node = logits.node(), targets, prob = std::move(prob),
                            n, k](std::span<const T> g, GradBuffers<T>& gb) {
    auto gz = gb.get(z_node.get());
    const T* t = targets.ptr();
    const T scale = g[0] / static_cast<T>(n);
    for (int64_t i = 0; i < n; ++i) {
      T mass = 0;
      for (int64_t j = 0; j < k; ++j) mass += t[i * k + j];
      for (int64_t j = 0; j < k; ++j) {
        gz[i * k + j] += scale * (prob[i * k + j] * mass - t[i * k + j]);
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> loss_ce_smooth(const Tensor<T>& logits,
                         const std::vector<int32_t>& labels, double eps) {
  if (logits.rank() != 2 ||
      logits.dim(0) != static_cast<int64_t>(labels.size())) {
    throw ShapeError("loss_ce_smooth: logits " + shape_str(logits.shape()) +
                     " vs " + std::to_string(labels.size()) + " labels");
  }
  return cross_entropy(logits, smoothed_targets<T>(labels, logits.dim(1), eps));
}

double sample_beta(double alpha, std::mt19937_64& rng) {
  if (alpha < 0) throw ConfigError("mixup alpha must be >= 0");
  if (alpha == 0.0) return (rng() >> 63) ? 1.0 : 0.0;
  std::gamma_distribution<double> gamma(alpha, 1.0);
  const double a = gamma(rng);
  const double b = gamma(rng);
  if (a + b == 0.0) return 0.5;
  return a / (a + b);
}

template <typename T>
MixupBatch<T> mixup(const Tensor<T>& images, const Tensor<T>& targets,
                    double alpha, std::mt19937_64& rng, double forced_lambda) {
  const int64_t n = images.dim(0);
  if (targets.rank() != 2 || targets.dim(0) != n) {
    throw ShapeError("mixup: targets must be [N, K]");
  }
  MixupBatch<T> out;
  out.lambda = forced_lambda >= 0.0 ? forced_lambda : sample_beta(alpha, rng);
  out.permutation.resize(n);
  for (int64_t i = 0; i < n; ++i) out.permutation[i] = i;
  for (int64_t i = n - 1; i > 0; --i) {
    const int64_t j = static_cast<int64_t>(rng() % static_cast<uint64_t>(i + 1));
    std::swap(out.permutation[i], out.permutation[j]);
  }
  const double lam = out.lambda;
  auto mix = [&](const Tensor<T>& src) {
    const int64_t per = src.numel() / n;
    const T* s = src.ptr();
    std::vector<T> v(src.numel());
    for (int64_t i = 0; i < n; ++i) {
      const T* a = s + i * per;
      const T* b = s + out.permutation[i] * per;
      for (int64_t p = 0; p < per; ++p) {
        v[i * per + p] = static_cast<T>(lam * a[p] + (1.0 - lam) * b[p]);
      }
    }
    return Tensor<T>(src.shape(), std::move(v));
  };
  out.images = mix(images);
  out.targets = mix(targets);
  return out;
}

#define COATNET_INSTANTIATE_DATA(T)                                           \
  template Tensor<T> normalized_batch<T>(                                     \
      const Dataset&, const std::vector<int64_t>&, const NormStats&);         \
  template Tensor<T> smoothed_targets<T>(const std::vector<int32_t>&,         \
                                         int64_t, double);                    \
  template Tensor<T> cross_entropy(const Tensor<T>&, const Tensor<T>&);       \
  template Tensor<T> loss_ce_smooth(const Tensor<T>&,                         \
                                    const std::vector<int32_t>&, double);     \
  template MixupBatch<T> mixup(const Tensor<T>&, const Tensor<T>&, double,    \
                               std::mt19937_64&, double);

COATNET_INSTANTIATE_DATA(float)
COATNET_INSTANTIATE_DATA(double)

#undef COATNET_INSTANTIATE_DATA

}  // namespace coatnet
