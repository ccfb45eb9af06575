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

#ifndef COATNET_CHECKPOINT_HPP_
#define COATNET_CHECKPOINT_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "coatnet/data.hpp"
#include "coatnet/model.hpp"

namespace coatnet {

// File layout (all integers little-endian):
//   0  magic "COATCKPT"
//   8  u32 format version
//  12  u32 reserved (0)
//  16  u64 timestamp, seconds since the epoch
//  24  u64 header length L
//  32  L bytes of JSON header: model config, normalization stats, tag and a
//      manifest of {name, dtype, shape, offset, nbytes}
//  32+L  zero padding to a multiple of 8, then raw tensor data; offsets are
//      relative to the start of the data section.
inline constexpr char kCheckpointMagic[9] = "COATCKPT";
inline constexpr uint32_t kCheckpointVersion = 1;
inline constexpr std::size_t kCheckpointTimestampOffset = 16;

struct ManifestEntry {
  std::string name;
  std::string dtype;  // "f32"
  Shape shape;
  uint64_t offset = 0;
  uint64_t nbytes = 0;
};

struct CheckpointInfo {
  ModelConfig config;
  NormStats stats;
  std::string tag;  // "raw" or "ema"
  uint64_t timestamp = 0;
  std::vector<ManifestEntry> manifest;
};

struct LoadedCheckpoint {
  Model<float> model;
  CheckpointInfo info;
};

// `timestamp` defaults to the current time.
void save_checkpoint(const std::string& path, Model<float>& model,
                     const NormStats& stats, const std::string& tag = "raw",
                     std::optional<uint64_t> timestamp = std::nullopt);

// Header and manifest only. Throws IoError / CorruptCheckpointError.
CheckpointInfo read_checkpoint_info(const std::string& path);

// Rebuilds the model described by the stored config and fills every tensor.
// A manifest that does not match that config raises
// IncompatibleCheckpointError; truncation raises CorruptCheckpointError.
LoadedCheckpoint load_checkpoint(const std::string& path);

// As above, but the manifest must also match `expected` exactly (names,
// order and shapes).
LoadedCheckpoint load_checkpoint(const std::string& path,
                                 const ModelConfig& expected);

}  // namespace coatnet

#endif  // COATNET_CHECKPOINT_HPP_
