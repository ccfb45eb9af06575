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

#include "coatnet/checkpoint.hpp"

#include <bit>
#include <chrono>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace coatnet {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

using nlohmann::ordered_json;
constexpr std::size_t kPrefixBytes = 32;

template <typename U>
void put(std::string& buf, U v) {
  char raw[sizeof(U)];
  std::memcpy(raw, &v, sizeof(U));
  buf.append(raw, sizeof(U));
}

template <typename U>
U get(const std::string& buf, std::size_t pos) {
  U v;
  std::memcpy(&v, buf.data() + pos, sizeof(U));
  return v;
}

std::size_t align8(std::size_t n) { return (n + 7) & ~std::size_t{7}; }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

struct Parsed {
  CheckpointInfo info;
  std::size_t data_start = 0;
};

Parsed parse(const std::string& bytes, const std::string& path) {
  auto corrupt = [&](const std::string& what) {
    throw CorruptCheckpointError("checkpoint '" + path + "': " + what);
  };
  if (bytes.size() < kPrefixBytes) corrupt("file is truncated");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
    corrupt("bad magic (not a checkpoint)");
  }
  const uint32_t version = get<uint32_t>(bytes, 8);
  if (version != kCheckpointVersion) {
    throw IncompatibleCheckpointError("checkpoint '" + path +
                                      "' has format version " +
                                      std::to_string(version));
  }
  Parsed p;
  p.info.timestamp = get<uint64_t>(bytes, kCheckpointTimestampOffset);
  const uint64_t header_len = get<uint64_t>(bytes, 24);
  if (header_len > bytes.size() - kPrefixBytes) corrupt("header is truncated");
  p.data_start = align8(kPrefixBytes + header_len);

  ordered_json h;
  try {
    h = ordered_json::parse(bytes.substr(kPrefixBytes, header_len));
    p.info.config = model_config_from_json(h.at("model_config").dump());
    const auto& st = h.at("normalization");
    for (int c = 0; c < 3; ++c) {
      p.info.stats.mean[c] = st.at("mean").at(c).get<double>();
      p.info.stats.stddev[c] = st.at("stddev").at(c).get<double>();
    }
    p.info.tag = h.at("tag").get<std::string>();
    for (const auto& e : h.at("manifest")) {
      ManifestEntry m;
      m.name = e.at("name").get<std::string>();
      m.dtype = e.at("dtype").get<std::string>();
      m.shape = e.at("shape").get<Shape>();
      m.offset = e.at("offset").get<uint64_t>();
      m.nbytes = e.at("nbytes").get<uint64_t>();
      p.info.manifest.push_back(std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    corrupt(std::string("unreadable header: ") + e.what());
  } catch (const ConfigError& e) {
    corrupt(std::string("invalid stored config: ") + e.what());
  }
  for (const auto& m : p.info.manifest) {
    if (m.dtype != "f32") corrupt("unsupported dtype " + m.dtype);
    if (m.nbytes != static_cast<uint64_t>(shape_numel(m.shape)) * 4) {
      corrupt("size of '" + m.name + "' disagrees with its shape");
    }
    if (p.data_start + m.offset + m.nbytes > bytes.size()) {
      corrupt("data of '" + m.name + "' is truncated");
    }
  }
  return p;
}

// Compares a manifest to the tensors `cfg` defines.
void check_manifest(const std::vector<ManifestEntry>& manifest,
                    const ModelConfig& cfg, const std::string& path) {
  const std::vector<ParamSpec> specs = [&] {
    try {
      return param_specs(cfg);
    } catch (const ConfigError& e) {
      throw IncompatibleCheckpointError(std::string("target config invalid: ") +
                                        e.what());
    }
  }();
  auto fail = [&](const std::string& what) {
    throw IncompatibleCheckpointError("checkpoint '" + path +
                                      "' does not match model '" + cfg.name +
                                      "': " + what);
  };
  if (specs.size() != manifest.size()) {
    fail(std::to_string(manifest.size()) + " stored tensors, " +
         std::to_string(specs.size()) + " expected");
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].name != manifest[i].name) {
      fail("tensor " + std::to_string(i) + " is '" + manifest[i].name +
           "', expected '" + specs[i].name + "'");
    }
    if (specs[i].shape != manifest[i].shape) {
      fail("'" + specs[i].name + "' has shape " + shape_str(manifest[i].shape) +
           ", expected " + shape_str(specs[i].shape));
    }
  }
}

LoadedCheckpoint materialize(const std::string& bytes, Parsed parsed,
                             const std::string& path) {
  check_manifest(parsed.info.manifest, parsed.info.config, path);
  Model<float> model(parsed.info.config);
  std::size_t i = 0;
  model.visit([&](const ParamSpec& s, Tensor<float>& t) {
    const ManifestEntry& m = parsed.info.manifest[i++];
    std::vector<float> values(shape_numel(s.shape));
    std::memcpy(values.data(), bytes.data() + parsed.data_start + m.offset,
                m.nbytes);
    t = Tensor<float>(s.shape, std::move(values));
  });
  model.mark_updated();
  return {std::move(model), std::move(parsed.info)};
}

}  // namespace

void save_checkpoint(const std::string& path, Model<float>& model,
                     const NormStats& stats, const std::string& tag,
                     std::optional<uint64_t> timestamp) {
  const auto tensors = model.named_tensors();
  ordered_json manifest = ordered_json::array();
  uint64_t offset = 0;
  for (const auto& nt : tensors) {
    const uint64_t nbytes = static_cast<uint64_t>(nt.tensor.numel()) * 4;
    manifest.push_back({{"name", nt.name},
                        {"dtype", "f32"},
                        {"shape", nt.tensor.shape()},
                        {"offset", offset},
                        {"nbytes", nbytes}});
    offset += align8(nbytes);
  }
  ordered_json header = {
      {"model_config", ordered_json::parse(to_json(model.config(), -1))},
      {"normalization",
       {{"mean", stats.mean}, {"stddev", stats.stddev}}},
      {"tag", tag},
      {"manifest", manifest}};
  const std::string header_text = header.dump();

  const uint64_t ts =
      timestamp.value_or(static_cast<uint64_t>(
          std::chrono::duration_cast<std::chrono::seconds>(
              std::chrono::system_clock::now().time_since_epoch())
              .count()));
  std::string buf;
  buf.append(kCheckpointMagic, 8);
  put<uint32_t>(buf, kCheckpointVersion);
  put<uint32_t>(buf, 0);
  put<uint64_t>(buf, ts);
  put<uint64_t>(buf, header_text.size());
  buf += header_text;
  buf.resize(align8(buf.size()), '\0');
  for (const auto& nt : tensors) {
    const std::size_t nbytes = static_cast<std::size_t>(nt.tensor.numel()) * 4;
    buf.append(reinterpret_cast<const char*>(nt.tensor.ptr()), nbytes);
    buf.resize(align8(buf.size()), '\0');
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("short write to checkpoint '" + path + "'");
}

CheckpointInfo read_checkpoint_info(const std::string& path) {
  return parse(read_file(path), path).info;
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  const std::string bytes = read_file(path);
  return materialize(bytes, parse(bytes, path), path);
}

LoadedCheckpoint load_checkpoint(const std::string& path,
                                 const ModelConfig& expected) {
  const std::string bytes = read_file(path);
  Parsed parsed = parse(bytes, path);
  check_manifest(parsed.info.manifest, expected, path);
  return materialize(bytes, std::move(parsed), path);
}

}  // namespace coatnet
