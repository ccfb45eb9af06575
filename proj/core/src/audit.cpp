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

#include "coatnet/audit.hpp"

#include <cstdio>
#include <sstream>

#include "coatnet/model.hpp"
#include "json.hpp"

namespace coatnet {

namespace {

struct Count {
  int64_t params = 0;
  int64_t macs = 0;
  Count& operator+=(const Count& o) {
    params += o.params;
    macs += o.macs;
    return *this;
  }
};

// k x k convolution with bias at `positions` output positions.
Count conv(int64_t k, int64_t c_in, int64_t c_out, int64_t groups,
           int64_t positions) {
  const int64_t taps = k * k * (c_in / groups) * c_out;
  return {taps + c_out, positions * taps};
}

Count norm(int64_t c) { return {2 * c, 0}; }

Count shortcut(int64_t d_in, int64_t d_out, int64_t stride, int64_t g_out) {
  if (stride == 1 && d_in == d_out) return {};
  return conv(1, d_in, d_out, 1, g_out * g_out);
}

Count conv_block(int64_t d_in, int64_t d, int64_t stride, int64_t g_out) {
  Count c = norm(d_in);
  c += conv(kConvKernel, d_in, d, 1, g_out * g_out);
  c += shortcut(d_in, d, stride, g_out);
  return c;
}

Count mbconv(int64_t d_in, int64_t d, int64_t stride, int64_t g_in,
             int64_t g_out, DownsampleVariant variant) {
  const int64_t hid = kMBConvExpansion * d_in;
  const int64_t sq = hid / kSqueezeDivisor;
  const int64_t expand_grid =
      variant == DownsampleVariant::kStridedDwconv ? g_in : g_out;
  Count c = norm(d_in);
  c += shortcut(d_in, d, stride, g_out);
  c += conv(1, d_in, hid, 1, expand_grid * expand_grid);
  c += conv(kConvKernel, hid, hid, hid, g_out * g_out);
  c += {hid * sq + sq + sq * hid + hid, 2 * hid * sq};
  c += conv(1, hid, d, 1, g_out * g_out);
  return c;
}

Count tfm(int64_t d_in, int64_t d, int64_t stride, int64_t g_out,
          int64_t head_dim, AttnMode mode) {
  const int64_t tokens = g_out * g_out;
  const int64_t ffn = kFfnExpansion * d;
  Count c = norm(d_in);
  c += shortcut(d_in, d, stride, g_out);
  c += {3 * d_in * d + d * d, tokens * (3 * d_in * d + d * d)};
  c += {0, 2 * tokens * tokens * d};  // logits and aggregation
  if (mode != AttnMode::kNone) {
    c += {(d / head_dim) * (2 * g_out - 1) * (2 * g_out - 1), 0};
  }
  c += norm(d);
  c += {d * ffn + ffn + ffn * d + d, tokens * 2 * d * ffn};
  return c;
}

std::string stage_kind_name(StageKind k) { return to_string(k); }

}  // namespace

AuditReport summarize(const ModelConfig& cfg, int64_t resolution) {
  validate(cfg);
  const int64_t reduction = total_stride(cfg);
  if (resolution < reduction || resolution % reduction != 0) {
    throw ResolutionError("resolution " + std::to_string(resolution) +
                          " is not a positive multiple of the total stride " +
                          std::to_string(reduction));
  }
  AuditReport r;
  r.model = cfg.name;
  r.resolution = resolution;
  const StageGrids grids = stage_grids(cfg, resolution);

  StageAudit stem{"S0", "conv", cfg.stem.depth, cfg.stem.width, grids.stem};
  Count sc;
  const int64_t d0 = cfg.stem.width, g0 = grids.stem;
  if (cfg.stem_patch > 0) {
    sc += conv(cfg.stem_patch, 3, d0, 1, g0 * g0);
  } else {
    sc += conv(kConvKernel, 3, d0, 1, g0 * g0);
    for (int64_t i = 1; i < cfg.stem.depth; ++i) {
      sc += norm(d0);
      sc += conv(kConvKernel, d0, d0, 1, g0 * g0);
    }
  }
  stem.params = sc.params;
  stem.macs = sc.macs;
  r.stages.push_back(stem);

  int64_t d_in = d0, g_in = g0;
  for (std::size_t s = 0; s < cfg.stages.size(); ++s) {
    const StageSpec& spec = cfg.stages[s];
    StageAudit sa{stage_label(cfg, s), stage_kind_name(spec.kind), spec.depth,
                  spec.width, grids.stages[s]};
    Count c;
    for (int64_t l = 0; l < spec.depth; ++l) {
      const int64_t stride = (l == 0 && spec.downsample) ? 2 : 1;
      const int64_t g_out = stride == 2 ? (g_in + 1) / 2 : g_in;
      switch (spec.kind) {
        case StageKind::kConv:
          c += conv_block(d_in, spec.width, stride, g_out);
          break;
        case StageKind::kMBConv:
          c += mbconv(d_in, spec.width, stride, g_in, g_out,
                      cfg.downsample_variant);
          break;
        case StageKind::kTfm:
          c += tfm(d_in, spec.width, stride, g_out, cfg.head_dim,
                   cfg.attn_mode);
          break;
      }
      d_in = spec.width;
      g_in = g_out;
    }
    sa.params = c.params;
    sa.macs = c.macs;
    r.stages.push_back(sa);
  }

  StageAudit head{"head", "head", 1, cfg.num_classes, 1};
  head.params = 2 * d_in + d_in * cfg.num_classes + cfg.num_classes;
  head.macs = d_in * cfg.num_classes;
  r.stages.push_back(head);

  for (const auto& s : r.stages) {
    r.total_params += s.params;
    r.total_macs += s.macs;
  }
  return r;
}

std::string to_text(const AuditReport& r) {
  std::ostringstream os;
  char line[160];
  os << "model " << r.model << " at " << r.resolution << "x" << r.resolution
     << " (FLOPs reported as MACs: 1 MAC = 1 FLOP)\n";
  std::snprintf(line, sizeof line, "%-12s %-8s %5s %6s %5s %14s %16s\n",
                "stage", "kind", "L", "D", "grid", "params", "MACs");
  os << line;
  for (const auto& s : r.stages) {
    std::snprintf(line, sizeof line,
                  "%-12s %-8s %5lld %6lld %5lld %14lld %16lld\n",
                  s.label.c_str(), s.kind.c_str(),
                  static_cast<long long>(s.depth),
                  static_cast<long long>(s.width),
                  static_cast<long long>(s.grid),
                  static_cast<long long>(s.params),
                  static_cast<long long>(s.macs));
    os << line;
  }
  std::snprintf(line, sizeof line,
                "total params %lld (%.2fM), MACs %lld (%.2fG)\n",
                static_cast<long long>(r.total_params), r.total_params / 1e6,
                static_cast<long long>(r.total_macs), r.total_macs / 1e9);
  os << line;
  return os.str();
}

std::string to_json(const AuditReport& r, int indent) {
  nlohmann::ordered_json stages = nlohmann::ordered_json::array();
  for (const auto& s : r.stages) {
    stages.push_back({{"label", s.label},
                      {"kind", s.kind},
                      {"depth", s.depth},
                      {"width", s.width},
                      {"grid", s.grid},
                      {"params", s.params},
                      {"macs", s.macs}});
  }
  nlohmann::ordered_json j = {{"schema", "coatnet.audit"},
                              {"schema_version", kAuditSchemaVersion},
                              {"model", r.model},
                              {"resolution", r.resolution},
                              {"flop_convention", "1 MAC = 1 FLOP"},
                              {"stages", stages},
                              {"total_params", r.total_params},
                              {"total_macs", r.total_macs}};
  return j.dump(indent);
}

}  // namespace coatnet
