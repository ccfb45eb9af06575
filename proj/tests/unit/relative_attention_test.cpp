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

#include <gtest/gtest.h>

#include <cmath>

#include "coatnet/autodiff.hpp"
#include "coatnet/ops.hpp"
#include "coatnet/relative_attention.hpp"
#include "test_util.hpp"

namespace coatnet {
namespace {

using testing::randn;
using testing::TD;

AttnParams<double> random_params(int64_t d, int64_t heads, int64_t hd,
                                 uint64_t seed, double stddev = 0.5) {
  return {heads, hd, randn({d, heads * hd}, seed, stddev),
          randn({d, heads * hd}, seed + 1, stddev),
          randn({d, heads * hd}, seed + 2, stddev),
          randn({heads * hd, d}, seed + 3, stddev)};
}

// Direct evaluation: per head, logits_ij = q_i . k_j / sqrt(hd); pre adds
// B_ij inside the softmax, post adds it to the normalised weights.
std::vector<double> direct_attention(const TD& x, const AttnParams<double>& p,
                                     const TD& bias, AttnMode mode) {
  const int64_t n = x.dim(0), t = x.dim(1) * x.dim(2), d = x.dim(3);
  const int64_t hd = p.head_dim, inner = p.heads * hd;
  const int64_t d_out = p.wo.dim(1);
  std::vector<double> out(n * t * d_out, 0.0);
  auto proj = [&](const TD& w, int64_t b, int64_t i, int64_t col) {
    double a = 0.0;
    for (int64_t c = 0; c < d; ++c) {
      a += x.ptr()[(b * t + i) * d + c] * w.ptr()[c * inner + col];
    }
    return a;
  };
  for (int64_t b = 0; b < n; ++b) {
    std::vector<double> concat(t * inner, 0.0);
    for (int64_t h = 0; h < p.heads; ++h)
      for (int64_t i = 0; i < t; ++i) {
        std::vector<double> logit(t);
        double mx = -1e300;
        for (int64_t j = 0; j < t; ++j) {
          double s = 0.0;
          for (int64_t e = 0; e < hd; ++e) {
            s += proj(p.wq, b, i, h * hd + e) * proj(p.wk, b, j, h * hd + e);
          }
          s /= std::sqrt(static_cast<double>(hd));
          if (mode == AttnMode::kPre) s += bias.ptr()[(h * t + i) * t + j];
          logit[j] = s;
          mx = std::max(mx, s);
        }
        double z = 0.0;
        for (int64_t j = 0; j < t; ++j) z += std::exp(logit[j] - mx);
        for (int64_t j = 0; j < t; ++j) {
          double a = std::exp(logit[j] - mx) / z;
          if (mode == AttnMode::kPost) a += bias.ptr()[(h * t + i) * t + j];
          for (int64_t e = 0; e < hd; ++e) {
            concat[i * inner + h * hd + e] += a * proj(p.wv, b, j, h * hd + e);
          }
        }
      }
    for (int64_t i = 0; i < t; ++i)
      for (int64_t o = 0; o < d_out; ++o) {
        double a = 0.0;
        for (int64_t k = 0; k < inner; ++k) {
          a += concat[i * inner + k] * p.wo.ptr()[k * d_out + o];
        }
        out[(b * t + i) * d_out + o] = a;
      }
  }
  return out;
}

TEST(BiasTable, InitShapes) {
  EXPECT_EQ(init_bias_table<double>(1, 1, 3).table.shape(), (Shape{3, 1, 1}));
  EXPECT_EQ(init_bias_table<double>(2, 3, 1).table.shape(), (Shape{1, 3, 5}));
  const auto t = init_bias_table<float>(14, 14, 12);
  EXPECT_EQ(t.table.shape(), (Shape{12, 27, 27}));
  EXPECT_EQ(t.table.numel(), 8748);
  for (float v : t.table.data()) EXPECT_EQ(v, 0.0f);
}

TEST(GatherBias, DegenerateAndZero) {
  RelBiasTable<double> one{TD({1, 1, 1}, {4.5}), 1, 1};
  EXPECT_EQ(gather_bias(one, 1, 1).item(), 4.5);
  const TD z = gather_bias(init_bias_table<double>(3, 2, 2), 3, 2);
  EXPECT_EQ(z.shape(), (Shape{2, 6, 6}));
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
}

TEST(GatherBias, TwoByTwoHandCase) {
  // P[a, b] = 10a + b in 1-based indices.
  std::vector<double> vals;
  for (int a = 1; a <= 3; ++a)
    for (int b = 1; b <= 3; ++b) vals.push_back(10 * a + b);
  RelBiasTable<double> t{TD({1, 3, 3}, vals), 2, 2};
  const TD g = gather_bias(t, 2, 2);
  // Query (1,1) is token 0, key (2,2) is token 3.
  EXPECT_EQ(g.at({0, 0, 3}), 11.0);
  for (int64_t qi = 1; qi <= 2; ++qi)
    for (int64_t qj = 1; qj <= 2; ++qj)
      for (int64_t ki = 1; ki <= 2; ++ki)
        for (int64_t kj = 1; kj <= 2; ++kj) {
          const double expect = 10.0 * (qi - ki + 2) + (qj - kj + 2);
          EXPECT_EQ(g.at({0, (qi - 1) * 2 + qj - 1, (ki - 1) * 2 + kj - 1}),
                    expect);
        }
}

TEST(GatherBias, MatchesDoubleLoopOracleOnAllSmallGrids) {
  for (int64_t h = 1; h <= 4; ++h)
    for (int64_t w = 1; w <= 4; ++w) {
      const int64_t heads = 2;
      RelBiasTable<double> t{randn({heads, 2 * h - 1, 2 * w - 1}, h * 7 + w), h,
                             w};
      const TD g = gather_bias(t, h, w);
      const int64_t n = h * w;
      for (int64_t hh = 0; hh < heads; ++hh)
        for (int64_t q = 0; q < n; ++q)
          for (int64_t k = 0; k < n; ++k) {
            const int64_t r = q / w - k / w + h - 1;
            const int64_t c = q % w - k % w + w - 1;
            ASSERT_EQ(g.at({hh, q, k}), t.table.at({hh, r, c}));
          }
    }
}

TEST(GatherBias, TranslationEquivariantByEnumeration) {
  for (int64_t h = 1; h <= 4; ++h)
    for (int64_t w = 1; w <= 4; ++w) {
      RelBiasTable<double> t{randn({1, 2 * h - 1, 2 * w - 1}, 100 + h * 5 + w),
                             h, w};
      const TD g = gather_bias(t, h, w);
      auto at = [&](int64_t i, int64_t j, int64_t k, int64_t l) {
        return g.at({0, i * w + j, k * w + l});
      };
      for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j)
          for (int64_t k = 0; k < h; ++k)
            for (int64_t l = 0; l < w; ++l)
              for (int64_t s = -h + 1; s < h; ++s)
                for (int64_t u = -w + 1; u < w; ++u) {
                  const bool in = i + s >= 0 && i + s < h && k + s >= 0 &&
                                  k + s < h && j + u >= 0 && j + u < w &&
                                  l + u >= 0 && l + u < w;
                  if (!in) continue;
                  ASSERT_EQ(at(i, j, k, l), at(i + s, j + u, k + s, l + u));
                }
    }
}

TEST(GatherBias, WrongGridIsResolutionError) {
  EXPECT_THROW(gather_bias(init_bias_table<double>(2, 2, 1), 3, 3),
               ResolutionError);
}

TEST(RelativeMhsa, ZeroBiasPreEqualsVanillaBitForBit) {
  for (int64_t h = 2; h <= 4; ++h)
    for (int64_t w = 2; w <= 4; ++w) {
      const TD x = randn({2, h, w, 6}, h * 10 + w);
      const auto p = random_params(6, 2, 3, h * 100 + w);
      const auto t = init_bias_table<double>(h, w, 2);
      EXPECT_TRUE(bit_equal(relative_mhsa(x, p, &t, AttnMode::kPre),
                            relative_mhsa(x, p, &t, AttnMode::kNone)));
    }
}

TEST(RelativeMhsa, SingleTokenIgnoresBias) {
  const TD x = randn({3, 1, 1, 4}, 1);
  const auto p = random_params(4, 2, 2, 2);
  RelBiasTable<double> t{TD({2, 1, 1}, {3.0, -7.0}), 1, 1};
  const TD y = relative_mhsa(x, p, &t, AttnMode::kPre);
  const TD ref = matmul(matmul(reshape(x, {3, 4}), p.wv), p.wo);
  EXPECT_LT(max_abs_diff(reshape(y, {3, 4}), ref), 1e-12);
}

TEST(RelativeMhsa, MatchesDirectFormulaPreAndPost) {
  const TD x = randn({2, 2, 2, 3}, 3);
  const auto p = random_params(3, 1, 2, 4);
  RelBiasTable<double> t{randn({1, 3, 3}, 5), 2, 2};
  const TD bias = gather_bias(t, 2, 2);
  for (AttnMode mode : {AttnMode::kPre, AttnMode::kPost, AttnMode::kNone}) {
    const TD y = relative_mhsa(x, p, &t, mode);
    EXPECT_LT(testing::max_abs(direct_attention(x, p, bias, mode), y), 1e-12)
        << to_string(mode);
  }
  // Multi-head, non-square grid.
  const TD x2 = randn({1, 2, 3, 8}, 6);
  const auto p2 = random_params(8, 2, 4, 7);
  RelBiasTable<double> t2{randn({2, 3, 5}, 8), 2, 3};
  const TD b2 = gather_bias(t2, 2, 3);
  for (AttnMode mode : {AttnMode::kPre, AttnMode::kPost}) {
    EXPECT_LT(testing::max_abs(direct_attention(x2, p2, b2, mode),
                               relative_mhsa(x2, p2, &t2, mode)),
              1e-12);
  }
}

TEST(RelativeMhsa, WeightRowSums) {
  const TD x = randn({2, 3, 3, 4}, 9);
  const auto p = random_params(4, 2, 2, 10);
  RelBiasTable<double> t{randn({2, 5, 5}, 11), 3, 3};
  const TD bias = gather_bias(t, 3, 3);
  for (AttnMode mode : {AttnMode::kPre, AttnMode::kNone, AttnMode::kPost}) {
    const TD a = attention_weights(x, p, bias, mode);
    ASSERT_EQ(a.shape(), (Shape{2, 2, 9, 9}));
    for (int64_t n = 0; n < 2; ++n)
      for (int64_t h = 0; h < 2; ++h)
        for (int64_t i = 0; i < 9; ++i) {
          double s = 0.0, bsum = 0.0;
          for (int64_t j = 0; j < 9; ++j) {
            s += a.at({n, h, i, j});
            bsum += bias.at({h, i, j});
          }
          const double expect = mode == AttnMode::kPost ? 1.0 + bsum : 1.0;
          EXPECT_NEAR(s, expect, 1e-12);
        }
  }
}

TEST(RelativeMhsa, InputAdaptivity) {
  const TD x1 = randn({1, 2, 2, 4}, 12);
  const TD x2 = randn({1, 2, 2, 4}, 13);
  auto p = random_params(4, 1, 4, 14);
  RelBiasTable<double> t{randn({1, 3, 3}, 15), 2, 2};
  const TD bias = gather_bias(t, 2, 2);
  EXPECT_GT(max_abs_diff(attention_weights(x1, p, bias, AttnMode::kPre),
                         attention_weights(x2, p, bias, AttnMode::kPre)),
            1e-6);
  p.wq = TD::zeros(p.wq.shape());
  p.wk = TD::zeros(p.wk.shape());
  const TD a1 = attention_weights(x1, p, bias, AttnMode::kPre);
  EXPECT_TRUE(bit_equal(a1, attention_weights(x2, p, bias, AttnMode::kPre)));
  EXPECT_LT(max_abs_diff(reshape(a1, {1, 4, 4}), softmax(bias, -1)), 1e-15);
}

TEST(RelativeMhsa, GlobalReceptiveField) {
  const TD x = randn({1, 3, 3, 4}, 16);
  const auto p = random_params(4, 2, 2, 17);
  RelBiasTable<double> t{randn({2, 5, 5}, 18), 3, 3};
  for (int64_t out_tok = 0; out_tok < 9; ++out_tok) {
    TD xin = x.clone();
    xin.set_requires_grad(true);
    GradMap<double> g;
    {
      Tape<double> tape;
      const TD y = reshape(relative_mhsa(xin, p, &t, AttnMode::kPre), {9, 4});
      std::vector<double> sel(36, 0.0);
      for (int64_t c = 0; c < 4; ++c) sel[out_tok * 4 + c] = 1.0 + c;
      g = tape.backward(sum(mul(y, TD({9, 4}, sel))));
    }
    const TD gx = reshape(g[xin], {9, 4});
    for (int64_t in_tok = 0; in_tok < 9; ++in_tok) {
      double mag = 0.0;
      for (int64_t c = 0; c < 4; ++c) mag += std::abs(gx.at({in_tok, c}));
      EXPECT_GT(mag, 0.0) << out_tok << " <- " << in_tok;
    }
  }
}

TEST(RelativeMhsa, TableGradientIsScatterOfBiasGradient) {
  const TD x = randn({2, 3, 2, 4}, 19);
  const auto p = random_params(4, 2, 2, 20);
  RelBiasTable<double> t{randn({2, 5, 3}, 21), 3, 2};
  t.table.set_requires_grad(true);
  TD bias_leaf = gather_bias(RelBiasTable<double>{t.table.detach(), 3, 2}, 3, 2);
  bias_leaf.set_requires_grad(true);
  GradMap<double> gt, gb;
  {
    Tape<double> tape;
    gt = tape.backward(sum(relative_mhsa(x, p, &t, AttnMode::kPre)));
  }
  {
    Tape<double> tape;
    gb = tape.backward(sum(relative_mhsa(x, p, bias_leaf, AttnMode::kPre)));
  }
  // Scatter the bias-matrix gradient back through the index oracle.
  std::vector<double> expect(2 * 5 * 3, 0.0);
  const TD dg = gb[bias_leaf];
  for (int64_t h = 0; h < 2; ++h)
    for (int64_t q = 0; q < 6; ++q)
      for (int64_t k = 0; k < 6; ++k) {
        const int64_t r = q / 2 - k / 2 + 2, c = q % 2 - k % 2 + 1;
        expect[(h * 5 + r) * 3 + c] += dg.at({h, q, k});
      }
  const TD dt = gt[t.table];
  for (std::size_t i = 0; i < expect.size(); ++i) {
    EXPECT_NEAR(dt.ptr()[i], expect[i], 1e-12);
    EXPECT_NE(dt.ptr()[i], 0.0);  // every offset is realised on a full grid
  }
}

TEST(InterpolateBias, IdentityConstantAndDownscale) {
  RelBiasTable<double> t{randn({2, 5, 7}, 22), 3, 4};
  const auto same = interpolate_bias(t, 3, 4);
  EXPECT_TRUE(bit_equal(same.table, t.table));
  RelBiasTable<double> c{TD::full({1, 3, 3}, 0.3), 2, 2};
  const auto big = interpolate_bias(c, 4, 5);
  EXPECT_EQ(big.table.shape(), (Shape{1, 7, 9}));
  EXPECT_EQ(big.base_h, 4);
  EXPECT_EQ(big.base_w, 5);
  for (double v : big.table.data()) EXPECT_NEAR(v, 0.3, 1e-15);
  EXPECT_THROW(interpolate_bias(t, 2, 4), UnsupportedError);
}

TEST(InterpolateBias, RampMatchesAlignCornersBilinear) {
  // 3x3 ramp v = 2r + c, resized to 5x5: align corners maps output index o
  // to source o * (3-1)/(5-1) = o / 2, so the ramp becomes r + c/2.
  std::vector<double> vals;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) vals.push_back(2.0 * r + c);
  RelBiasTable<double> t{TD({1, 3, 3}, vals), 2, 2};
  const auto big = interpolate_bias(t, 3, 3);
  ASSERT_EQ(big.table.shape(), (Shape{1, 5, 5}));
  for (int64_t r = 0; r < 5; ++r)
    for (int64_t c = 0; c < 5; ++c) {
      EXPECT_NEAR(big.table.at({0, r, c}), r + 0.5 * c, 1e-12);
    }
  // A non-linear table checked against the bilinear formula directly.
  RelBiasTable<double> q{randn({1, 3, 3}, 23), 2, 2};
  const auto qb = interpolate_bias(q, 4, 4);
  for (int64_t r = 0; r < 7; ++r)
    for (int64_t c = 0; c < 7; ++c) {
      const double fy = r * 2.0 / 6.0, fx = c * 2.0 / 6.0;
      const int64_t y0 = std::min<int64_t>(static_cast<int64_t>(fy), 1);
      const int64_t x0 = std::min<int64_t>(static_cast<int64_t>(fx), 1);
      const double wy = fy - y0, wx = fx - x0;
      auto v = [&](int64_t a, int64_t b) { return q.table.at({0, a, b}); };
      const double ref =
          (1 - wy) * ((1 - wx) * v(y0, x0) + wx * v(y0, x0 + 1)) +
          wy * ((1 - wx) * v(y0 + 1, x0) + wx * v(y0 + 1, x0 + 1));
      EXPECT_NEAR(qb.table.at({0, r, c}), ref, 1e-12);
    }
}

TEST(BiasCache, ReusesUntilVersionChanges) {
  GatheredBiasCache<double> cache;
  RelBiasTable<double> t{randn({1, 3, 3}, 24), 2, 2};
  const TD a = cache.get(t, 1);
  EXPECT_TRUE(a.same_storage(cache.get(t, 1)));
  t.table.mutable_data()[0] += 1.0;
  const TD b = cache.get(t, 2);
  EXPECT_FALSE(a.same_storage(b));
  EXPECT_TRUE(bit_equal(b, gather_bias(t, 2, 2)));
}

}  // namespace
}  // namespace coatnet
