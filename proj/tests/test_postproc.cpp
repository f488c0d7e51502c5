// Copyright 2026 The protodiff Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "protodiff/postproc.hpp"

namespace protodiff {
namespace {

ScoredDetection det(BoundingBox b, double s, int cls = 0) {
  ScoredDetection d;
  d.box = b;
  d.score = s;
  d.class_id = cls;
  return d;
}

ScoredDetection masked(const BinaryMask& m, double s, int cls = 0) {
  ScoredDetection d = det(*mask_bounds(m), s, cls);
  d.mask = m;
  return d;
}

BinaryMask rect(int w, int h, int x1, int y1, int x2, int y2) {
  std::vector<std::uint8_t> px(static_cast<std::size_t>(w * h), 0);
  for (int y = y1; y < y2; ++y) {
    for (int x = x1; x < x2; ++x) px[static_cast<std::size_t>(y * w + x)] = 1;
  }
  return BinaryMask::from_raster(w, h, px);
}

// Two 10x10 boxes offset by one pixel: IoU = 90 / 110.
const BoundingBox kA{0, 0, 10, 10};
const BoundingBox kB{1, 0, 11, 10};
// IoU = 0.8 exactly: [0,0,10,10] vs [0,0,8,10] has inter 80, union 100.
const BoundingBox kC{0, 0, 8, 10};

std::vector<ScoredDetection> random_dets(std::mt19937_64& rng, int n) {
  std::vector<ScoredDetection> out;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    const BoundingBox b = oracle::lattice_box(rng);
    out.push_back(det(b, std::round(u(rng) * 10) / 10, static_cast<int>(rng() % 3)));
  }
  return out;
}

TEST(Nms, Examples) {
  ASSERT_DOUBLE_EQ(box_iou(kA, kC), 0.8);
  const std::vector<ScoredDetection> in{det(kC, 0.7), det(kA, 0.9)};
  const auto out = nms(in, 0.5);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].score, 0.9);

  const std::vector<ScoredDetection> low{det({0, 0, 10, 10}, 0.9), det({7, 0, 17, 10}, 0.7)};
  EXPECT_LT(box_iou(low[0].box, low[1].box), 0.5);
  EXPECT_EQ(nms(low, 0.5).size(), 2u);

  const std::vector<ScoredDetection> cls{det(kA, 0.9, 0), det(kC, 0.7, 1)};
  EXPECT_EQ(nms(cls, 0.5).size(), 2u);
}

TEST(Nms, SurvivorsFormAnAntichain) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 300; ++t) {
    const auto in = random_dets(rng, 1 + static_cast<int>(rng() % 25));
    const double thr = 0.1 + 0.8 * static_cast<double>(rng() % 100) / 100.0;
    const auto out = nms(in, thr);
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (i > 0) ASSERT_GE(out[i - 1].score, out[i].score);
      for (std::size_t j = i + 1; j < out.size(); ++j) {
        if (out[i].class_id == out[j].class_id) ASSERT_LE(box_iou(out[i].box, out[j].box), thr);
      }
    }
  }
}

TEST(Nms, RejectsBadThreshold) {
  EXPECT_THROW(nms({}, 0.0), std::invalid_argument);
  EXPECT_THROW(nms({}, 1.0), std::invalid_argument);
}

TEST(SoftNms, Examples) {
  const std::vector<ScoredDetection> apart{det({0, 0, 2, 2}, 0.9), det({5, 5, 7, 7}, 0.7)};
  const auto a = soft_nms(apart, 0.5);
  EXPECT_EQ(a[0].score, 0.9);
  EXPECT_EQ(a[1].score, 0.7);

  const std::vector<ScoredDetection> over{det(kA, 0.9), det(kC, 0.7)};
  const auto o = soft_nms(over, 0.5);
  ASSERT_EQ(o.size(), 2u);
  EXPECT_NEAR(o[1].score, 0.7 * std::exp(-0.64 / 0.5), 1e-12);
  EXPECT_NEAR(o[1].score, 0.194626, 1e-6);

  const auto one = soft_nms(std::vector<ScoredDetection>{det(kA, 0.4)}, 0.5);
  EXPECT_EQ(one[0].score, 0.4);
}

TEST(SoftNms, NeverIncreasesScoresAndKeepsEveryBox) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 300; ++t) {
    auto in = random_dets(rng, 1 + static_cast<int>(rng() % 25));
    for (std::size_t i = 0; i < in.size(); ++i) in[i].source = static_cast<std::int64_t>(i);
    const auto out = soft_nms(in, 0.5);
    ASSERT_EQ(out.size(), in.size());
    std::vector<bool> seen(in.size(), false);
    for (std::size_t k = 0; k < out.size(); ++k) {
      const auto src = static_cast<std::size_t>(out[k].source);
      ASSERT_FALSE(seen[src]);
      seen[src] = true;
      ASSERT_EQ(out[k].box, in[src].box);
      ASSERT_LE(out[k].score, in[src].score);
      if (k > 0) ASSERT_GE(out[k - 1].score, out[k].score);
    }
  }
}

TEST(Wbf, Examples) {
  const auto one = wbf(std::vector<ScoredDetection>{det(kA, 0.6)}, 0.55);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].box, kA);
  EXPECT_EQ(one[0].score, 0.6);

  const std::vector<ScoredDetection> pair{det({0, 0, 10, 10}, 0.8), det({2, 0, 12, 10}, 0.4)};
  const auto fused = wbf(pair, 0.5);
  ASSERT_EQ(fused.size(), 1u);
  EXPECT_NEAR(fused[0].box.x1, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(fused[0].box.x2, (10 * 0.8 + 12 * 0.4) / 1.2, 1e-12);
  EXPECT_NEAR(fused[0].score, 0.6, 1e-12);

  const std::vector<ScoredDetection> apart{det({0, 0, 2, 2}, 0.9), det({5, 5, 7, 7}, 0.7)};
  const auto two = wbf(apart, 0.55);
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[0].box, apart[0].box);
  EXPECT_EQ(two[1].box, apart[1].box);
}

TEST(Wbf, FusedBoxesStayInsideTheirClusterHull) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 300; ++t) {
    const auto in = random_dets(rng, 1 + static_cast<int>(rng() % 25));
    const auto out = wbf(in, 0.3);
    ASSERT_LE(out.size(), in.size());
    for (const ScoredDetection& f : out) {
      // Some member of the same class must reach each hull bound.
      double lo_x1 = 1e9, hi_x2 = -1e9, lo_y1 = 1e9, hi_y2 = -1e9;
      for (const ScoredDetection& d : in) {
        if (d.class_id != f.class_id) continue;
        lo_x1 = std::min(lo_x1, d.box.x1);
        lo_y1 = std::min(lo_y1, d.box.y1);
        hi_x2 = std::max(hi_x2, d.box.x2);
        hi_y2 = std::max(hi_y2, d.box.y2);
      }
      ASSERT_GE(f.box.x1, lo_x1 - 1e-9);
      ASSERT_GE(f.box.y1, lo_y1 - 1e-9);
      ASSERT_LE(f.box.x2, hi_x2 + 1e-9);
      ASSERT_LE(f.box.y2, hi_y2 + 1e-9);
    }
  }
}

TEST(Wbf, ScoresAreMemberMeans) {
  // Three mutually overlapping boxes form one cluster.
  const std::vector<ScoredDetection> in{det({0, 0, 10, 10}, 0.9), det({0, 0, 10, 9}, 0.6),
                                        det({1, 0, 10, 10}, 0.3)};
  const auto out = wbf(in, 0.55);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_NEAR(out[0].score, 0.6, 1e-12);
  EXPECT_NEAR(out[0].box.y2, (10 * 0.9 + 9 * 0.6 + 10 * 0.3) / 1.8, 1e-12);
}

TEST(SoftMerge, Examples) {
  const BinaryMask whole = rect(10, 10, 0, 0, 10, 10);
  const BinaryMask frag = rect(10, 10, 2, 2, 4, 4);
  const auto covered = soft_merge(std::vector<ScoredDetection>{masked(whole, 0.9),
                                                               masked(frag, 0.5)});
  EXPECT_EQ(covered[0].score, 0.9);
  EXPECT_EQ(covered[1].score, 0.0);

  const auto apart = soft_merge(std::vector<ScoredDetection>{
      masked(rect(10, 10, 0, 0, 3, 3), 0.9), masked(rect(10, 10, 5, 5, 8, 8), 0.5)});
  EXPECT_EQ(apart[0].score, 0.9);
  EXPECT_EQ(apart[1].score, 0.5);

  const auto half = soft_merge(std::vector<ScoredDetection>{
      masked(rect(10, 10, 0, 0, 5, 10), 0.9), masked(rect(10, 10, 3, 0, 7, 10), 0.6)});
  EXPECT_NEAR(half[1].score, 0.3, 1e-12);
}

TEST(SoftMerge, RequiresMasks) {
  EXPECT_THROW(soft_merge(std::vector<ScoredDetection>{det(kA, 0.5)}), std::invalid_argument);
}

TEST(SoftMerge, PerClassMaximumIsUntouched) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 200; ++t) {
    std::vector<ScoredDetection> in;
    const int n = 1 + static_cast<int>(rng() % 15);
    for (int i = 0; i < n; ++i) {
      in.push_back(masked(oracle::random_mask(rng, 12, 12),
                          static_cast<double>(1 + rng() % 1000) / 1000.0,
                          static_cast<int>(rng() % 2)));
      in.back().source = i;
    }
    const auto out = soft_merge(in);
    for (int cls : {0, 1}) {
      double best = -1;
      std::int64_t who = -1;
      for (const auto& d : in) {
        if (d.class_id == cls && d.score > best) {
          best = d.score;
          who = d.source;
        }
      }
      if (who < 0) continue;
      const auto it = std::find_if(out.begin(), out.end(),
                                   [&](const ScoredDetection& d) { return d.source == who; });
      ASSERT_NE(it, out.end());
      ASSERT_EQ(it->score, best);
    }
  }
}

TEST(TopK, Examples) {
  const std::vector<ScoredDetection> in{det(kA, 0.3), det(kB, 0.9), det(kC, 0.3, 1)};
  EXPECT_EQ(topk_by_score(in, 10).size(), 3u);
  const auto top1 = topk_by_score(in, 1);
  ASSERT_EQ(top1.size(), 1u);
  EXPECT_EQ(top1[0].score, 0.9);
  const auto top2 = topk_by_score(in, 2);
  EXPECT_EQ(top2[1].box, kA);
  const std::vector<ScoredDetection> ties{det(kC, 0.5), det(kA, 0.5)};
  EXPECT_EQ(topk_by_score(ties, 1)[0].box, kC);
  EXPECT_THROW(topk_by_score(in, 0), std::invalid_argument);
}

TEST(OrderByScore, TiesKeepInputOrder) {
  const std::vector<ScoredDetection> in{det(kA, 0.5), det(kB, 0.9), det(kC, 0.5)};
  EXPECT_EQ(order_by_score(in), (std::vector<std::size_t>{1, 0, 2}));
}

}  // namespace
}  // namespace protodiff
