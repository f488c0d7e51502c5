// Copyright 2026 The protodiff Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "protodiff/eval.hpp"

namespace protodiff {
namespace {

Detection det(const std::string& img, int cls, double s, BoundingBox b) {
  return {img, cls, s, b};
}

void expect_same(const EvalReport& got, const oracle::Report& want) {
  EXPECT_EQ(got.nAP, want.nAP);
  EXPECT_EQ(got.nAP50, want.nAP50);
  EXPECT_EQ(got.nAP75, want.nAP75);
  ASSERT_EQ(got.per_class_ap.size(), want.per_class.size());
  for (const auto& [cls, aps] : want.per_class) {
    ASSERT_EQ(got.per_class_ap.count(cls), 1u);
    for (std::size_t k = 0; k < aps.size(); ++k) EXPECT_EQ(got.per_class_ap.at(cls)[k], aps[k]);
  }
}

TEST(Thresholds, TenCocoLevels) {
  const auto t = iou_thresholds();
  EXPECT_EQ(t[0], 0.5);
  EXPECT_EQ(t[5], 0.75);
  EXPECT_EQ(t[9], 0.95);
}

TEST(MatchDetections, Examples) {
  const std::vector<GroundTruthBox> gt{{"a", {0, 0, 10, 10}, 0}};
  const std::vector<Detection> one{det("a", 0, 0.9, {0, 0, 10, 9})};
  EXPECT_EQ(match_detections(one, gt, 0.5), (std::vector<bool>{true}));
  EXPECT_EQ(match_detections(one, {}, 0.5), (std::vector<bool>{false}));
  const std::vector<Detection> two{det("a", 0, 0.6, {0, 0, 10, 10}),
                                   det("a", 0, 0.8, {0, 0, 10, 9})};
  EXPECT_EQ(match_detections(two, gt, 0.5), (std::vector<bool>{false, true}));
}

TEST(MatchDetections, PrefersHighestIouAndRespectsImageAndClass) {
  const std::vector<GroundTruthBox> gt{{"a", {0, 0, 10, 10}, 0}, {"a", {1, 0, 11, 10}, 0},
                                       {"b", {1, 0, 11, 10}, 0}};
  const std::vector<Detection> d{det("a", 0, 0.9, {1, 0, 11, 10}),
                                 det("a", 0, 0.8, {1, 0, 11, 10}),
                                 det("a", 1, 0.7, {0, 0, 10, 10})};
  // The first takes the exact GT; the second falls back to the other one.
  EXPECT_EQ(match_detections(d, gt, 0.5), (std::vector<bool>{true, true, false}));
  EXPECT_EQ(match_detections(d, gt, 0.95), (std::vector<bool>{true, false, false}));
}

TEST(Ap101, Examples) {
  EXPECT_EQ(ap_101({true}, 1), 1.0);
  EXPECT_EQ(ap_101({}, 3), 0.0);
  EXPECT_EQ(ap_101({false, true}, 1), 0.5);
  EXPECT_EQ(ap_101({true}, 0), 0.0);
}

TEST(Ap101, PartialRecall) {
  // One of two GTs found at rank 1: recall points 0..50 reached at precision 1.
  EXPECT_DOUBLE_EQ(ap_101({true, false}, 2), 51.0 / 101.0);
  EXPECT_EQ(ap_101({true, false}, 2), oracle::ap_from_flags({true, false}, 2));
}

TEST(Ap101, MatchesOracleOnRandomFlags) {
  std::mt19937_64 rng(77);
  for (int t = 0; t < 2000; ++t) {
    const int n = static_cast<int>(rng() % 30);
    std::vector<bool> f(static_cast<std::size_t>(n));
    long tps = 0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      f[i] = rng() % 2 == 0;
      tps += f[i] ? 1 : 0;
    }
    const long npos = tps + static_cast<long>(rng() % 4);
    ASSERT_EQ(ap_101(f, npos), oracle::ap_from_flags(f, npos));
  }
}

TEST(Evaluate, PerfectAndEmpty) {
  const std::vector<GroundTruthBox> gt{{"a", {0, 0, 10, 10}, 0}, {"b", {5, 5, 9, 9}, 1}};
  const std::vector<Detection> perfect{det("a", 0, 0.9, {0, 0, 10, 10}),
                                       det("b", 1, 0.8, {5, 5, 9, 9})};
  const EvalReport r = evaluate(perfect, gt);
  EXPECT_EQ(r.nAP, 1.0);
  EXPECT_EQ(r.nAP50, 1.0);
  EXPECT_EQ(r.nAP75, 1.0);
  EXPECT_EQ(r.det_count, 2);
  EXPECT_EQ(r.gt_count, 2);

  const EvalReport e = evaluate({}, gt);
  EXPECT_EQ(e.nAP, 0.0);
  EXPECT_EQ(e.nAP50, 0.0);
  EXPECT_EQ(e.nAP75, 0.0);
}

TEST(Evaluate, UnknownClassesCountOnlyAsFalsePositives) {
  const std::vector<GroundTruthBox> gt{{"a", {0, 0, 10, 10}, 0}};
  const std::vector<Detection> d{det("a", 7, 0.99, {0, 0, 10, 10}),
                                 det("a", 0, 0.5, {0, 0, 10, 10})};
  const EvalReport r = evaluate(d, gt);
  EXPECT_EQ(r.nAP, 1.0);
  EXPECT_EQ(r.per_class_ap.size(), 1u);
  EXPECT_EQ(r.det_count, 2);
}

TEST(Evaluate, PerImageCap) {
  const std::vector<GroundTruthBox> gt{{"a", {0, 0, 10, 10}, 0}};
  std::vector<Detection> d;
  for (int i = 0; i < 5; ++i) d.push_back(det("a", 0, 0.9 - i * 0.1, {20, 20, 30, 30}));
  d.push_back(det("a", 0, 0.1, {0, 0, 10, 10}));
  EXPECT_GT(evaluate(d, gt, 100).nAP, 0.0);
  EXPECT_EQ(evaluate(d, gt, 5).nAP, 0.0);
  EXPECT_EQ(evaluate(d, gt, 5).det_count, 5);
  EXPECT_THROW(evaluate(d, gt, 0), std::invalid_argument);
}

TEST(Evaluate, MatchesOracleOnRandomMicroInstances) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 200; ++t) {
    const oracle::Instance inst = oracle::random_instance(rng);
    expect_same(evaluate(inst.dets, inst.gts, 100), oracle::evaluate(inst.dets, inst.gts, 100));
    expect_same(evaluate(inst.dets, inst.gts, 3), oracle::evaluate(inst.dets, inst.gts, 3));
  }
}

TEST(Evaluate, InvariantToMonotoneScoreMaps) {
  std::mt19937_64 rng(13);
  for (int t = 0; t < 200; ++t) {
    oracle::Instance inst = oracle::random_instance(rng);
    const EvalReport base = evaluate(inst.dets, inst.gts);
    for (Detection& d : inst.dets) d.score = std::exp(3 * d.score) - 0.5;
    const EvalReport mapped = evaluate(inst.dets, inst.gts);
    ASSERT_EQ(base.nAP, mapped.nAP);
    ASSERT_EQ(base.nAP50, mapped.nAP50);
    ASSERT_EQ(base.nAP75, mapped.nAP75);
  }
}

TEST(Evaluate, LowFalsePositiveNeverHelpsAndTruePositiveNeverHurts) {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 200; ++t) {
    oracle::Instance inst = oracle::random_instance(rng);
    if (inst.gts.empty()) continue;
    const EvalReport base = evaluate(inst.dets, inst.gts);

    std::vector<Detection> with_fp = inst.dets;
    with_fp.push_back(det(inst.gts[0].image_id, inst.gts[0].class_id, -1.0, {90, 90, 91, 91}));
    const EvalReport fp = evaluate(with_fp, inst.gts);
    ASSERT_LE(fp.nAP, base.nAP);

    // A fresh GT and an exact detection for it, scored above everything.
    std::vector<GroundTruthBox> gts = inst.gts;
    gts.push_back({"fresh", {0, 0, 5, 5}, inst.gts[0].class_id});
    std::vector<Detection> with_tp = inst.dets;
    with_tp.push_back(det("fresh", inst.gts[0].class_id, 2.0, {0, 0, 5, 5}));
    const EvalReport before = evaluate(inst.dets, gts);
    const EvalReport after = evaluate(with_tp, gts);
    ASSERT_GE(after.nAP, before.nAP);
  }
}

TEST(Evaluate, NapNeverExceedsNap50) {
  std::mt19937_64 rng(19);
  for (int t = 0; t < 500; ++t) {
    const oracle::Instance inst = oracle::random_instance(rng);
    const EvalReport r = evaluate(inst.dets, inst.gts);
    ASSERT_LE(r.nAP, r.nAP50 + 1e-15);
    ASSERT_LE(r.nAP75, r.nAP50);
  }
}

}  // namespace
}  // namespace protodiff
