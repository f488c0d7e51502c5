// Copyright 2026 The protodiff Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#ifndef PROTODIFF_EVAL_HPP_
#define PROTODIFF_EVAL_HPP_

#include <array>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "protodiff/geometry.hpp"

namespace protodiff {

struct Detection {
  std::string image_id;
  int class_id = 0;
  double score = 0.0;
  BoundingBox box;

  bool operator==(const Detection&) const = default;
};

struct GroundTruthBox {
  std::string image_id;
  BoundingBox box;
  int class_id = 0;
};

inline constexpr int kNumIouThresholds = 10;

// 0.50, 0.55, ..., 0.95, each computed as (50 + 5k) / 100.
std::array<double, kNumIouThresholds> iou_thresholds();

// Greedy matching per (image, class). Detections are visited by descending
// score (ties by input position); each takes the unmatched ground truth of
// the same image and class with the highest IoU >= iou_thr, lowest GT
// position on equal IoU. Returns one TP flag per detection, in input order.
std::vector<bool> match_detections(std::span<const Detection> dets,
                                   std::span<const GroundTruthBox> gts,
                                   double iou_thr);

// 101-point interpolated AP. `tp` lists detections in ranked order. Recall
// point k counts as reached when tp_count / total_gt >= k / 100 (compared
// in integers). Returns 0 when total_gt == 0.
double ap_101(const std::vector<bool>& tp, std::int64_t total_gt);

struct EvalReport {
  double nAP = 0.0;
  double nAP50 = 0.0;
  double nAP75 = 0.0;
  // class_id -> AP at each of the ten IoU thresholds; only classes with
  // at least one ground truth box appear.
  std::map<int, std::array<double, kNumIouThresholds>> per_class_ap;
  std::int64_t det_count = 0;
  std::int64_t gt_count = 0;
};

// Keeps the max_dets best-scored detections per image, then averages AP
// over classes with ground truth and over the ten IoU thresholds.
EvalReport evaluate(std::span<const Detection> dets,
                    std::span<const GroundTruthBox> gts, int max_dets = 100);

}  // namespace protodiff

#endif  // PROTODIFF_EVAL_HPP_
