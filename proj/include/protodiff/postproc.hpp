// Copyright 2026 The protodiff Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#ifndef PROTODIFF_POSTPROC_HPP_
#define PROTODIFF_POSTPROC_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "protodiff/geometry.hpp"

namespace protodiff {

struct ScoredDetection {
  BoundingBox box;
  int class_id = 0;
  double score = 0.0;
  std::optional<BinaryMask> mask;
  // Index of the originating proposal, or -1. Fused boxes keep the source
  // of their highest-scored member.
  std::int64_t source = -1;
};

// All baselines suppress within a class only. Results are ordered by
// descending score with ties resolved by input position.

// Greedy hard suppression of boxes with IoU > iou_thr against a kept box.
std::vector<ScoredDetection> nms(std::span<const ScoredDetection> dets,
                                 double iou_thr = 0.5);

// Gaussian decay: every remaining score is multiplied by
// exp(-iou^2 / sigma) against each selected box.
std::vector<ScoredDetection> soft_nms(std::span<const ScoredDetection> dets,
                                      double sigma = 0.5);

// Weighted boxes fusion for a single model: clusters by IoU > iou_thr
// against the running fused box; coordinates are score-weighted means,
// the score is the plain mean of member scores.
std::vector<ScoredDetection> wbf(std::span<const ScoredDetection> dets,
                                 double iou_thr = 0.55);

// One pass in descending score order: score_i *= 1 - max_j coverage(i, j)
// over higher-ranked j of the same class. Throws std::invalid_argument
// when any detection lacks a mask.
std::vector<ScoredDetection> soft_merge(std::span<const ScoredDetection> dets);

std::vector<ScoredDetection> topk_by_score(std::span<const ScoredDetection> dets,
                                           std::size_t k);

// Indices sorted by descending score, ties by index.
std::vector<std::size_t> order_by_score(std::span<const ScoredDetection> dets);

}  // namespace protodiff

#endif  // PROTODIFF_POSTPROC_HPP_
