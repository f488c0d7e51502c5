// Copyright 2026 The protodiff Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "protodiff/eval.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <utility>

namespace protodiff {

namespace {

using Key = std::pair<std::string, int>;  // (image_id, class_id)

std::vector<std::size_t> ranked(std::span<const Detection> dets) {
  std::vector<std::size_t> idx(dets.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score > dets[b].score;
  });
  return idx;
}

}  // namespace

std::array<double, kNumIouThresholds> iou_thresholds() {
  std::array<double, kNumIouThresholds> t{};
  for (int k = 0; k < kNumIouThresholds; ++k) t[k] = (50.0 + 5.0 * k) / 100.0;
  return t;
}

std::vector<bool> match_detections(std::span<const Detection> dets,
                                   std::span<const GroundTruthBox> gts,
                                   double iou_thr) {
  std::map<Key, std::vector<std::size_t>> gt_index;
  for (std::size_t g = 0; g < gts.size(); ++g) {
    gt_index[{gts[g].image_id, gts[g].class_id}].push_back(g);
  }
  std::vector<bool> taken(gts.size(), false);
  std::vector<bool> tp(dets.size(), false);
  for (std::size_t d : ranked(dets)) {
    auto it = gt_index.find({dets[d].image_id, dets[d].class_id});
    if (it == gt_index.end()) continue;
    std::size_t best = 0;
    double best_iou = -1.0;
    for (std::size_t g : it->second) {
      if (taken[g]) continue;
      const double iou = box_iou(dets[d].box, gts[g].box);
      if (iou >= iou_thr && iou > best_iou) {
        best_iou = iou;
        best = g;
      }
    }
    if (best_iou >= 0.0) {
      taken[best] = true;
      tp[d] = true;
    }
  }
  return tp;
}

double ap_101(const std::vector<bool>& tp, std::int64_t total_gt) {
  if (total_gt <= 0) return 0.0;
  const std::size_t n = tp.size();
  std::vector<std::int64_t> tp_cum(n);
  std::vector<double> precision(n);
  std::int64_t tps = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (tp[i]) ++tps;
    tp_cum[i] = tps;
    precision[i] = static_cast<double>(tps) / static_cast<double>(i + 1);
  }
  // Envelope: best precision at this rank or any later one.
  for (std::size_t i = n; i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double sum = 0.0;
  for (std::int64_t k = 0; k <= 100; ++k) {
    // First rank whose recall reaches k / 100.
    auto it = std::lower_bound(tp_cum.begin(), tp_cum.end(), k,
                               [&](std::int64_t count, std::int64_t level) {
                                 return count * 100 < level * total_gt;
                               });
    if (it != tp_cum.end()) {
      sum += precision[static_cast<std::size_t>(it - tp_cum.begin())];
    }
  }
  return sum / 101.0;
}

EvalReport evaluate(std::span<const Detection> dets,
                    std::span<const GroundTruthBox> gts, int max_dets) {
  if (max_dets < 1) throw std::invalid_argument("evaluate: max_dets must be >= 1");
  EvalReport report;
  report.gt_count = static_cast<std::int64_t>(gts.size());

  // Per-image truncation, keeping input order among the survivors.
  std::map<std::string, int> per_image;
  std::vector<bool> keep(dets.size(), false);
  for (std::size_t d : ranked(dets)) {
    if (per_image[dets[d].image_id]++ < max_dets) keep[d] = true;
  }

  std::map<int, std::int64_t> gt_per_class;
  for (const GroundTruthBox& g : gts) ++gt_per_class[g.class_id];

  std::map<int, std::vector<Detection>> dets_by_class;
  for (std::size_t d = 0; d < dets.size(); ++d) {
    if (!keep[d]) continue;
    ++report.det_count;
    dets_by_class[dets[d].class_id].push_back(dets[d]);
  }
  std::map<int, std::vector<GroundTruthBox>> gts_by_class;
  for (const GroundTruthBox& g : gts) gts_by_class[g.class_id].push_back(g);

  const auto thresholds = iou_thresholds();
  for (const auto& [cls, count] : gt_per_class) {
    const std::vector<Detection>& cd = dets_by_class[cls];
    const std::vector<GroundTruthBox>& cg = gts_by_class[cls];
    const std::vector<std::size_t> order = ranked(cd);
    auto& aps = report.per_class_ap[cls];
    for (int k = 0; k < kNumIouThresholds; ++k) {
      const std::vector<bool> flags = match_detections(cd, cg, thresholds[k]);
      std::vector<bool> in_rank(order.size());
      for (std::size_t r = 0; r < order.size(); ++r) in_rank[r] = flags[order[r]];
      aps[k] = ap_101(in_rank, count);
    }
  }

  if (report.per_class_ap.empty()) return report;
  std::array<double, kNumIouThresholds> per_threshold{};
  for (int k = 0; k < kNumIouThresholds; ++k) {
    double s = 0.0;
    for (const auto& [cls, aps] : report.per_class_ap) s += aps[k];
    per_threshold[k] = s / static_cast<double>(report.per_class_ap.size());
  }
  double total = 0.0;
  for (double v : per_threshold) total += v;
  report.nAP = total / kNumIouThresholds;
  report.nAP50 = per_threshold[0];
  report.nAP75 = per_threshold[5];
  return report;
}

}  // namespace protodiff
