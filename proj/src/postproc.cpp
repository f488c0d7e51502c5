// Copyright 2026 The protodiff Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "protodiff/postproc.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace protodiff {

namespace {

// Input positions grouped by class, each group in descending score order.
std::map<int, std::vector<std::size_t>> ranked_by_class(
    std::span<const ScoredDetection> dets) {
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i : order_by_score(dets)) {
    groups[dets[i].class_id].push_back(i);
  }
  return groups;
}

// Keeps `picked` (input positions) and emits them in score order.
std::vector<ScoredDetection> gather_sorted(std::span<const ScoredDetection> dets,
                                           std::vector<std::size_t> picked) {
  std::sort(picked.begin(), picked.end(), [&](std::size_t a, std::size_t b) {
    if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
    return a < b;
  });
  std::vector<ScoredDetection> out;
  out.reserve(picked.size());
  for (std::size_t i : picked) out.push_back(dets[i]);
  return out;
}

}  // namespace

std::vector<std::size_t> order_by_score(std::span<const ScoredDetection> dets) {
  std::vector<std::size_t> idx(dets.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score > dets[b].score;
  });
  return idx;
}

std::vector<ScoredDetection> nms(std::span<const ScoredDetection> dets,
                                 double iou_thr) {
  if (!(iou_thr > 0.0 && iou_thr < 1.0)) {
    throw std::invalid_argument("nms: iou threshold must lie in (0, 1)");
  }
  std::vector<std::size_t> kept;
  for (const auto& [cls, ranked] : ranked_by_class(dets)) {
    std::vector<bool> removed(ranked.size(), false);
    for (std::size_t a = 0; a < ranked.size(); ++a) {
      if (removed[a]) continue;
      kept.push_back(ranked[a]);
      for (std::size_t b = a + 1; b < ranked.size(); ++b) {
        if (!removed[b] &&
            box_iou(dets[ranked[a]].box, dets[ranked[b]].box) > iou_thr) {
          removed[b] = true;
        }
      }
    }
  }
  return gather_sorted(dets, std::move(kept));
}

std::vector<ScoredDetection> soft_nms(std::span<const ScoredDetection> dets,
                                      double sigma) {
  if (!(sigma > 0.0)) {
    throw std::invalid_argument("soft_nms: sigma must be > 0");
  }
  std::vector<ScoredDetection> decayed(dets.begin(), dets.end());
  for (const auto& [cls, ranked] : ranked_by_class(dets)) {
    std::vector<std::size_t> remaining = ranked;
    while (!remaining.empty()) {
      auto best = remaining.begin();
      for (auto it = remaining.begin(); it != remaining.end(); ++it) {
        const double s = decayed[*it].score;
        if (s > decayed[*best].score || (s == decayed[*best].score && *it < *best)) {
          best = it;
        }
      }
      const std::size_t chosen = *best;
      remaining.erase(best);
      for (std::size_t other : remaining) {
        const double iou = box_iou(decayed[chosen].box, decayed[other].box);
        decayed[other].score *= std::exp(-(iou * iou) / sigma);
      }
    }
  }
  std::vector<std::size_t> all(decayed.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return gather_sorted(decayed, std::move(all));
}

std::vector<ScoredDetection> wbf(std::span<const ScoredDetection> dets,
                                 double iou_thr) {
  if (!(iou_thr > 0.0 && iou_thr < 1.0)) {
    throw std::invalid_argument("wbf: iou threshold must lie in (0, 1)");
  }
  struct Cluster {
    std::vector<std::size_t> members;
    ScoredDetection fused;
  };
  auto refuse = [&](Cluster& c) {
    double wsum = 0.0, x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;
    for (std::size_t m : c.members) {
      const ScoredDetection& d = dets[m];
      wsum += d.score;
      x1 += d.score * d.box.x1;
      y1 += d.score * d.box.y1;
      x2 += d.score * d.box.x2;
      y2 += d.score * d.box.y2;
    }
    if (wsum > 0.0) {
      c.fused.box = {x1 / wsum, y1 / wsum, x2 / wsum, y2 / wsum};
    }
    c.fused.score = wsum / static_cast<double>(c.members.size());
  };

  std::vector<ScoredDetection> fused;
  for (const auto& [cls, ranked] : ranked_by_class(dets)) {
    std::vector<Cluster> clusters;
    for (std::size_t i : ranked) {
      Cluster* target = nullptr;
      double best_iou = iou_thr;
      for (Cluster& c : clusters) {
        const double iou = box_iou(c.fused.box, dets[i].box);
        if (iou > best_iou) {
          best_iou = iou;
          target = &c;
        }
      }
      if (target == nullptr) {
        clusters.push_back({{i}, dets[i]});
      } else {
        target->members.push_back(i);
        refuse(*target);
      }
    }
    for (Cluster& c : clusters) fused.push_back(std::move(c.fused));
  }
  std::vector<std::size_t> all(fused.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return gather_sorted(fused, std::move(all));
}

std::vector<ScoredDetection> soft_merge(std::span<const ScoredDetection> dets) {
  for (const ScoredDetection& d : dets) {
    if (!d.mask) {
      throw std::invalid_argument("soft_merge: every detection needs a mask");
    }
  }
  std::vector<ScoredDetection> out(dets.begin(), dets.end());
  for (const auto& [cls, ranked] : ranked_by_class(dets)) {
    for (std::size_t a = 1; a < ranked.size(); ++a) {
      const BinaryMask& mine = *dets[ranked[a]].mask;
      if (mine.area() == 0) continue;
      double worst = 0.0;
      for (std::size_t b = 0; b < a; ++b) {
        worst = std::max(worst, mask_coverage(mine, *dets[ranked[b]].mask));
      }
      out[ranked[a]].score = dets[ranked[a]].score * (1.0 - worst);
    }
  }
  std::vector<std::size_t> all(out.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return gather_sorted(out, std::move(all));
}

std::vector<ScoredDetection> topk_by_score(std::span<const ScoredDetection> dets,
                                           std::size_t k) {
  if (k < 1) throw std::invalid_argument("topk_by_score: k must be >= 1");
  std::vector<std::size_t> idx = order_by_score(dets);
  if (idx.size() > k) idx.resize(k);
  std::vector<ScoredDetection> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(dets[i]);
  return out;
}

}  // namespace protodiff
