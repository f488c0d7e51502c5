// Copyright 2026 The protodiff Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "protodiff/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

#include "protodiff/error.hpp"

namespace protodiff {

FeatureMap::FeatureMap(int channels, int grid_height, int grid_width,
                       int image_width, int image_height,
                       std::vector<float> data)
    : channels_(channels),
      grid_height_(grid_height),
      grid_width_(grid_width),
      image_width_(image_width),
      image_height_(image_height),
      data_(std::move(data)) {
  if (channels < 1 || grid_height < 1 || grid_width < 1) {
    throw FormatError("feature map: channels and grid dims must be >= 1");
  }
  if (image_width < 1 || image_height < 1) {
    throw FormatError("feature map: image dims must be >= 1");
  }
  const std::size_t expected = static_cast<std::size_t>(channels) *
                               grid_height * grid_width;
  if (data_.size() != expected) {
    throw FormatError("feature map: expected " + std::to_string(expected) +
                      " values, got " + std::to_string(data_.size()));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw FormatError("feature map: non-finite value at index " +
                        std::to_string(i));
    }
  }
}

GridBox map_box_to_grid(const BoundingBox& box, const FeatureMap& fm) {
  const double gw = fm.grid_width();
  const double gh = fm.grid_height();
  const double iw = fm.image_width();
  const double ih = fm.image_height();
  auto lo = [](double v, double grid, double image, int limit) {
    const int cell = static_cast<int>(std::floor(v * grid / image));
    return std::clamp(cell, 0, limit - 1);
  };
  auto hi = [](double v, double grid, double image, int limit) {
    const int cell = static_cast<int>(std::ceil(v * grid / image)) - 1;
    return std::clamp(cell, 0, limit - 1);
  };
  GridBox g{lo(box.x1, gw, iw, fm.grid_width()),
            lo(box.y1, gh, ih, fm.grid_height()),
            hi(box.x2, gw, iw, fm.grid_width()),
            hi(box.y2, gh, ih, fm.grid_height())};
  g.x1 = std::min(g.x1, g.x2);
  g.y1 = std::min(g.y1, g.y2);
  return g;
}

FeatureVector masked_roi_pool(const FeatureMap& fm, const BoundingBox& box,
                              const SoftMask& sm) {
  if (sm.width != fm.grid_width() || sm.height != fm.grid_height()) {
    throw FormatError("masked_roi_pool: soft mask is " +
                      std::to_string(sm.width) + "x" +
                      std::to_string(sm.height) + ", grid is " +
                      std::to_string(fm.grid_width()) + "x" +
                      std::to_string(fm.grid_height()));
  }
  const GridBox g = map_box_to_grid(box, fm);
  double n_mask = 0.0;
  for (int r = g.y1; r <= g.y2; ++r) {
    for (int c = g.x1; c <= g.x2; ++c) n_mask += sm.at(r, c);
  }
  const bool fallback = !(n_mask > 0.0);
  if (fallback) {
    warn("masked_roi_pool: mask has no weight inside the box, pooling the "
         "whole box instead");
    n_mask = static_cast<double>(g.y2 - g.y1 + 1) * (g.x2 - g.x1 + 1);
  }

  FeatureVector out;
  out.values.assign(static_cast<std::size_t>(fm.channels()), 0.0);
  for (int ch = 0; ch < fm.channels(); ++ch) {
    double acc = 0.0;
    for (int r = g.y1; r <= g.y2; ++r) {
      for (int c = g.x1; c <= g.x2; ++c) {
        const double weight = fallback ? 1.0 : sm.at(r, c);
        acc += static_cast<double>(fm.at(ch, r, c)) * weight;
      }
    }
    out.values[ch] = acc / n_mask;
  }
  return out;
}

double dot(const FeatureVector& a, const FeatureVector& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("feature vectors differ in length");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a.values[i] * b.values[i];
  return acc;
}

double l2_norm(const FeatureVector& v) { return std::sqrt(dot(v, v)); }

FeatureVector l2_normalize(const FeatureVector& v) {
  const double n = l2_norm(v);
  if (!(n > 0.0)) {
    throw std::invalid_argument("l2_normalize: zero vector");
  }
  FeatureVector out{v.values, true};
  for (double& x : out.values) x /= n;
  return out;
}

double cosine(const FeatureVector& a, const FeatureVector& b) {
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (!(na > 0.0) || !(nb > 0.0)) {
    throw std::invalid_argument("cosine: zero vector");
  }
  return dot(a, b) / (na * nb);
}

std::vector<ClassPrototype> build_prototypes(
    std::span<const LabeledFeature> supports) {
  struct Accum {
    std::vector<double> sum;
    int count = 0;
  };
  std::map<int, Accum> by_class;
  for (const LabeledFeature& s : supports) {
    Accum& a = by_class[s.class_id];
    if (a.sum.empty()) {
      a.sum.assign(s.feature.size(), 0.0);
    } else if (a.sum.size() != s.feature.size()) {
      throw std::invalid_argument("build_prototypes: support features of class " +
                                  std::to_string(s.class_id) +
                                  " differ in length");
    }
    for (std::size_t i = 0; i < a.sum.size(); ++i) a.sum[i] += s.feature.values[i];
    ++a.count;
  }
  std::vector<ClassPrototype> out;
  out.reserve(by_class.size());
  for (auto& [class_id, a] : by_class) {
    FeatureVector mean{std::move(a.sum), false};
    for (double& x : mean.values) x /= a.count;
    out.push_back({class_id, l2_normalize(mean), a.count});
  }
  return out;
}

const ClassPrototype& find_prototype(std::span<const ClassPrototype> protos,
                                     int class_id) {
  for (const ClassPrototype& p : protos) {
    if (p.class_id == class_id) return p;
  }
  throw std::out_of_range("no prototype for class " + std::to_string(class_id));
}

ClassMatch match_proposal(const FeatureVector& fq,
                          std::span<const ClassPrototype> protos) {
  if (protos.empty()) {
    throw std::invalid_argument("match_proposal: no prototypes");
  }
  bool have = false;
  ClassMatch best;
  for (const ClassPrototype& p : protos) {
    const double s = cosine(fq, p.vector);
    if (!have || s > best.similarity ||
        (s == best.similarity && p.class_id < best.class_id)) {
      best = {p.class_id, s};
      have = true;
    }
  }
  return best;
}

}  // namespace protodiff
