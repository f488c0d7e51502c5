// Copyright 2026 The protodiff Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#ifndef PROTODIFF_FEATURES_HPP_
#define PROTODIFF_FEATURES_HPP_

#include <span>
#include <string>
#include <vector>

#include "protodiff/geometry.hpp"

namespace protodiff {

/// Dense C x H' x W' feature grid extracted from an image of
/// image_width x image_height pixels. Storage is channel-major, then
/// row-major within a channel.
class FeatureMap {
 public:
  FeatureMap() = default;
  // Throws FormatError on non-finite values or inconsistent sizes.
  FeatureMap(int channels, int grid_height, int grid_width, int image_width,
             int image_height, std::vector<float> data);

  int channels() const { return channels_; }
  int grid_height() const { return grid_height_; }
  int grid_width() const { return grid_width_; }
  int image_width() const { return image_width_; }
  int image_height() const { return image_height_; }
  const std::vector<float>& data() const { return data_; }

  float at(int channel, int row, int col) const {
    return data_[(static_cast<std::size_t>(channel) * grid_height_ + row) *
                     grid_width_ +
                 col];
  }

 private:
  int channels_ = 0;
  int grid_height_ = 0;
  int grid_width_ = 0;
  int image_width_ = 0;
  int image_height_ = 0;
  std::vector<float> data_;
};

struct FeatureVector {
  std::vector<double> values;
  bool normalized = false;

  std::size_t size() const { return values.size(); }
};

struct ClassPrototype {
  int class_id = 0;
  FeatureVector vector;  // unit length
  int support_count = 0;
};

struct SupportAnnotation {
  std::string image_id;
  BoundingBox box;
  int class_id = 0;
  BinaryMask mask;
};

/// Inclusive cell range on a feature grid.
struct GridBox {
  int x1 = 0;
  int y1 = 0;
  int x2 = 0;
  int y2 = 0;

  bool operator==(const GridBox&) const = default;
};

// Scales by (W'/W, H'/H), floors the min corner, takes ceil - 1 of the max
// corner, clamps to the grid and never returns an empty range.
GridBox map_box_to_grid(const BoundingBox& box, const FeatureMap& fm);

// Mask-weighted mean of the feature columns inside the mapped grid box.
// When the mask has no weight inside the box, falls back to an unweighted
// mean over the box and emits a warning.
FeatureVector masked_roi_pool(const FeatureMap& fm, const BoundingBox& box,
                              const SoftMask& sm);

// Throws std::invalid_argument on a zero vector.
FeatureVector l2_normalize(const FeatureVector& v);

double dot(const FeatureVector& a, const FeatureVector& b);
double l2_norm(const FeatureVector& v);

// Throws std::invalid_argument on zero vectors or mismatched lengths.
double cosine(const FeatureVector& a, const FeatureVector& b);

struct LabeledFeature {
  int class_id = 0;
  FeatureVector feature;
};

// Mean-then-normalize per class, ordered by class_id.
std::vector<ClassPrototype> build_prototypes(
    std::span<const LabeledFeature> supports);

// Throws std::out_of_range when no prototype exists for class_id.
const ClassPrototype& find_prototype(std::span<const ClassPrototype> protos,
                                     int class_id);

struct ClassMatch {
  int class_id = 0;
  double similarity = 0.0;
};

// argmax_c cos(fq, p_c); ties go to the lowest class_id.
ClassMatch match_proposal(const FeatureVector& fq,
                          std::span<const ClassPrototype> protos);

}  // namespace protodiff

#endif  // PROTODIFF_FEATURES_HPP_
