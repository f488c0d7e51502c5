// Copyright 2026 The protodiff Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#ifndef PROTODIFF_GEOMETRY_HPP_
#define PROTODIFF_GEOMETRY_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace protodiff {

/// Axis-aligned box in continuous pixel coordinates, origin top-left.
struct BoundingBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  bool operator==(const BoundingBox&) const = default;
};

// x1 < x2, y1 < y2, all finite and >= 0.
bool is_valid(const BoundingBox& b);
// Throws FormatError naming `what` when the box is invalid.
void validate(const BoundingBox& b, const char* what = "box");

double box_area(const BoundingBox& b);
double box_iou(const BoundingBox& a, const BoundingBox& b);

/// Binary raster stored as uncompressed row-major run lengths. Runs
/// alternate 0s and 1s and always start with the count of leading zeros
/// (which may be 0).
class BinaryMask {
 public:
  BinaryMask() = default;
  // Throws FormatError if the runs do not sum to width * height.
  BinaryMask(int width, int height, std::vector<std::uint32_t> runs);

  static BinaryMask from_raster(int width, int height,
                                std::span<const std::uint8_t> pixels);
  static BinaryMask zeros(int width, int height);
  static BinaryMask ones(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  const std::vector<std::uint32_t>& runs() const { return runs_; }
  std::int64_t area() const { return area_; }

  // Row-major, one byte per pixel (0 or 1).
  std::vector<std::uint8_t> to_raster() const;

  // Pixel equality; runs that differ only by zero-length interior runs
  // compare equal.
  bool operator==(const BinaryMask& o) const;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint32_t> runs_;
  std::int64_t area_ = 0;
};

std::int64_t mask_area(const BinaryMask& m);

// |a ∩ b| in pixels, computed on the run lengths directly.
std::int64_t mask_intersection_area(const BinaryMask& a, const BinaryMask& b);

// |src ∩ dst| / |src|. Throws FormatError on dimension mismatch and
// std::invalid_argument when src is empty.
double mask_coverage(const BinaryMask& src, const BinaryMask& dst);

// Tight pixel bounds of the 1-pixels as a box [minx, miny, maxx+1, maxy+1].
std::optional<BoundingBox> mask_bounds(const BinaryMask& m);

/// Fractional mask on a feature grid.
struct SoftMask {
  int width = 0;
  int height = 0;
  std::vector<double> weights;  // row-major, each in [0, 1]

  double at(int row, int col) const {
    return weights[static_cast<std::size_t>(row) * width + col];
  }
};

// Bilinear resampling with half-pixel centers (align_corners = false);
// fractional weights are kept.
SoftMask mask_downsample(const BinaryMask& m, int out_width, int out_height);

struct RasterizedBox {
  BinaryMask mask;
  bool empty = false;  // box had no pixel centers inside the image
};

// 1 exactly on pixels whose centers (x + 0.5, y + 0.5) lie inside the box
// after clamping it to the image.
RasterizedBox box_to_full_mask(const BoundingBox& b, int width, int height);

}  // namespace protodiff

#endif  // PROTODIFF_GEOMETRY_HPP_
