// Copyright 2026 The protodiff Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "protodiff/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "protodiff/error.hpp"

namespace protodiff {

bool is_valid(const BoundingBox& b) {
  const bool finite = std::isfinite(b.x1) && std::isfinite(b.y1) &&
                      std::isfinite(b.x2) && std::isfinite(b.y2);
  return finite && b.x1 >= 0.0 && b.y1 >= 0.0 && b.x1 < b.x2 && b.y1 < b.y2;
}

void validate(const BoundingBox& b, const char* what) {
  if (!is_valid(b)) {
    throw FormatError(std::string(what) + ": invalid box [" +
                      std::to_string(b.x1) + ", " + std::to_string(b.y1) +
                      ", " + std::to_string(b.x2) + ", " +
                      std::to_string(b.y2) + "]");
  }
}

double box_area(const BoundingBox& b) { return (b.x2 - b.x1) * (b.y2 - b.y1); }

double box_iou(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = box_area(a) + box_area(b) - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

BinaryMask::BinaryMask(int width, int height, std::vector<std::uint32_t> runs)
    : width_(width), height_(height), runs_(std::move(runs)) {
  if (width < 0 || height < 0) {
    throw FormatError("mask: negative dimensions");
  }
  std::int64_t total = 0;
  for (std::size_t i = 0; i < runs_.size(); ++i) {
    total += runs_[i];
    if (i % 2 == 1) area_ += runs_[i];
  }
  const std::int64_t expected = static_cast<std::int64_t>(width) * height;
  if (total != expected) {
    throw FormatError("mask: run lengths sum to " + std::to_string(total) +
                      ", expected " + std::to_string(expected) + " (" +
                      std::to_string(width) + "x" + std::to_string(height) +
                      ")");
  }
}

BinaryMask BinaryMask::from_raster(int width, int height,
                                   std::span<const std::uint8_t> pixels) {
  const std::size_t n = static_cast<std::size_t>(width) * height;
  if (pixels.size() != n) {
    throw FormatError("mask: raster size does not match dimensions");
  }
  std::vector<std::uint32_t> runs;
  std::uint8_t current = 0;
  std::uint32_t count = 0;
  for (std::uint8_t p : pixels) {
    const std::uint8_t bit = p ? 1 : 0;
    if (bit != current) {
      runs.push_back(count);
      current = bit;
      count = 0;
    }
    ++count;
  }
  runs.push_back(count);
  return BinaryMask(width, height, std::move(runs));
}

BinaryMask BinaryMask::zeros(int width, int height) {
  return BinaryMask(width, height,
                    {static_cast<std::uint32_t>(width) * height});
}

BinaryMask BinaryMask::ones(int width, int height) {
  return BinaryMask(width, height,
                    {0u, static_cast<std::uint32_t>(width) * height});
}

std::vector<std::uint8_t> BinaryMask::to_raster() const {
  std::vector<std::uint8_t> out;
  out.reserve(static_cast<std::size_t>(width_) * height_);
  for (std::size_t i = 0; i < runs_.size(); ++i) {
    out.insert(out.end(), runs_[i], static_cast<std::uint8_t>(i % 2));
  }
  return out;
}

namespace {

std::vector<std::uint32_t> canonical_runs(const std::vector<std::uint32_t>& runs) {
  // out[k] holds value k % 2; zero-length runs are dropped and neighbours
  // of equal value merged.
  std::vector<std::uint32_t> out{0};
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (runs[i] == 0) continue;
    if ((out.size() - 1) % 2 == i % 2) {
      out.back() += runs[i];
    } else {
      out.push_back(runs[i]);
    }
  }
  return out;
}

}  // namespace

bool BinaryMask::operator==(const BinaryMask& o) const {
  if (width_ != o.width_ || height_ != o.height_) return false;
  if (runs_ == o.runs_) return true;
  return canonical_runs(runs_) == canonical_runs(o.runs_);
}

std::int64_t mask_area(const BinaryMask& m) { return m.area(); }

namespace {

// Walks the 1-runs of a mask as half-open [begin, end) pixel intervals.
class OnesCursor {
 public:
  explicit OnesCursor(const BinaryMask& m) : runs_(m.runs()) { advance(); }

  bool done() const { return done_; }
  std::int64_t begin() const { return begin_; }
  std::int64_t end() const { return end_; }

  void advance() {
    while (index_ + 1 < runs_.size()) {
      pos_ += runs_[index_];
      const std::uint32_t ones = runs_[index_ + 1];
      index_ += 2;
      if (ones > 0) {
        begin_ = pos_;
        end_ = pos_ + ones;
        pos_ = end_;
        return;
      }
    }
    done_ = true;
  }

 private:
  const std::vector<std::uint32_t>& runs_;
  std::size_t index_ = 0;
  std::int64_t pos_ = 0;
  std::int64_t begin_ = 0;
  std::int64_t end_ = 0;
  bool done_ = false;
};

void require_same_dims(const BinaryMask& a, const BinaryMask& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw FormatError("mask dimension mismatch: " + std::to_string(a.width()) +
                      "x" + std::to_string(a.height()) + " vs " +
                      std::to_string(b.width()) + "x" +
                      std::to_string(b.height()));
  }
}

}  // namespace

std::int64_t mask_intersection_area(const BinaryMask& a, const BinaryMask& b) {
  require_same_dims(a, b);
  OnesCursor ca(a);
  OnesCursor cb(b);
  std::int64_t total = 0;
  while (!ca.done() && !cb.done()) {
    const std::int64_t lo = std::max(ca.begin(), cb.begin());
    const std::int64_t hi = std::min(ca.end(), cb.end());
    if (hi > lo) total += hi - lo;
    if (ca.end() < cb.end()) {
      ca.advance();
    } else {
      cb.advance();
    }
  }
  return total;
}

double mask_coverage(const BinaryMask& src, const BinaryMask& dst) {
  require_same_dims(src, dst);
  if (src.area() == 0) {
    throw std::invalid_argument("mask_coverage: source mask is empty");
  }
  return static_cast<double>(mask_intersection_area(src, dst)) /
         static_cast<double>(src.area());
}

std::optional<BoundingBox> mask_bounds(const BinaryMask& m) {
  if (m.area() == 0) return std::nullopt;
  const std::int64_t w = m.width();
  std::int64_t min_x = w, min_y = m.height(), max_x = -1, max_y = -1;
  for (OnesCursor c(m); !c.done(); c.advance()) {
    const std::int64_t first_row = c.begin() / w;
    const std::int64_t last_row = (c.end() - 1) / w;
    min_y = std::min(min_y, first_row);
    max_y = std::max(max_y, last_row);
    if (first_row != last_row) {
      min_x = 0;
      max_x = w - 1;
    } else {
      min_x = std::min(min_x, c.begin() % w);
      max_x = std::max(max_x, (c.end() - 1) % w);
    }
  }
  return BoundingBox{static_cast<double>(min_x), static_cast<double>(min_y),
                     static_cast<double>(max_x + 1),
                     static_cast<double>(max_y + 1)};
}

SoftMask mask_downsample(const BinaryMask& m, int out_width, int out_height) {
  if (out_width < 1 || out_height < 1) {
    throw std::invalid_argument("mask_downsample: target dims must be >= 1");
  }
  SoftMask out{out_width, out_height,
               std::vector<double>(static_cast<std::size_t>(out_width) *
                                   out_height)};
  const int w = m.width();
  const int h = m.height();
  if (w == 0 || h == 0) return out;
  const std::vector<std::uint8_t> px = m.to_raster();
  const double sx = static_cast<double>(w) / out_width;
  const double sy = static_cast<double>(h) / out_height;

  struct Tap {
    int lo, hi;
    double frac;
  };
  auto tap = [](int i, double scale, int limit) {
    const double src = std::max((i + 0.5) * scale - 0.5, 0.0);
    const int lo = std::min(static_cast<int>(src), limit - 1);
    const int hi = std::min(lo + 1, limit - 1);
    return Tap{lo, hi, src - lo};
  };

  for (int r = 0; r < out_height; ++r) {
    const Tap ty = tap(r, sy, h);
    for (int c = 0; c < out_width; ++c) {
      const Tap tx = tap(c, sx, w);
      auto p = [&](int y, int x) {
        return static_cast<double>(px[static_cast<std::size_t>(y) * w + x]);
      };
      const double top = p(ty.lo, tx.lo) * (1.0 - tx.frac) + p(ty.lo, tx.hi) * tx.frac;
      const double bot = p(ty.hi, tx.lo) * (1.0 - tx.frac) + p(ty.hi, tx.hi) * tx.frac;
      const double v = top * (1.0 - ty.frac) + bot * ty.frac;
      out.weights[static_cast<std::size_t>(r) * out_width + c] =
          std::clamp(v, 0.0, 1.0);
    }
  }
  return out;
}

RasterizedBox box_to_full_mask(const BoundingBox& b, int width, int height) {
  auto first = [](double lo, int limit) {
    return std::clamp(static_cast<int>(std::ceil(lo - 0.5)), 0, limit);
  };
  const int cx0 = first(b.x1, width);
  const int cx1 = first(b.x2, width);
  const int cy0 = first(b.y1, height);
  const int cy1 = first(b.y2, height);
  if (cx0 >= cx1 || cy0 >= cy1) {
    return {BinaryMask::zeros(width, height), true};
  }
  std::vector<std::uint32_t> runs;
  const auto row_span = static_cast<std::uint32_t>(cx1 - cx0);
  std::uint32_t zeros = static_cast<std::uint32_t>(cy0) * width + cx0;
  for (int y = cy0; y < cy1; ++y) {
    runs.push_back(zeros);
    runs.push_back(row_span);
    zeros = static_cast<std::uint32_t>(width - cx1 + cx0);
  }
  runs.push_back(static_cast<std::uint32_t>(width - cx1) +
                 static_cast<std::uint32_t>(height - cy1) * width);
  return {BinaryMask(width, height, std::move(runs)), false};
}

}  // namespace protodiff
