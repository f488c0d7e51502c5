// Copyright 2026 The protodiff Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>

#include "parallel.hpp"
#include "protodiff/error.hpp"
#include "protodiff/synthio.hpp"
#include "rng.hpp"

namespace protodiff {

namespace {

using detail::Rng;

// Stream tags for Rng::stream.
constexpr std::uint32_t kPrototypeStream = 0;
constexpr std::uint32_t kQueryStream = 1;
constexpr std::uint32_t kSupportStream = 2;

constexpr int kPlacementRetries = 500;
constexpr int kFragmentRetries = 100;
constexpr int kMinFragmentArea = 4;
constexpr int kMargin = 2;

std::string numbered(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%04d", prefix, i);
  return buf;
}

std::vector<double> unit_gaussian(Rng& rng, int dim) {
  std::vector<double> v(static_cast<std::size_t>(dim));
  double norm = 0.0;
  while (!(norm > 0.0)) {
    for (double& x : v) x = rng.normal();
    norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
  }
  for (double& x : v) x /= norm;
  return v;
}

// Rounds through float so the values survive float32 storage unchanged.
FeatureVector as_float_vector(std::vector<double> v, bool normalized) {
  for (double& x : v) x = static_cast<double>(static_cast<float>(x));
  return {std::move(v), normalized};
}

std::vector<double> noisy_direction(Rng& rng, const std::vector<double>& proto,
                                    double noise) {
  const std::vector<double> g = unit_gaussian(rng, static_cast<int>(proto.size()));
  FeatureVector v;
  v.values.resize(proto.size());
  for (std::size_t i = 0; i < proto.size(); ++i) {
    v.values[i] = (1.0 - noise) * proto[i] + noise * g[i];
  }
  return l2_normalize(v).values;
}

// Random direction with every prototype component projected out.
std::vector<double> orthogonal_direction(Rng& rng,
                                         const std::vector<std::vector<double>>& protos,
                                         int dim) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::vector<double> v = unit_gaussian(rng, dim);
    // Two Gram-Schmidt passes against the (non-orthogonal) prototypes.
    for (int pass = 0; pass < 2; ++pass) {
      std::vector<std::vector<double>> basis;
      for (const auto& p : protos) {
        std::vector<double> b = p;
        for (const auto& q : basis) {
          double d = 0.0;
          for (int i = 0; i < dim; ++i) d += b[i] * q[i];
          for (int i = 0; i < dim; ++i) b[i] -= d * q[i];
        }
        double n = 0.0;
        for (double x : b) n += x * x;
        n = std::sqrt(n);
        if (n < 1e-9) continue;
        for (double& x : b) x /= n;
        double d = 0.0;
        for (int i = 0; i < dim; ++i) d += v[i] * b[i];
        for (int i = 0; i < dim; ++i) v[i] -= d * b[i];
        basis.push_back(std::move(b));
      }
    }
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n > 1e-6) {
      for (double& x : v) x /= n;
      return v;
    }
  }
  throw PipelineError("generator: feature_dim too small for orthogonal distractors");
}

struct Shape {
  int x0, y0, w, h;
  bool ellipse;

  BoundingBox padded(int margin) const {
    return {static_cast<double>(x0 - margin), static_cast<double>(y0 - margin),
            static_cast<double>(x0 + w + margin), static_cast<double>(y0 + h + margin)};
  }
};

BinaryMask rasterize(const Shape& s, int size) {
  std::vector<std::uint8_t> px(static_cast<std::size_t>(size) * size, 0);
  const double cx = s.x0 + s.w / 2.0;
  const double cy = s.y0 + s.h / 2.0;
  const double rx = s.w / 2.0;
  const double ry = s.h / 2.0;
  for (int y = s.y0; y < s.y0 + s.h; ++y) {
    for (int x = s.x0; x < s.x0 + s.w; ++x) {
      bool inside = true;
      if (s.ellipse) {
        const double dx = (x + 0.5 - cx) / rx;
        const double dy = (y + 0.5 - cy) / ry;
        inside = dx * dx + dy * dy <= 1.0;
      }
      if (inside) px[static_cast<std::size_t>(y) * size + x] = 1;
    }
  }
  return BinaryMask::from_raster(size, size, px);
}

bool overlaps_any(const Shape& s, const std::vector<Shape>& placed) {
  const BoundingBox a = s.padded(kMargin);
  for (const Shape& o : placed) {
    const BoundingBox b = o.padded(0);
    if (a.x1 < b.x2 && b.x1 < a.x2 && a.y1 < b.y2 && b.y1 < a.y2) return true;
  }
  return false;
}

Shape place(Rng& rng, int size, const std::vector<Shape>& placed, const std::string& where) {
  const int min_side = std::max(6, size / 8);
  const int max_side = std::max(min_side, size / 3);
  for (int attempt = 0; attempt < kPlacementRetries; ++attempt) {
    Shape s;
    s.w = rng.uniform_int(min_side, max_side);
    s.h = rng.uniform_int(min_side, max_side);
    s.x0 = rng.uniform_int(0, size - s.w);
    s.y0 = rng.uniform_int(0, size - s.h);
    s.ellipse = rng.uniform() < 0.5;
    if (!overlaps_any(s, placed)) return s;
  }
  throw PipelineError("generator: could not place a shape in " + where + " after " +
                      std::to_string(kPlacementRetries) + " attempts");
}

std::vector<std::uint8_t> rect_raster(int size, int x0, int y0, int x1, int y1) {
  std::vector<std::uint8_t> px(static_cast<std::size_t>(size) * size, 0);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) px[static_cast<std::size_t>(y) * size + x] = 1;
  }
  return px;
}

// Random axis-aligned sub-region of the object, intersected with its mask.
BinaryMask fragment_of(Rng& rng, const BinaryMask& object, const BoundingBox& bounds,
                       int size, const std::string& where) {
  const std::vector<std::uint8_t> obj = object.to_raster();
  const int bx0 = static_cast<int>(bounds.x1);
  const int by0 = static_cast<int>(bounds.y1);
  const int bw = static_cast<int>(bounds.x2) - bx0;
  const int bh = static_cast<int>(bounds.y2) - by0;
  for (int attempt = 0; attempt < kFragmentRetries; ++attempt) {
    const int fw = std::max(2, static_cast<int>(std::lround(bw * rng.uniform(0.2, 0.75))));
    const int fh = std::max(2, static_cast<int>(std::lround(bh * rng.uniform(0.2, 0.75))));
    const int fx = bx0 + rng.uniform_int(0, std::max(0, bw - fw));
    const int fy = by0 + rng.uniform_int(0, std::max(0, bh - fh));
    std::vector<std::uint8_t> px = rect_raster(size, fx, fy, std::min(fx + fw, size),
                                               std::min(fy + fh, size));
    int area = 0;
    for (std::size_t i = 0; i < px.size(); ++i) {
      px[i] &= obj[i];
      area += px[i];
    }
    if (area >= kMinFragmentArea) return BinaryMask::from_raster(size, size, px);
  }
  throw PipelineError("generator: could not cut a fragment in " + where);
}

// Grid map whose cells touched by a region carry that region's feature;
// other cells hold unit Gaussian noise.
struct Painter {
  const GeneratorConfig& cfg;
  std::vector<float> data;
  std::vector<std::uint8_t> painted;

  explicit Painter(const GeneratorConfig& c)
      : cfg(c),
        data(static_cast<std::size_t>(c.feature_dim) * c.grid_size * c.grid_size, 0.0f),
        painted(static_cast<std::size_t>(c.grid_size) * c.grid_size, 0) {}

  void set(int cell, const std::vector<double>& v) {
    const std::size_t plane = static_cast<std::size_t>(cfg.grid_size) * cfg.grid_size;
    for (int ch = 0; ch < cfg.feature_dim; ++ch) {
      data[ch * plane + cell] = static_cast<float>(v[ch]);
    }
    painted[cell] = 1;
  }

  void paint(Rng& rng, const BinaryMask& mask, const std::vector<double>& proto,
             bool add_noise) {
    const SoftMask sm = mask_downsample(mask, cfg.grid_size, cfg.grid_size);
    for (int cell = 0; cell < cfg.grid_size * cfg.grid_size; ++cell) {
      if (sm.weights[cell] > 0.0) {
        set(cell, add_noise ? noisy_direction(rng, proto, cfg.feature_noise) : proto);
      }
    }
  }

  FeatureMap finish(Rng& rng) {
    for (int cell = 0; cell < cfg.grid_size * cfg.grid_size; ++cell) {
      if (!painted[cell]) set(cell, unit_gaussian(rng, cfg.feature_dim));
    }
    return FeatureMap(cfg.feature_dim, cfg.grid_size, cfg.grid_size, cfg.image_size,
                      cfg.image_size, std::move(data));
  }
};

struct QueryImage {
  ImageInfo info;
  std::vector<ProposalRecord> proposals;
  std::vector<GroundTruthBox> gts;
};

QueryImage make_query_image(const GeneratorConfig& cfg, int index,
                            const std::vector<std::vector<double>>& protos) {
  Rng rng = Rng::stream(cfg.seed, kQueryStream, static_cast<std::uint32_t>(index));
  const int size = cfg.image_size;
  QueryImage q;
  q.info = {numbered("q", index), size, size, ImageRole::kQuery, "", std::nullopt};
  const std::string& id = q.info.id;

  const RealRange frag_range = cfg.allow_score_overlap
      ? RealRange{std::min(cfg.fragment_score_range.lo, cfg.whole_score_range.lo),
                  std::max(cfg.fragment_score_range.hi, cfg.whole_score_range.hi)}
      : cfg.fragment_score_range;
  const RealRange whole_range = cfg.allow_score_overlap ? frag_range : cfg.whole_score_range;

  std::vector<Shape> placed;
  Painter painter(cfg);
  const int objects = rng.uniform_int(cfg.objects_per_image.lo, cfg.objects_per_image.hi);
  for (int k = 0; k < objects; ++k) {
    const int cls = rng.uniform_int(0, cfg.num_classes - 1);
    const Shape shape = place(rng, size, placed, id);
    placed.push_back(shape);
    const BinaryMask mask = rasterize(shape, size);
    const BoundingBox bounds = *mask_bounds(mask);
    q.gts.push_back({id, bounds, cls});
    if (cfg.query_feature_maps) painter.paint(rng, mask, protos[cls], true);

    ProposalRecord whole;
    whole.image_id = id;
    whole.box = bounds;
    whole.mask = mask;
    whole.upn_score = rng.uniform(whole_range.lo, whole_range.hi);
    if (!cfg.query_feature_maps) {
      whole.feature = as_float_vector(noisy_direction(rng, protos[cls], cfg.feature_noise), true);
    }
    whole.origin = "whole";
    whole.parent = k;
    q.proposals.push_back(std::move(whole));

    const int fragments = rng.uniform_int(cfg.fragments_per_object.lo, cfg.fragments_per_object.hi);
    for (int f = 0; f < fragments; ++f) {
      ProposalRecord frag;
      frag.image_id = id;
      frag.mask = fragment_of(rng, mask, bounds, size, id);
      frag.box = *mask_bounds(frag.mask);
      // Larger pieces tend to score higher.
      const double frac = static_cast<double>(frag.mask.area()) / static_cast<double>(mask.area());
      const double t = 0.5 * rng.uniform() + 0.5 * std::sqrt(frac);
      frag.upn_score = frag_range.lo + (frag_range.hi - frag_range.lo) * std::min(t, 1.0);
      if (!cfg.query_feature_maps) {
        frag.feature = as_float_vector(noisy_direction(rng, protos[cls], cfg.feature_noise), true);
      }
      frag.origin = "fragment";
      frag.parent = k;
      q.proposals.push_back(std::move(frag));
    }
  }

  const int distractors =
      rng.uniform_int(cfg.distractors_per_image.lo, cfg.distractors_per_image.hi);
  for (int d = 0; d < distractors; ++d) {
    const Shape shape = place(rng, size, placed, id);
    placed.push_back(shape);
    ProposalRecord p;
    p.image_id = id;
    p.mask = rasterize(shape, size);
    p.box = *mask_bounds(p.mask);
    p.upn_score = rng.uniform(frag_range.lo, whole_range.hi);
    const std::vector<double> dir = orthogonal_direction(rng, protos, cfg.feature_dim);
    if (cfg.query_feature_maps) {
      painter.paint(rng, p.mask, dir, false);
    } else {
      p.feature = as_float_vector(dir, true);
    }
    p.origin = "distractor";
    q.proposals.push_back(std::move(p));
  }

  // Shuffle so that file order carries no information.
  for (std::size_t i = q.proposals.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1));
    std::swap(q.proposals[i - 1], q.proposals[j]);
  }
  if (cfg.query_feature_maps) {
    q.info.feature_map = painter.finish(rng);
    q.info.feature_map_path = "fmaps/" + id + ".bin";
  }
  return q;
}

}  // namespace

void validate(const GeneratorConfig& cfg) {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
  };
  auto int_range = [&](const IntRange& r, const char* name, int min_lo) {
    need(r.lo >= min_lo && r.lo <= r.hi,
         std::string(name) + " must satisfy " + std::to_string(min_lo) + " <= lo <= hi");
  };
  auto score_range = [&](const RealRange& r, const char* name) {
    need(r.lo >= kMinProposalScore && r.lo <= r.hi && r.hi <= 1.0,
         std::string(name) + " must satisfy 0.01 <= lo <= hi <= 1");
  };
  need(cfg.images >= 1, "images must be >= 1");
  need(cfg.num_classes >= 1, "num_classes must be >= 1");
  need(cfg.shots >= 1, "shots must be >= 1");
  int_range(cfg.objects_per_image, "objects_per_image", 0);
  int_range(cfg.fragments_per_object, "fragments_per_object", 0);
  int_range(cfg.distractors_per_image, "distractors_per_image", 0);
  need(cfg.feature_dim > cfg.num_classes, "feature_dim must exceed num_classes");
  need(cfg.feature_dim <= 0xFFFF, "feature_dim must fit the blob header (<= 65535)");
  need(cfg.feature_noise >= 0.0 && cfg.feature_noise < 1.0, "feature_noise must lie in [0, 1)");
  score_range(cfg.fragment_score_range, "fragment_score_range");
  score_range(cfg.whole_score_range, "whole_score_range");
  need(cfg.allow_score_overlap || cfg.whole_score_range.lo > cfg.fragment_score_range.hi,
       "whole_score_range must lie strictly above fragment_score_range");
  need(cfg.image_size >= 16, "image_size must be >= 16");
  need(cfg.grid_size >= 1 && cfg.grid_size <= cfg.image_size,
       "grid_size must lie in [1, image_size]");
  need(cfg.jobs >= 1, "jobs must be >= 1");
}

Dataset generate_corpus(const GeneratorConfig& cfg) {
  validate(cfg);
  Dataset ds;
  ds.num_classes = cfg.num_classes;
  ds.shots = cfg.shots;

  Rng proto_rng = Rng::stream(cfg.seed, kPrototypeStream, 0);
  std::vector<std::vector<double>> protos;
  for (int c = 0; c < cfg.num_classes; ++c) protos.push_back(unit_gaussian(proto_rng, cfg.feature_dim));

  const int size = cfg.image_size;
  for (int c = 0; c < cfg.num_classes; ++c) {
    for (int k = 0; k < cfg.shots; ++k) {
      const int index = c * cfg.shots + k;
      Rng rng = Rng::stream(cfg.seed, kSupportStream, static_cast<std::uint32_t>(index));
      const std::string id = "s" + std::to_string(c) + "_" + std::to_string(k);
      const Shape shape = place(rng, size, {}, id);
      BinaryMask mask = rasterize(shape, size);
      Painter painter(cfg);
      painter.paint(rng, mask, protos[c], true);
      ImageInfo info{id, size, size, ImageRole::kSupport, "fmaps/" + id + ".bin",
                     painter.finish(rng)};
      ds.images.push_back(std::move(info));
      ds.supports.push_back({id, *mask_bounds(mask), c, std::move(mask)});
    }
  }

  std::vector<QueryImage> queries(static_cast<std::size_t>(cfg.images));
  detail::parallel_for(queries.size(), cfg.jobs, [&](std::size_t i) {
    queries[i] = make_query_image(cfg, static_cast<int>(i), protos);
  });
  for (QueryImage& q : queries) {
    ds.proposals[q.info.id] = std::move(q.proposals);
    for (GroundTruthBox& g : q.gts) ds.ground_truth.push_back(std::move(g));
    ds.images.push_back(std::move(q.info));
  }
  return ds;
}

std::filesystem::path generate_dataset(const GeneratorConfig& cfg,
                                       const std::filesystem::path& dir) {
  return write_dataset(generate_corpus(cfg), dir);
}

}  // namespace protodiff
