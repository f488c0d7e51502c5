// Copyright 2026 The protodiff Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "protodiff/pipeline.hpp"

#include <array>
#include <set>
#include <stdexcept>

#include "parallel.hpp"
#include "protodiff/error.hpp"

namespace protodiff {

namespace {

constexpr std::array<Method, 7> kMethods = {
    Method::kNone,      Method::kNms,       Method::kSoftNms,     Method::kWbf,
    Method::kSoftMerge, Method::kDiffusion, Method::kDiffusionNms,
};

ScoredDetection to_detection(const Proposal& p, std::size_t index, double score) {
  return {p.box, p.pred_class, score, p.mask, static_cast<std::int64_t>(index)};
}

}  // namespace

std::string_view method_name(Method m) {
  switch (m) {
    case Method::kNone: return "none";
    case Method::kNms: return "nms";
    case Method::kSoftNms: return "softnms";
    case Method::kWbf: return "wbf";
    case Method::kSoftMerge: return "softmerge";
    case Method::kDiffusion: return "diffusion";
    case Method::kDiffusionNms: return "diffusion+nms";
  }
  return "?";
}

std::optional<Method> parse_method(std::string_view name) {
  for (Method m : kMethods) {
    if (method_name(m) == name) return m;
  }
  return std::nullopt;
}

std::span<const Method> all_methods() { return kMethods; }

void validate(const PipelineConfig& cfg) {
  validate(cfg.diffusion);
  if (cfg.max_output < 1) throw std::invalid_argument("max_output must be >= 1");
  if (!(cfg.nms_iou > 0.0 && cfg.nms_iou < 1.0)) {
    throw std::invalid_argument("nms_iou must lie in (0, 1)");
  }
  if (!(cfg.wbf_iou > 0.0 && cfg.wbf_iou < 1.0)) {
    throw std::invalid_argument("wbf_iou must lie in (0, 1)");
  }
  if (!(cfg.softnms_sigma > 0.0)) throw std::invalid_argument("softnms_sigma must be > 0");
  if (cfg.jobs < 1) throw std::invalid_argument("jobs must be >= 1");
}

std::vector<ClassPrototype> run_support_stage(const Dataset& ds) {
  std::vector<LabeledFeature> pooled;
  pooled.reserve(ds.supports.size());
  for (const SupportAnnotation& s : ds.supports) {
    const ImageInfo& img = ds.image(s.image_id);
    if (!img.feature_map) {
      throw PipelineError("support stage: image '" + s.image_id + "' has no feature map");
    }
    const FeatureMap& fm = *img.feature_map;
    const SoftMask sm = mask_downsample(s.mask, fm.grid_width(), fm.grid_height());
    pooled.push_back({s.class_id, masked_roi_pool(fm, s.box, sm)});
  }
  std::vector<ClassPrototype> protos = build_prototypes(pooled);

  std::set<int> have;
  for (const ClassPrototype& p : protos) have.insert(p.class_id);
  std::string missing;
  for (int c = 0; c < ds.num_classes; ++c) {
    if (have.count(c) == 0) missing += (missing.empty() ? "" : ", ") + std::to_string(c);
  }
  if (!missing.empty()) {
    throw PipelineError("support stage: no support for class(es) " + missing);
  }
  return protos;
}

std::vector<Proposal> run_query_stage(const Dataset& ds, const std::string& image_id,
                                      std::span<const ClassPrototype> prototypes) {
  if (prototypes.empty()) throw PipelineError("query stage: no prototypes");
  const ImageInfo& img = ds.image(image_id);
  std::vector<Proposal> out;
  auto it = ds.proposals.find(image_id);
  if (it == ds.proposals.end()) return out;
  out.reserve(it->second.size());
  for (const ProposalRecord& rec : it->second) {
    Proposal p;
    p.box = rec.box;
    p.mask = rec.mask;
    p.upn_score = rec.upn_score;
    if (rec.feature) {
      p.feature = *rec.feature;
    } else if (img.feature_map) {
      const FeatureMap& fm = *img.feature_map;
      p.feature = masked_roi_pool(fm, rec.box,
                                  mask_downsample(rec.mask, fm.grid_width(), fm.grid_height()));
    } else {
      throw PipelineError("query stage: proposal on '" + image_id + "' has no feature source");
    }
    const ClassMatch m = match_proposal(p.feature, prototypes);
    p.pred_class = m.class_id;
    p.similarity = m.similarity;
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<ScoredDetection> run_refine_stage(std::span<const Proposal> proposals,
                                              const PipelineConfig& cfg) {
  validate(cfg);
  std::vector<ScoredDetection> raw;
  raw.reserve(proposals.size());
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    raw.push_back(to_detection(proposals[i], i, proposals[i].similarity));
  }
  auto diffused = [&] {
    std::vector<ScoredDetection> out = raw;
    for (const RefinedScore& r : diffuse_all_classes(proposals, cfg.diffusion)) {
      out[r.index].score = r.score;
    }
    return out;
  };

  std::vector<ScoredDetection> refined;
  switch (cfg.method) {
    case Method::kNone: refined = raw; break;
    case Method::kNms: refined = nms(raw, cfg.nms_iou); break;
    case Method::kSoftNms: refined = soft_nms(raw, cfg.softnms_sigma); break;
    case Method::kWbf: refined = wbf(raw, cfg.wbf_iou); break;
    case Method::kSoftMerge:
      try {
        refined = soft_merge(raw);
      } catch (const std::invalid_argument& e) {
        throw PipelineError(std::string("softmerge: ") + e.what());
      }
      break;
    case Method::kDiffusion: refined = diffused(); break;
    case Method::kDiffusionNms: refined = nms(diffused(), cfg.nms_iou); break;
  }
  return topk_by_score(refined, static_cast<std::size_t>(cfg.max_output));
}

RunResult run_end_to_end(const Dataset& ds, const PipelineConfig& cfg) {
  validate(cfg);
  RunResult result;
  try {
    result.prototypes = cfg.prototypes ? *cfg.prototypes : run_support_stage(ds);
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    throw PipelineError(std::string("support stage: ") + e.what());
  }

  const std::vector<std::string> ids = ds.query_image_ids();
  std::vector<std::vector<Detection>> per_image(ids.size());
  detail::parallel_for(ids.size(), cfg.jobs, [&](std::size_t i) {
    std::vector<Proposal> props;
    try {
      props = run_query_stage(ds, ids[i], result.prototypes);
    } catch (const PipelineError&) {
      throw;
    } catch (const std::exception& e) {
      throw PipelineError("query stage on '" + ids[i] + "': " + e.what());
    }
    std::vector<ScoredDetection> dets;
    try {
      dets = run_refine_stage(props, cfg);
    } catch (const PipelineError&) {
      throw;
    } catch (const std::exception& e) {
      throw PipelineError("refine stage on '" + ids[i] + "': " + e.what());
    }
    per_image[i].reserve(dets.size());
    for (const ScoredDetection& d : dets) {
      per_image[i].push_back({ids[i], d.class_id, d.score, d.box});
    }
  });
  for (auto& dets : per_image) {
    result.detections.insert(result.detections.end(), dets.begin(), dets.end());
  }
  result.report = evaluate(result.detections, ds.ground_truth, cfg.max_output);
  return result;
}

RunResult run_end_to_end(const std::filesystem::path& manifest, const PipelineConfig& cfg) {
  return run_end_to_end(load_dataset(manifest), cfg);
}

}  // namespace protodiff
