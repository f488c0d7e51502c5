// Copyright 2026 The protodiff Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#ifndef PROTODIFF_PIPELINE_HPP_
#define PROTODIFF_PIPELINE_HPP_

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "protodiff/diffusion.hpp"
#include "protodiff/eval.hpp"
#include "protodiff/features.hpp"
#include "protodiff/postproc.hpp"
#include "protodiff/synthio.hpp"

namespace protodiff {

enum class Method {
  kNone,
  kNms,
  kSoftNms,
  kWbf,
  kSoftMerge,
  kDiffusion,
  kDiffusionNms,
};

// Selector strings: none | nms | softnms | wbf | softmerge | diffusion |
// diffusion+nms.
std::string_view method_name(Method m);
std::optional<Method> parse_method(std::string_view name);
std::span<const Method> all_methods();

struct PipelineConfig {
  DiffusionParams diffusion;
  Method method = Method::kDiffusion;
  int max_output = kMaxDetectionsPerImage;
  double nms_iou = 0.5;
  double softnms_sigma = 0.5;
  double wbf_iou = 0.55;
  int jobs = 1;
  // When set, prototypes come from here instead of the support stage.
  std::optional<std::vector<ClassPrototype>> prototypes;
};

// Throws std::invalid_argument on out-of-range fields.
void validate(const PipelineConfig& cfg);

// Pools every support over its mask and averages per class. Throws
// PipelineError listing the classes in [0, num_classes) without support.
std::vector<ClassPrototype> run_support_stage(const Dataset& ds);

// Proposals of one query image with their predicted class and similarity.
// Uses the stored feature when present, otherwise pools the image map.
std::vector<Proposal> run_query_stage(const Dataset& ds, const std::string& image_id,
                                      std::span<const ClassPrototype> prototypes);

// Applies the configured method to one image's proposals and keeps the
// max_output best. `source` of each detection indexes `proposals`.
std::vector<ScoredDetection> run_refine_stage(std::span<const Proposal> proposals,
                                              const PipelineConfig& cfg);

struct RunResult {
  std::vector<Detection> detections;  // per image, descending score
  EvalReport report;
  std::vector<ClassPrototype> prototypes;
};

// Stages 1-3 on every query image, then evaluation. Output is identical
// for any cfg.jobs.
RunResult run_end_to_end(const Dataset& ds, const PipelineConfig& cfg);
RunResult run_end_to_end(const std::filesystem::path& manifest, const PipelineConfig& cfg);

}  // namespace protodiff

#endif  // PROTODIFF_PIPELINE_HPP_
