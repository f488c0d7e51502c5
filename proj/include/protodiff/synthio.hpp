// Copyright 2026 The protodiff Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Interchange formats for precomputed pipeline inputs and the seeded
// synthetic corpus generator. See docs/formats.md for the byte layouts.

#ifndef PROTODIFF_SYNTHIO_HPP_
#define PROTODIFF_SYNTHIO_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "protodiff/eval.hpp"
#include "protodiff/features.hpp"
#include "protodiff/geometry.hpp"

namespace protodiff {

inline constexpr int kFormatVersion = 1;
inline constexpr double kMinProposalScore = 0.01;
inline constexpr std::size_t kMaxProposalsPerImage = 500;
inline constexpr int kMaxDetectionsPerImage = 100;

enum class ImageRole { kSupport, kQuery };

struct ImageInfo {
  std::string id;
  int width = 0;
  int height = 0;
  ImageRole role = ImageRole::kQuery;
  std::string feature_map_path;  // relative to the manifest; may be empty
  std::optional<FeatureMap> feature_map;
};

struct ProposalRecord {
  std::string image_id;
  BoundingBox box;
  BinaryMask mask;
  double upn_score = 0.0;
  std::optional<FeatureVector> feature;
  // Generator provenance ("whole", "fragment", "distractor") and the
  // index of the parent object within the image; informational only.
  std::string origin;
  int parent = -1;
};

struct Dataset {
  int format_version = kFormatVersion;
  int num_classes = 0;
  int shots = 0;
  std::vector<ImageInfo> images;
  std::vector<SupportAnnotation> supports;
  // Keyed by query image id; every query image has an entry.
  std::map<std::string, std::vector<ProposalRecord>> proposals;
  std::vector<GroundTruthBox> ground_truth;
  // Substitutions made while loading (e.g. box masks for missing masks).
  std::vector<std::string> warnings;

  const ImageInfo& image(const std::string& id) const;
  std::vector<std::string> query_image_ids() const;
};

// Feature-map blob: 16-byte header then little-endian float32 values.
//   bytes 0-3   magic "PDFM"
//   bytes 4-5   uint16 version (1)
//   bytes 6-7   uint16 channels
//   bytes 8-11  uint32 grid height
//   bytes 12-15 uint32 grid width
void write_feature_map(const std::filesystem::path& path, const FeatureMap& fm);
// image dims are not stored in the blob; they come from the manifest.
FeatureMap read_feature_map(const std::filesystem::path& path, int image_width,
                            int image_height);

// Validates and filters: proposals scoring below 0.01 are dropped and at
// most the 500 best-scored proposals per image are kept (original order
// among survivors). Missing or empty masks are replaced by the box mask and
// recorded in `warnings`. Throws FormatError naming file and record on any
// other violation.
Dataset load_dataset(const std::filesystem::path& manifest_path);

// Writes a dataset in the interchange format (manifest.json plus record
// files) and returns the manifest path. Feature maps attached to images are
// written as blobs.
std::filesystem::path write_dataset(const Dataset& ds,
                                    const std::filesystem::path& dir);

struct IntRange {
  int lo = 0;
  int hi = 0;
};

struct RealRange {
  double lo = 0.0;
  double hi = 0.0;
};

struct GeneratorConfig {
  std::uint64_t seed = 17;
  int images = 50;
  int num_classes = 3;
  int shots = 1;
  IntRange objects_per_image{2, 4};
  IntRange fragments_per_object{3, 6};
  IntRange distractors_per_image{0, 2};
  int feature_dim = 64;
  double feature_noise = 0.15;
  RealRange fragment_score_range{0.05, 0.5};
  RealRange whole_score_range{0.6, 0.95};
  // Lets fragment and whole-object scores be drawn from overlapping ranges.
  bool allow_score_overlap = false;
  int image_size = 128;
  int grid_size = 16;
  // Emit dense query feature maps instead of per-proposal feature vectors.
  bool query_feature_maps = false;
  int jobs = 1;
};

// Throws std::invalid_argument describing the first bad field.
void validate(const GeneratorConfig& cfg);

// Deterministic in (cfg minus jobs). Throws PipelineError when object
// placement fails after bounded retries. Returns the manifest path.
std::filesystem::path generate_dataset(const GeneratorConfig& cfg,
                                       const std::filesystem::path& dir);

// In-memory variant used by generate_dataset.
Dataset generate_corpus(const GeneratorConfig& cfg);

// Report as "key=value" lines: nAP, nAP50, nAP75, det_count, gt_count and
// one "class.<id>.AP@<thr>=" line per class and threshold.
std::string format_report_text(const EvalReport& report);
std::string format_report_json(const EvalReport& report);

// Tab-separated detections with a header line; scores and coordinates use
// shortest round-trip decimal form.
std::string format_detections(std::span<const Detection> dets);
std::vector<Detection> parse_detections(const std::string& text);
std::vector<Detection> read_detections(const std::filesystem::path& path);

// Caps each image to max_per_image detections by score, then writes
// detections.tsv, report.txt and report.json into dir (created if needed).
void export_run(std::span<const Detection> dets, const EvalReport& report,
                const std::filesystem::path& dir,
                int max_per_image = kMaxDetectionsPerImage);

// Canonical output order: image id, then descending score, then input order.
std::vector<Detection> cap_per_image(std::span<const Detection> dets,
                                     int max_per_image);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace protodiff

#endif  // PROTODIFF_SYNTHIO_HPP_
