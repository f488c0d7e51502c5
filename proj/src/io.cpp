// Copyright 2026 The protodiff Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <system_error>

#include "json.hpp"
#include "protodiff/error.hpp"
#include "protodiff/postproc.hpp"
#include "protodiff/synthio.hpp"

namespace protodiff {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<char, 4> kFeatureMapMagic = {'P', 'D', 'F', 'M'};
constexpr std::uint16_t kFeatureMapVersion = 1;

std::string shortest(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError("not a number: '" + std::string(s) + "'");
  }
  return v;
}

// Record-level context for error messages: "file:line".
struct Where {
  std::string file;
  std::size_t line = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw FormatError(file + ":" + std::to_string(line) + ": " + msg);
  }
};

template <typename T>
T field(const json& j, const char* key, const Where& at) {
  auto it = j.find(key);
  if (it == j.end()) at.fail(std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    at.fail(std::string("bad field '") + key + "': " + e.what());
  }
}

BoundingBox box_from_json(const json& j, const Where& at) {
  if (!j.is_array() || j.size() != 4) at.fail("box must be [x1, y1, x2, y2]");
  BoundingBox b;
  try {
    b = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
         j[3].get<double>()};
  } catch (const json::exception& e) {
    at.fail(std::string("bad box: ") + e.what());
  }
  if (!is_valid(b)) at.fail("invalid box (need 0 <= x1 < x2, 0 <= y1 < y2)");
  return b;
}

json box_to_json(const BoundingBox& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

BinaryMask mask_from_json(const json& j, const Where& at) {
  if (!j.is_object()) at.fail("mask must be an object");
  const int w = field<int>(j, "w", at);
  const int h = field<int>(j, "h", at);
  std::vector<std::int64_t> counts = field<std::vector<std::int64_t>>(j, "counts", at);
  std::vector<std::uint32_t> runs;
  runs.reserve(counts.size());
  for (std::int64_t c : counts) {
    if (c < 0 || c > std::numeric_limits<std::uint32_t>::max()) {
      at.fail("mask run count out of range");
    }
    runs.push_back(static_cast<std::uint32_t>(c));
  }
  try {
    return BinaryMask(w, h, std::move(runs));
  } catch (const FormatError& e) {
    at.fail(e.what());
  }
}

json mask_to_json(const BinaryMask& m) {
  return json{{"w", m.width()}, {"h", m.height()}, {"counts", m.runs()}};
}

FeatureVector feature_from_json(const json& j, const Where& at) {
  FeatureVector v;
  try {
    v.values = j.get<std::vector<double>>();
  } catch (const json::exception& e) {
    at.fail(std::string("bad feature: ") + e.what());
  }
  if (v.values.empty()) at.fail("feature vector is empty");
  for (double x : v.values) {
    if (!std::isfinite(x)) at.fail("feature vector has a non-finite value");
  }
  return v;
}

template <typename Fn>
void for_each_record(const fs::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  Where at{path.filename().string(), 0};
  while (std::getline(in, line)) {
    ++at.line;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      at.fail(std::string("unparsable record: ") + e.what());
    }
    fn(j, at);
  }
}

void write_lines(const fs::path& path, const std::vector<json>& records) {
  std::string out;
  for (const json& r : records) {
    out += r.dump();
    out += '\n';
  }
  write_text_file(path, out);
}

std::string role_name(ImageRole r) { return r == ImageRole::kSupport ? "support" : "query"; }

// Ensures the mask is usable, substituting the box mask when it is absent
// or empty. Fails when even the box mask would be empty.
void settle_mask(std::optional<BinaryMask>& mask, const BoundingBox& box,
                 const ImageInfo& img, const Where& at, const char* kind,
                 std::vector<std::string>& warnings) {
  if (mask && (mask->width() != img.width || mask->height() != img.height)) {
    at.fail(std::string(kind) + " mask is " + std::to_string(mask->width()) + "x" +
            std::to_string(mask->height()) + ", image '" + img.id + "' is " +
            std::to_string(img.width) + "x" + std::to_string(img.height));
  }
  if (mask && mask->area() > 0) return;
  RasterizedBox fallback = box_to_full_mask(box, img.width, img.height);
  if (fallback.empty) at.fail(std::string(kind) + " box lies outside the image");
  std::string msg = at.file + ":" + std::to_string(at.line) + ": " + kind +
                    (mask ? " mask is empty" : " has no mask") +
                    ", using the box mask";
  warn(msg);
  warnings.push_back(std::move(msg));
  mask = std::move(fallback.mask);
}

}  // namespace

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

const ImageInfo& Dataset::image(const std::string& id) const {
  for (const ImageInfo& img : images) {
    if (img.id == id) return img;
  }
  throw std::out_of_range("unknown image '" + id + "'");
}

std::vector<std::string> Dataset::query_image_ids() const {
  std::vector<std::string> ids;
  for (const ImageInfo& img : images) {
    if (img.role == ImageRole::kQuery) ids.push_back(img.id);
  }
  return ids;
}

void write_feature_map(const fs::path& path, const FeatureMap& fm) {
  if (fm.channels() > 0xFFFF) {
    throw std::invalid_argument("feature map has too many channels for the blob format");
  }
  std::string bytes;
  bytes.reserve(16 + fm.data().size() * 4);
  bytes.append(kFeatureMapMagic.data(), kFeatureMapMagic.size());
  auto put = [&](std::uint32_t v, int width) {
    for (int i = 0; i < width; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  put(kFeatureMapVersion, 2);
  put(static_cast<std::uint32_t>(fm.channels()), 2);
  put(static_cast<std::uint32_t>(fm.grid_height()), 4);
  put(static_cast<std::uint32_t>(fm.grid_width()), 4);
  for (float f : fm.data()) put(std::bit_cast<std::uint32_t>(f), 4);
  write_text_file(path, bytes);
}

FeatureMap read_feature_map(const fs::path& path, int image_width, int image_height) {
  const std::string bytes = read_text_file(path);
  const std::string name = path.filename().string();
  if (bytes.size() < 16) throw FormatError(name + ": truncated header");
  if (!std::equal(kFeatureMapMagic.begin(), kFeatureMapMagic.end(), bytes.begin())) {
    throw FormatError(name + ": bad magic");
  }
  auto get = [&](std::size_t off, int width) {
    std::uint32_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + i])) << (8 * i);
    }
    return v;
  };
  const std::uint32_t version = get(4, 2);
  if (version != kFeatureMapVersion) {
    throw FormatError(name + ": unsupported feature map version " + std::to_string(version));
  }
  const std::uint32_t channels = get(6, 2);
  const std::uint32_t gh = get(8, 4);
  const std::uint32_t gw = get(12, 4);
  const std::uint64_t count = static_cast<std::uint64_t>(channels) * gh * gw;
  if (bytes.size() != 16 + count * 4) {
    throw FormatError(name + ": expected " + std::to_string(count) + " floats, file holds " +
                      std::to_string((bytes.size() - 16) / 4));
  }
  std::vector<float> data(count);
  for (std::uint64_t i = 0; i < count; ++i) data[i] = std::bit_cast<float>(get(16 + 4 * i, 4));
  try {
    return FeatureMap(static_cast<int>(channels), static_cast<int>(gh), static_cast<int>(gw),
                      image_width, image_height, std::move(data));
  } catch (const FormatError& e) {
    throw FormatError(name + ": " + e.what());
  }
}

Dataset load_dataset(const fs::path& manifest_path) {
  const fs::path root = manifest_path.parent_path();
  Dataset ds;
  json manifest;
  try {
    manifest = json::parse(read_text_file(manifest_path));
  } catch (const json::exception& e) {
    throw FormatError(manifest_path.filename().string() + ": " + e.what());
  }
  const Where top{manifest_path.filename().string(), 0};
  ds.format_version = field<int>(manifest, "format_version", top);
  if (ds.format_version != kFormatVersion) {
    top.fail("unsupported format_version " + std::to_string(ds.format_version));
  }
  ds.num_classes = field<int>(manifest, "num_classes", top);
  ds.shots = field<int>(manifest, "shots", top);
  if (ds.num_classes < 1) top.fail("num_classes must be >= 1");
  if (ds.shots < 1) top.fail("shots must be >= 1");

  const json images = field<json>(manifest, "images", top);
  if (!images.is_array()) top.fail("images must be an array");
  std::map<std::string, std::size_t> image_index;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Where at{top.file + " images[" + std::to_string(i) + "]", 0};
    ImageInfo img;
    img.id = field<std::string>(images[i], "id", at);
    img.width = field<int>(images[i], "width", at);
    img.height = field<int>(images[i], "height", at);
    if (img.width < 1 || img.height < 1) at.fail("image dims must be >= 1");
    const std::string role = field<std::string>(images[i], "role", at);
    if (role == "support") {
      img.role = ImageRole::kSupport;
    } else if (role == "query") {
      img.role = ImageRole::kQuery;
    } else {
      at.fail("role must be 'support' or 'query'");
    }
    if (images[i].contains("feature_map")) {
      img.feature_map_path = field<std::string>(images[i], "feature_map", at);
      img.feature_map = read_feature_map(root / img.feature_map_path, img.width, img.height);
    }
    if (!image_index.emplace(img.id, ds.images.size()).second) {
      at.fail("duplicate image id '" + img.id + "'");
    }
    if (img.role == ImageRole::kQuery) ds.proposals[img.id];
    ds.images.push_back(std::move(img));
  }

  auto lookup = [&](const std::string& id, const Where& at) -> const ImageInfo& {
    auto it = image_index.find(id);
    if (it == image_index.end()) at.fail("unknown image_id '" + id + "'");
    return ds.images[it->second];
  };
  auto check_class = [&](int c, const Where& at) {
    if (c < 0 || c >= ds.num_classes) {
      at.fail("class_id " + std::to_string(c) + " outside [0, " +
              std::to_string(ds.num_classes) + ")");
    }
  };

  for_each_record(root / field<std::string>(manifest, "supports", top),
                  [&](const json& j, const Where& at) {
                    SupportAnnotation s;
                    s.image_id = field<std::string>(j, "image_id", at);
                    const ImageInfo& img = lookup(s.image_id, at);
                    if (img.role != ImageRole::kSupport) at.fail("support record on a query image");
                    s.class_id = field<int>(j, "class_id", at);
                    check_class(s.class_id, at);
                    s.box = box_from_json(field<json>(j, "box", at), at);
                    std::optional<BinaryMask> mask;
                    if (j.contains("mask")) mask = mask_from_json(j["mask"], at);
                    settle_mask(mask, s.box, img, at, "support", ds.warnings);
                    s.mask = std::move(*mask);
                    ds.supports.push_back(std::move(s));
                  });

  for_each_record(root / field<std::string>(manifest, "proposals", top),
                  [&](const json& j, const Where& at) {
                    ProposalRecord p;
                    p.image_id = field<std::string>(j, "image_id", at);
                    const ImageInfo& img = lookup(p.image_id, at);
                    if (img.role != ImageRole::kQuery) at.fail("proposal record on a support image");
                    p.upn_score = field<double>(j, "score", at);
                    if (!std::isfinite(p.upn_score) || p.upn_score < 0.0 || p.upn_score > 1.0) {
                      at.fail("score must lie in [0, 1]");
                    }
                    if (p.upn_score < kMinProposalScore) return;
                    p.box = box_from_json(field<json>(j, "box", at), at);
                    std::optional<BinaryMask> mask;
                    if (j.contains("mask")) mask = mask_from_json(j["mask"], at);
                    if (j.contains("feature")) p.feature = feature_from_json(j["feature"], at);
                    if (!p.feature && !img.feature_map) {
                      at.fail("proposal has no feature and image '" + img.id +
                               "' has no feature map");
                    }
                    if (j.contains("origin")) p.origin = field<std::string>(j, "origin", at);
                    if (j.contains("parent")) p.parent = field<int>(j, "parent", at);
                    settle_mask(mask, p.box, img, at, "proposal", ds.warnings);
                    p.mask = std::move(*mask);
                    ds.proposals[p.image_id].push_back(std::move(p));
                  });

  for (auto& [id, props] : ds.proposals) {
    if (props.size() <= kMaxProposalsPerImage) continue;
    std::vector<std::size_t> order(props.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return props[a].upn_score > props[b].upn_score;
    });
    order.resize(kMaxProposalsPerImage);
    std::sort(order.begin(), order.end());
    std::vector<ProposalRecord> kept;
    kept.reserve(order.size());
    for (std::size_t i : order) kept.push_back(std::move(props[i]));
    props = std::move(kept);
  }

  for_each_record(root / field<std::string>(manifest, "ground_truth", top),
                  [&](const json& j, const Where& at) {
                    GroundTruthBox g;
                    g.image_id = field<std::string>(j, "image_id", at);
                    if (lookup(g.image_id, at).role != ImageRole::kQuery) {
                      at.fail("ground truth on a support image");
                    }
                    g.class_id = field<int>(j, "class_id", at);
                    check_class(g.class_id, at);
                    g.box = box_from_json(field<json>(j, "box", at), at);
                    ds.ground_truth.push_back(std::move(g));
                  });

  for (const SupportAnnotation& s : ds.supports) {
    if (!ds.image(s.image_id).feature_map) {
      throw FormatError("support image '" + s.image_id + "' has no feature map");
    }
  }
  return ds;
}

fs::path write_dataset(const Dataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  json images = json::array();
  for (const ImageInfo& img : ds.images) {
    json j{{"id", img.id}, {"width", img.width}, {"height", img.height},
           {"role", role_name(img.role)}};
    if (img.feature_map) {
      const std::string rel = img.feature_map_path.empty()
                                  ? "fmaps/" + img.id + ".bin"
                                  : img.feature_map_path;
      write_feature_map(dir / rel, *img.feature_map);
      j["feature_map"] = rel;
    }
    images.push_back(std::move(j));
  }

  std::vector<json> supports;
  for (const SupportAnnotation& s : ds.supports) {
    supports.push_back({{"image_id", s.image_id}, {"class_id", s.class_id},
                        {"box", box_to_json(s.box)}, {"mask", mask_to_json(s.mask)}});
  }
  std::vector<json> proposals;
  for (const ImageInfo& img : ds.images) {
    auto it = ds.proposals.find(img.id);
    if (it == ds.proposals.end()) continue;
    for (const ProposalRecord& p : it->second) {
      json j{{"image_id", p.image_id}, {"box", box_to_json(p.box)},
             {"mask", mask_to_json(p.mask)}, {"score", p.upn_score}};
      if (p.feature) j["feature"] = p.feature->values;
      if (!p.origin.empty()) j["origin"] = p.origin;
      if (p.parent >= 0) j["parent"] = p.parent;
      proposals.push_back(std::move(j));
    }
  }
  std::vector<json> gts;
  for (const GroundTruthBox& g : ds.ground_truth) {
    gts.push_back({{"image_id", g.image_id}, {"class_id", g.class_id},
                   {"box", box_to_json(g.box)}});
  }

  write_lines(dir / "supports.jsonl", supports);
  write_lines(dir / "proposals.jsonl", proposals);
  write_lines(dir / "ground_truth.jsonl", gts);
  const json manifest{{"format_version", ds.format_version},
                      {"num_classes", ds.num_classes},
                      {"shots", ds.shots},
                      {"images", images},
                      {"supports", "supports.jsonl"},
                      {"proposals", "proposals.jsonl"},
                      {"ground_truth", "ground_truth.jsonl"}};
  const fs::path manifest_path = dir / "manifest.json";
  write_text_file(manifest_path, manifest.dump(2) + "\n");
  return manifest_path;
}

std::string format_report_text(const EvalReport& report) {
  std::string out;
  auto line = [&](const std::string& key, const std::string& value) {
    out += key;
    out += '=';
    out += value;
    out += '\n';
  };
  line("nAP", shortest(report.nAP));
  line("nAP50", shortest(report.nAP50));
  line("nAP75", shortest(report.nAP75));
  line("det_count", std::to_string(report.det_count));
  line("gt_count", std::to_string(report.gt_count));
  const auto thr = iou_thresholds();
  for (const auto& [cls, aps] : report.per_class_ap) {
    for (int k = 0; k < kNumIouThresholds; ++k) {
      line("class." + std::to_string(cls) + ".AP@" + shortest(thr[k]), shortest(aps[k]));
    }
  }
  return out;
}

std::string format_report_json(const EvalReport& report) {
  json per_class = json::object();
  for (const auto& [cls, aps] : report.per_class_ap) {
    per_class[std::to_string(cls)] = std::vector<double>(aps.begin(), aps.end());
  }
  const auto thr = iou_thresholds();
  const json j{{"nAP", report.nAP},
               {"nAP50", report.nAP50},
               {"nAP75", report.nAP75},
               {"det_count", report.det_count},
               {"gt_count", report.gt_count},
               {"iou_thresholds", std::vector<double>(thr.begin(), thr.end())},
               {"per_class_ap", per_class}};
  return j.dump(2) + "\n";
}

namespace {
constexpr const char* kDetectionHeader = "image_id\tclass_id\tscore\tx1\ty1\tx2\ty2";
}  // namespace

std::string format_detections(std::span<const Detection> dets) {
  std::string out = kDetectionHeader;
  out += '\n';
  for (const Detection& d : dets) {
    if (d.image_id.find_first_of("\t\n") != std::string::npos) {
      throw std::invalid_argument("image id contains a tab or newline: " + d.image_id);
    }
    out += d.image_id;
    for (const std::string& f :
         {std::to_string(d.class_id), shortest(d.score), shortest(d.box.x1),
          shortest(d.box.y1), shortest(d.box.x2), shortest(d.box.y2)}) {
      out += '\t';
      out += f;
    }
    out += '\n';
  }
  return out;
}

std::vector<Detection> parse_detections(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kDetectionHeader) {
    throw FormatError("detections: missing header");
  }
  std::vector<Detection> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string_view> cols;
    std::string_view rest(line);
    while (true) {
      const std::size_t tab = rest.find('\t');
      cols.push_back(rest.substr(0, tab));
      if (tab == std::string_view::npos) break;
      rest.remove_prefix(tab + 1);
    }
    if (cols.size() != 7) {
      throw FormatError("detections:" + std::to_string(lineno) + ": expected 7 columns");
    }
    try {
      Detection d;
      d.image_id = std::string(cols[0]);
      int cls = 0;
      const auto res = std::from_chars(cols[1].data(), cols[1].data() + cols[1].size(), cls);
      if (res.ec != std::errc() || res.ptr != cols[1].data() + cols[1].size()) {
        throw FormatError("class_id '" + std::string(cols[1]) + "' is not an integer");
      }
      d.class_id = cls;
      d.score = parse_double(cols[2]);
      d.box = {parse_double(cols[3]), parse_double(cols[4]), parse_double(cols[5]),
               parse_double(cols[6])};
      out.push_back(std::move(d));
    } catch (const FormatError& e) {
      throw FormatError("detections:" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Detection> read_detections(const fs::path& path) {
  return parse_detections(read_text_file(path));
}

std::vector<Detection> cap_per_image(std::span<const Detection> dets, int max_per_image) {
  if (max_per_image < 1) throw std::invalid_argument("max_per_image must be >= 1");
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dets[a].image_id != dets[b].image_id) return dets[a].image_id < dets[b].image_id;
    return dets[a].score > dets[b].score;
  });
  std::vector<Detection> out;
  const std::string* current = nullptr;
  int count = 0;
  for (std::size_t i : order) {
    if (current == nullptr || dets[i].image_id != *current) {
      current = &dets[i].image_id;
      count = 0;
    }
    if (count++ < max_per_image) out.push_back(dets[i]);
  }
  return out;
}

void export_run(std::span<const Detection> dets, const EvalReport& report,
                const fs::path& dir, int max_per_image) {
  fs::create_directories(dir);
  const std::vector<Detection> capped = cap_per_image(dets, max_per_image);
  write_text_file(dir / "detections.tsv", format_detections(capped));
  write_text_file(dir / "report.txt", format_report_text(report));
  write_text_file(dir / "report.json", format_report_json(report));
}

}  // namespace protodiff
