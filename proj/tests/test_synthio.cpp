// Copyright 2026 The protodiff Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "json.hpp"
#include "protodiff/error.hpp"
#include "protodiff/synthio.hpp"

namespace protodiff {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("protodiff_synthio_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    previous_ = set_warning_handler([this](std::string_view m) { warnings_.emplace_back(m); });
  }
  void TearDown() override {
    set_warning_handler(previous_);
    fs::remove_all(dir_);
  }

  // A one-support, one-query dataset written by hand. Each proposal is a
  // JSON object merged over a default record.
  fs::path write_manual(const std::vector<json>& proposals, int version = 1) {
    const FeatureMap fm(2, 2, 2, 8, 8, {1, 1, 1, 1, 0, 0, 0, 0});
    write_feature_map(dir_ / "s.bin", fm);
    json manifest{{"format_version", version},
                  {"num_classes", 1},
                  {"shots", 1},
                  {"images",
                   {{{"id", "s"}, {"width", 8}, {"height", 8}, {"role", "support"},
                     {"feature_map", "s.bin"}},
                    {{"id", "q"}, {"width", 8}, {"height", 8}, {"role", "query"}}}},
                  {"supports", "supports.jsonl"},
                  {"proposals", "proposals.jsonl"},
                  {"ground_truth", "ground_truth.jsonl"}};
    write_text_file(dir_ / "manifest.json", manifest.dump());
    write_text_file(dir_ / "supports.jsonl",
                    json{{"image_id", "s"}, {"class_id", 0}, {"box", {0, 0, 8, 8}}}.dump() +
                        "\n");
    std::string lines;
    for (const json& p : proposals) {
      json rec{{"image_id", "q"}, {"box", {0, 0, 4, 4}}, {"score", 0.5}, {"feature", {1, 0}}};
      if (p.is_object()) rec.update(p);
      lines += rec.dump() + "\n";
    }
    write_text_file(dir_ / "proposals.jsonl", lines);
    write_text_file(dir_ / "ground_truth.jsonl",
                    json{{"image_id", "q"}, {"class_id", 0}, {"box", {0, 0, 4, 4}}}.dump() +
                        "\n");
    return dir_ / "manifest.json";
  }

  fs::path dir_;
  std::vector<std::string> warnings_;

 private:
  WarningHandler previous_;
};

using FeatureMapBlob = TempDir;
using LoadDataset = TempDir;
using Generator = TempDir;
using Export = TempDir;

TEST_F(FeatureMapBlob, HeaderBytesAndRoundTrip) {
  const FeatureMap fm(3, 2, 1, 10, 20, {1.0f, -2.5f, 0.0f, 3.25f, 1e-7f, -0.0f});
  write_feature_map(dir_ / "f.bin", fm);
  const std::string bytes = read_text_file(dir_ / "f.bin");
  ASSERT_EQ(bytes.size(), 16u + 6 * 4);
  EXPECT_EQ(bytes.substr(0, 4), "PDFM");
  const std::string header = bytes.substr(4, 12);
  EXPECT_EQ(header, std::string("\x01\x00\x03\x00\x02\x00\x00\x00\x01\x00\x00\x00", 12));
  // 1.0f little-endian.
  EXPECT_EQ(bytes.substr(16, 4), std::string("\x00\x00\x80\x3f", 4));
  const FeatureMap back = read_feature_map(dir_ / "f.bin", 10, 20);
  EXPECT_EQ(back.channels(), 3);
  EXPECT_EQ(back.grid_height(), 2);
  EXPECT_EQ(back.grid_width(), 1);
  EXPECT_EQ(back.image_width(), 10);
  EXPECT_EQ(back.image_height(), 20);
  ASSERT_EQ(back.data().size(), fm.data().size());
  for (std::size_t i = 0; i < fm.data().size(); ++i) {
    EXPECT_EQ(std::bit_cast<std::uint32_t>(back.data()[i]),
              std::bit_cast<std::uint32_t>(fm.data()[i]));
  }
}

TEST_F(FeatureMapBlob, CorruptBlobsAreFormatErrors) {
  const FeatureMap fm(1, 1, 2, 4, 4, {1.0f, 2.0f});
  write_feature_map(dir_ / "f.bin", fm);
  const std::string good = read_text_file(dir_ / "f.bin");

  write_text_file(dir_ / "short.bin", good.substr(0, 10));
  EXPECT_THROW(read_feature_map(dir_ / "short.bin", 4, 4), FormatError);
  std::string magic = good;
  magic[0] = 'X';
  write_text_file(dir_ / "magic.bin", magic);
  EXPECT_THROW(read_feature_map(dir_ / "magic.bin", 4, 4), FormatError);
  std::string version = good;
  version[4] = 2;
  write_text_file(dir_ / "version.bin", version);
  EXPECT_THROW(read_feature_map(dir_ / "version.bin", 4, 4), FormatError);
  write_text_file(dir_ / "trunc.bin", good.substr(0, good.size() - 1));
  EXPECT_THROW(read_feature_map(dir_ / "trunc.bin", 4, 4), FormatError);
  std::string nan = good;
  nan.replace(16, 4, std::string("\x00\x00\xc0\x7f", 4));
  write_text_file(dir_ / "nan.bin", nan);
  EXPECT_THROW(read_feature_map(dir_ / "nan.bin", 4, 4), FormatError);
  EXPECT_THROW(read_feature_map(dir_ / "missing.bin", 4, 4), FormatError);
}

TEST_F(LoadDataset, ScoreFloorFiltersProposals) {
  const Dataset ds = load_dataset(write_manual({{{"score", 0.005}}, {{"score", 0.01}},
                                                {{"score", 0.3}}}));
  const auto& props = ds.proposals.at("q");
  ASSERT_EQ(props.size(), 2u);
  EXPECT_EQ(props[0].upn_score, 0.01);
  EXPECT_EQ(props[1].upn_score, 0.3);
}

TEST_F(LoadDataset, KeepsTheFiveHundredBestInFileOrder) {
  std::vector<json> recs;
  for (int i = 0; i < 600; ++i) recs.push_back({{"score", 0.01 + ((i * 37) % 600) / 1000.0}});
  const Dataset ds = load_dataset(write_manual(recs));
  const auto& props = ds.proposals.at("q");
  ASSERT_EQ(props.size(), 500u);
  // Scores are a permutation of 0.01 + k/1000; the 100 lowest are dropped.
  std::multiset<double> kept;
  for (const auto& p : props) kept.insert(p.upn_score);
  EXPECT_GE(*kept.begin(), 0.01 + 100 / 1000.0 - 1e-12);
  std::vector<double> expected;
  for (int i = 0; i < 600; ++i) {
    const double s = 0.01 + ((i * 37) % 600) / 1000.0;
    if ((i * 37) % 600 >= 100) expected.push_back(s);
  }
  ASSERT_EQ(expected.size(), 500u);
  for (std::size_t i = 0; i < 500; ++i) EXPECT_EQ(props[i].upn_score, expected[i]);
}

TEST_F(LoadDataset, EmptyQuerySetIsFine) {
  const fs::path m = write_manual({});
  write_text_file(dir_ / "ground_truth.jsonl", "");
  const Dataset ds = load_dataset(m);
  EXPECT_TRUE(ds.proposals.at("q").empty());
  EXPECT_TRUE(ds.ground_truth.empty());
}

TEST_F(LoadDataset, MissingOrEmptyMasksBecomeBoxMasksWithAWarning) {
  const json empty_mask{{"w", 8}, {"h", 8}, {"counts", {64}}};
  const Dataset ds = load_dataset(write_manual({{}, {{"mask", empty_mask}}}));
  const auto& props = ds.proposals.at("q");
  ASSERT_EQ(props.size(), 2u);
  for (const auto& p : props) EXPECT_EQ(p.mask.area(), 16);
  // The support record has no mask either.
  EXPECT_EQ(ds.supports[0].mask.area(), 64);
  EXPECT_EQ(ds.warnings.size(), 3u);
  EXPECT_EQ(warnings_.size(), 3u);
}

TEST_F(LoadDataset, ErrorsNameFileAndRecord) {
  const json bad_mask{{"w", 8}, {"h", 8}, {"counts", {10, 10}}};
  try {
    load_dataset(write_manual({{}, {{"mask", bad_mask}}}));
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("proposals.jsonl:2"), std::string::npos) << e.what();
  }
  const json wrong_dims{{"w", 4}, {"h", 4}, {"counts", {16}}};
  EXPECT_THROW(load_dataset(write_manual({{{"mask", wrong_dims}}})), FormatError);
  EXPECT_THROW(load_dataset(write_manual({{{"image_id", "nope"}}})), FormatError);
  EXPECT_THROW(load_dataset(write_manual({{{"box", {3, 3, 1, 1}}}})), FormatError);
  EXPECT_THROW(load_dataset(write_manual({{{"score", 1.5}}})), FormatError);
  EXPECT_THROW(load_dataset(write_manual({{{"feature", json::array()}}})), FormatError);
  EXPECT_THROW(load_dataset(write_manual({}, 2)), FormatError);
  EXPECT_THROW(load_dataset(dir_ / "absent.json"), FormatError);
  write_manual({});
  write_text_file(dir_ / "proposals.jsonl", "{not json\n");
  EXPECT_THROW(load_dataset(dir_ / "manifest.json"), FormatError);
  fs::remove(dir_ / "ground_truth.jsonl");
  EXPECT_THROW(load_dataset(dir_ / "manifest.json"), FormatError);
}

TEST_F(LoadDataset, ProposalWithoutAnyFeatureSourceIsRejected) {
  const fs::path m = write_manual({});
  write_text_file(dir_ / "proposals.jsonl",
                  json{{"image_id", "q"}, {"box", {0, 0, 4, 4}}, {"score", 0.5}}.dump() + "\n");
  EXPECT_THROW(load_dataset(m), FormatError);
}

TEST_F(Generator, DeterministicBytesForAFixedSeedAndAnyJobCount) {
  GeneratorConfig cfg;
  cfg.images = 12;
  cfg.query_feature_maps = true;
  generate_dataset(cfg, dir_ / "a");
  generate_dataset(cfg, dir_ / "b");
  cfg.jobs = 4;
  generate_dataset(cfg, dir_ / "c");
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(dir_ / "a")) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), dir_ / "a");
    const std::string ref = read_text_file(entry.path());
    EXPECT_EQ(ref, read_text_file(dir_ / "b" / rel)) << rel;
    EXPECT_EQ(ref, read_text_file(dir_ / "c" / rel)) << rel;
    ++files;
  }
  // manifest, three record files, three support maps and twelve query maps.
  EXPECT_EQ(files, 4u + 3u + 12u);
}

TEST_F(Generator, DifferentSeedsDiffer) {
  GeneratorConfig a;
  a.images = 3;
  GeneratorConfig b = a;
  b.seed = 18;
  generate_dataset(a, dir_ / "a");
  generate_dataset(b, dir_ / "b");
  EXPECT_NE(read_text_file(dir_ / "a" / "proposals.jsonl"),
            read_text_file(dir_ / "b" / "proposals.jsonl"));
}

TEST_F(Generator, DefaultCorpusAuditAfterReload) {
  const GeneratorConfig cfg;  // seed 17 defaults
  const Dataset ds = load_dataset(generate_dataset(cfg, dir_));
  EXPECT_TRUE(ds.warnings.empty());
  EXPECT_TRUE(warnings_.empty());
  EXPECT_EQ(ds.num_classes, 3);
  EXPECT_EQ(ds.shots, 1);
  EXPECT_EQ(ds.query_image_ids().size(), 50u);
  EXPECT_EQ(ds.supports.size(), 3u);

  std::map<std::string, std::vector<const GroundTruthBox*>> gts;
  for (const GroundTruthBox& g : ds.ground_truth) gts[g.image_id].push_back(&g);
  for (const std::string& id : ds.query_image_ids()) {
    const auto& objects = gts[id];
    ASSERT_GE(objects.size(), 2u);
    ASSERT_LE(objects.size(), 4u);
    std::map<int, int> fragments;
    std::map<int, const ProposalRecord*> wholes;
    int distractors = 0;
    for (const ProposalRecord& p : ds.proposals.at(id)) {
      ASSERT_TRUE(p.feature.has_value());
      double norm = 0.0;
      for (double v : p.feature->values) norm += v * v;
      ASSERT_NEAR(std::sqrt(norm), 1.0, 1e-6);
      ASSERT_EQ(p.feature->values.size(), 64u);
      if (p.origin == "whole") {
        ASSERT_GE(p.upn_score, 0.6);
        ASSERT_LE(p.upn_score, 0.95);
        ASSERT_EQ(p.box, objects[static_cast<std::size_t>(p.parent)]->box);
        wholes[p.parent] = &p;
      } else if (p.origin == "fragment") {
        ASSERT_GE(p.upn_score, 0.05);
        ASSERT_LE(p.upn_score, 0.5);
        ++fragments[p.parent];
      } else {
        ASSERT_EQ(p.origin, "distractor");
        ++distractors;
      }
    }
    ASSERT_EQ(wholes.size(), objects.size());
    for (std::size_t k = 0; k < objects.size(); ++k) {
      ASSERT_GE(fragments[static_cast<int>(k)], 3);
      ASSERT_LE(fragments[static_cast<int>(k)], 6);
    }
    ASSERT_LE(distractors, 2);
    // Every fragment lies inside its parent object.
    for (const ProposalRecord& p : ds.proposals.at(id)) {
      if (p.origin == "fragment") ASSERT_EQ(mask_coverage(p.mask, wholes.at(p.parent)->mask), 1.0);
    }
  }
}

TEST_F(Generator, ScoreOverlapFlagWidensRanges) {
  GeneratorConfig cfg;
  cfg.images = 20;
  cfg.fragment_score_range = {0.3, 0.7};
  cfg.whole_score_range = {0.5, 0.9};
  EXPECT_THROW(validate(cfg), std::invalid_argument);
  cfg.allow_score_overlap = true;
  const Dataset ds = generate_corpus(cfg);
  bool fragment_above_a_whole = false;
  for (const auto& [id, props] : ds.proposals) {
    double min_whole = 1.0;
    double max_frag = 0.0;
    for (const auto& p : props) {
      if (p.origin == "whole") min_whole = std::min(min_whole, p.upn_score);
      if (p.origin == "fragment") max_frag = std::max(max_frag, p.upn_score);
    }
    fragment_above_a_whole = fragment_above_a_whole || max_frag > min_whole;
  }
  EXPECT_TRUE(fragment_above_a_whole);
}

TEST(GeneratorConfigValidation, RejectsBadFields) {
  auto bad = [](auto mutate) {
    GeneratorConfig cfg;
    mutate(cfg);
    EXPECT_THROW(validate(cfg), std::invalid_argument);
  };
  bad([](GeneratorConfig& c) { c.images = 0; });
  bad([](GeneratorConfig& c) { c.objects_per_image = {3, 2}; });
  bad([](GeneratorConfig& c) { c.feature_noise = 1.0; });
  bad([](GeneratorConfig& c) { c.feature_dim = 3; });
  bad([](GeneratorConfig& c) { c.fragment_score_range = {0.001, 0.2}; });
  bad([](GeneratorConfig& c) { c.grid_size = 0; });
  EXPECT_NO_THROW(validate(GeneratorConfig{}));
}

TEST(GeneratorPlacement, ImpossibleLayoutsFail) {
  GeneratorConfig cfg;
  cfg.images = 1;
  cfg.image_size = 16;
  cfg.grid_size = 4;
  cfg.objects_per_image = {60, 60};
  EXPECT_THROW(generate_corpus(cfg), PipelineError);
}

std::vector<Detection> sample_detections() {
  return {{"q1", 2, 0.1 + 0.2, {0.5, 1.0 / 3.0, 10, 12.25}},
          {"q0", 0, 0.75, {1, 2, 3, 4}},
          {"q1", 1, 0.9, {0, 0, 1e-3, 5e10}}};
}

TEST_F(Export, EmptyDetectionsGiveHeaderOnly) {
  export_run({}, EvalReport{}, dir_ / "out");
  EXPECT_EQ(read_text_file(dir_ / "out" / "detections.tsv"),
            "image_id\tclass_id\tscore\tx1\ty1\tx2\ty2\n");
}

TEST_F(Export, RoundTripIsBitExact) {
  const std::vector<Detection> dets = sample_detections();
  export_run(dets, EvalReport{}, dir_ / "out");
  const std::vector<Detection> back = read_detections(dir_ / "out" / "detections.tsv");
  const std::vector<Detection> canonical = cap_per_image(dets, 100);
  ASSERT_EQ(back.size(), canonical.size());
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_EQ(back[i], canonical[i]);
  EXPECT_EQ(back[0].image_id, "q0");
  EXPECT_EQ(back[1].score, 0.9);
}

TEST_F(Export, CapsEachImageAtOneHundred) {
  std::vector<Detection> dets;
  for (int i = 0; i < 130; ++i) dets.push_back({"a", 0, i / 200.0, {0, 0, 1, 1}});
  for (int i = 0; i < 20; ++i) dets.push_back({"b", 0, i / 200.0, {0, 0, 1, 1}});
  export_run(dets, EvalReport{}, dir_ / "out");
  const auto back = read_detections(dir_ / "out" / "detections.tsv");
  ASSERT_EQ(back.size(), 120u);
  EXPECT_EQ(back[0].score, 129 / 200.0);
  EXPECT_EQ(back[99].score, 30 / 200.0);
  EXPECT_EQ(back[100].image_id, "b");
}

TEST(DetectionsText, MalformedLinesAreFormatErrors) {
  EXPECT_THROW(parse_detections(""), FormatError);
  EXPECT_THROW(parse_detections("image_id\tclass_id\tscore\tx1\ty1\tx2\ty2\na\t0\t1\n"),
               FormatError);
  EXPECT_THROW(parse_detections("image_id\tclass_id\tscore\tx1\ty1\tx2\ty2\na\t0.5\t1\t0\t0\t1\t1\n"),
               FormatError);
  EXPECT_THROW(parse_detections("image_id\tclass_id\tscore\tx1\ty1\tx2\ty2\na\t0\tx\t0\t0\t1\t1\n"),
               FormatError);
}

TEST(ReportText, KeyValueLayout) {
  EvalReport r;
  r.nAP = 0.5;
  r.nAP50 = 0.75;
  r.nAP75 = 0.25;
  r.det_count = 3;
  r.gt_count = 2;
  r.per_class_ap[4].fill(0.125);
  const std::string text = format_report_text(r);
  EXPECT_EQ(text.substr(0, text.find("class.")),
            "nAP=0.5\nnAP50=0.75\nnAP75=0.25\ndet_count=3\ngt_count=2\n");
  EXPECT_NE(text.find("class.4.AP@0.5=0.125\n"), std::string::npos);
  EXPECT_NE(text.find("class.4.AP@0.95=0.125\n"), std::string::npos);
  const json j = json::parse(format_report_json(r));
  EXPECT_EQ(j["nAP50"], 0.75);
  EXPECT_EQ(j["per_class_ap"]["4"].size(), 10u);
}

}  // namespace
}  // namespace protodiff
