// Copyright 2026 The protodiff Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <array>
#include <sstream>

#include "protodiff/cli.hpp"
#include "protodiff/error.hpp"
#include "protodiff/pipeline.hpp"

namespace py = pybind11;

namespace protodiff {
namespace {

using Box = std::array<double, 4>;

BoundingBox to_box(const Box& b) { return {b[0], b[1], b[2], b[3]}; }
Box from_box(const BoundingBox& b) { return {b.x1, b.y1, b.x2, b.y2}; }

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["nAP"] = r.nAP;
  d["nAP50"] = r.nAP50;
  d["nAP75"] = r.nAP75;
  d["det_count"] = r.det_count;
  d["gt_count"] = r.gt_count;
  py::dict per_class;
  for (const auto& [cls, aps] : r.per_class_ap) {
    per_class[py::int_(cls)] = std::vector<double>(aps.begin(), aps.end());
  }
  d["per_class_ap"] = per_class;
  return d;
}

std::vector<double> diffuse_scores(const std::vector<BinaryMask>& masks,
                                   const std::vector<double>& upn_scores,
                                   const std::vector<double>& similarities,
                                   std::vector<int> classes, double alpha, double lambda,
                                   double tau, int max_steps) {
  const std::size_t n = masks.size();
  if (upn_scores.size() != n || similarities.size() != n) {
    throw std::invalid_argument("masks, upn_scores and similarities must have equal length");
  }
  if (classes.empty()) classes.assign(n, 0);
  if (classes.size() != n) throw std::invalid_argument("classes must match masks in length");
  std::vector<Proposal> props(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto bounds = mask_bounds(masks[i]);
    if (!bounds) throw std::invalid_argument("mask " + std::to_string(i) + " is empty");
    props[i].box = *bounds;
    props[i].mask = masks[i];
    props[i].upn_score = upn_scores[i];
    props[i].similarity = similarities[i];
    props[i].pred_class = classes[i];
  }
  std::vector<double> out(n);
  for (const RefinedScore& r :
       diffuse_all_classes(props, DiffusionParams{alpha, lambda, tau, max_steps})) {
    out[r.index] = r.score;
  }
  return out;
}

}  // namespace
}  // namespace protodiff

PYBIND11_MODULE(_core, m) {
  using namespace protodiff;
  m.doc() = "Native core of the protodiff package.";

  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<PipelineError>(m, "PipelineError", PyExc_RuntimeError);

  py::class_<BinaryMask>(m, "Mask")
      .def(py::init([](int w, int h, const std::vector<std::uint8_t>& pixels) {
             return BinaryMask::from_raster(w, h, pixels);
           }),
           py::arg("width"), py::arg("height"), py::arg("pixels"),
           "Build a mask from a row-major 0/1 raster.")
      .def_property_readonly("width", &BinaryMask::width)
      .def_property_readonly("height", &BinaryMask::height)
      .def_property_readonly("area", &BinaryMask::area)
      .def_property_readonly("runs", &BinaryMask::runs)
      .def("to_raster", &BinaryMask::to_raster)
      .def("bounds",
           [](const BinaryMask& mask) -> std::optional<Box> {
             const auto b = mask_bounds(mask);
             if (!b) return std::nullopt;
             return from_box(*b);
           })
      .def("__eq__", &BinaryMask::operator==);

  m.def(
      "box_iou", [](const Box& a, const Box& b) { return box_iou(to_box(a), to_box(b)); },
      py::arg("a"), py::arg("b"), "IoU of two (x1, y1, x2, y2) boxes.");
  m.def("mask_coverage", &mask_coverage, py::arg("src"), py::arg("dst"),
        "Fraction of src pixels that are also in dst.");

  m.def("diffuse_scores", &diffuse_scores, py::arg("masks"), py::arg("upn_scores"),
        py::arg("similarities"), py::arg("classes") = std::vector<int>{},
        py::arg("alpha") = 0.3, py::arg("lam") = 0.5, py::arg("tau") = 1e-6,
        py::arg("max_steps") = 30,
        "Refined scores for proposals diffused within their class.");

  m.def(
      "evaluate",
      [](const std::vector<std::tuple<std::string, int, double, Box>>& dets,
         const std::vector<std::tuple<std::string, int, Box>>& gts, int max_dets) {
        std::vector<Detection> d;
        for (const auto& [img, cls, score, box] : dets) d.push_back({img, cls, score, to_box(box)});
        std::vector<GroundTruthBox> g;
        for (const auto& [img, cls, box] : gts) g.push_back({img, to_box(box), cls});
        return report_dict(evaluate(d, g, max_dets));
      },
      py::arg("detections"), py::arg("ground_truth"), py::arg("max_dets") = 100,
      "COCO-style AP over (image_id, class_id, score, box) detections.");

  m.def(
      "generate",
      [](const std::string& out_dir, std::uint64_t seed, int images, int shots, double noise,
         bool query_maps) {
        GeneratorConfig cfg;
        cfg.seed = seed;
        cfg.images = images;
        cfg.shots = shots;
        cfg.feature_noise = noise;
        cfg.query_feature_maps = query_maps;
        return generate_dataset(cfg, out_dir).string();
      },
      py::arg("out_dir"), py::arg("seed") = 17, py::arg("images") = 50, py::arg("shots") = 1,
      py::arg("noise") = 0.15, py::arg("query_maps") = false,
      "Write a synthetic corpus and return the manifest path.");

  m.def(
      "run",
      [](const std::string& manifest, const std::string& method, double alpha, double lam,
         double tau, int max_steps, int jobs) {
        const auto parsed = parse_method(method);
        if (!parsed) throw std::invalid_argument("unknown method '" + method + "'");
        PipelineConfig cfg;
        cfg.method = *parsed;
        cfg.diffusion = DiffusionParams{alpha, lam, tau, max_steps};
        cfg.jobs = jobs;
        RunResult r;
        {
          py::gil_scoped_release release;
          r = run_end_to_end(std::filesystem::path(manifest), cfg);
        }
        py::dict d = report_dict(r.report);
        py::list dets;
        for (const Detection& x : r.detections) {
          dets.append(py::make_tuple(x.image_id, x.class_id, x.score, from_box(x.box)));
        }
        d["detections"] = dets;
        return d;
      },
      py::arg("manifest"), py::arg("method") = "diffusion", py::arg("alpha") = 0.3,
      py::arg("lam") = 0.5, py::arg("tau") = 1e-6, py::arg("max_steps") = 30,
      py::arg("jobs") = 1, "Run the full pipeline and return the evaluation report.");

  m.def(
      "cli",
      [](const std::vector<std::string>& args) {
        std::vector<std::string> all{"protodiff"};
        all.insert(all.end(), args.begin(), args.end());
        std::vector<const char*> argv;
        for (const std::string& a : all) argv.push_back(a.c_str());
        std::ostringstream out;
        std::ostringstream err;
        const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run the command-line interface in-process; returns (code, out, err).");
}
