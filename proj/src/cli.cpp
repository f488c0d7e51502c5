// Copyright 2026 The protodiff Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "protodiff/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "protodiff/error.hpp"
#include "protodiff/pipeline.hpp"
#include "protodiff/synthio.hpp"
#include "rng.hpp"

namespace protodiff {

namespace fs = std::filesystem;

namespace {

// Usage problems detected after CLI11 parsing.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string fmt_num(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

template <typename T>
T parse_number(const std::string& s, const std::string& flag) {
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw UsageError(flag + ": '" + s + "' is not a number");
  }
  return v;
}

// "lo:hi" or a single value.
template <typename Range, typename T>
Range parse_range(const std::string& text, const std::string& flag) {
  const std::size_t colon = text.find(':');
  if (colon == std::string::npos) {
    const T v = parse_number<T>(text, flag);
    return {v, v};
  }
  const T lo = parse_number<T>(text.substr(0, colon), flag);
  const T hi = parse_number<T>(text.substr(colon + 1), flag);
  if (lo > hi) throw UsageError(flag + ": range '" + text + "' has lo > hi");
  return {lo, hi};
}

template <typename T>
std::vector<T> dedup(const std::vector<T>& v) {
  std::vector<T> out;
  for (const T& x : v) {
    if (std::find(out.begin(), out.end(), x) == out.end()) out.push_back(x);
  }
  return out;
}

struct RunFlags {
  std::string manifest;
  std::string out_dir = "protodiff_out";
  double alpha = 0.3;
  double lambda = 0.5;
  double tau = 1e-6;
  int max_steps = 30;
  std::string method = "diffusion";
  int max_output = kMaxDetectionsPerImage;
  double nms_iou = 0.5;
  double softnms_sigma = 0.5;
  double wbf_iou = 0.55;
  int jobs = 1;
  int shots = 0;
  std::uint64_t support_seed = 33;
};

void add_pipeline_flags(CLI::App* cmd, RunFlags& f, bool with_method) {
  cmd->add_option("manifest", f.manifest, "Dataset manifest (manifest.json)")->required();
  cmd->add_option("-o,--out", f.out_dir, "Output directory")
      ->envname("PROTODIFF_OUT")
      ->capture_default_str();
  cmd->add_option("--alpha", f.alpha, "Propagation weight alpha in [0, 1) (default 0.3)")
      ->capture_default_str();
  cmd->add_option("--lambda", f.lambda, "Decay exponent lambda >= 0 (default 0.5)")
      ->capture_default_str();
  cmd->add_option("--tau", f.tau, "Early-stop threshold on the iterate change (default 1e-6)")
      ->capture_default_str();
  cmd->add_option("--max-steps", f.max_steps, "Maximum diffusion steps (default 30)")
      ->capture_default_str();
  if (with_method) {
    cmd->add_option("--method", f.method,
                    "Post-processing: none|nms|softnms|wbf|softmerge|diffusion|diffusion+nms")
        ->capture_default_str();
  }
  cmd->add_option("--max-output", f.max_output, "Detections kept per image (default 100)")
      ->capture_default_str();
  cmd->add_option("--nms-iou", f.nms_iou, "IoU threshold for nms")->capture_default_str();
  cmd->add_option("--softnms-sigma", f.softnms_sigma, "Gaussian sigma for softnms")
      ->capture_default_str();
  cmd->add_option("--wbf-iou", f.wbf_iou, "Cluster IoU threshold for wbf")
      ->capture_default_str();
  cmd->add_option("-j,--jobs", f.jobs, "Worker threads over images")->capture_default_str();
  cmd->add_option("--shots", f.shots,
                  "Subsample this many supports per class (0 keeps all)")
      ->capture_default_str();
  cmd->add_option("--support-seed", f.support_seed, "Seed for support subsampling")
      ->capture_default_str();
}

PipelineConfig to_config(const RunFlags& f) {
  PipelineConfig cfg;
  cfg.diffusion = {f.alpha, f.lambda, f.tau, f.max_steps};
  const std::optional<Method> m = parse_method(f.method);
  if (!m) throw UsageError("--method: unknown method '" + f.method + "'");
  cfg.method = *m;
  cfg.max_output = f.max_output;
  cfg.nms_iou = f.nms_iou;
  cfg.softnms_sigma = f.softnms_sigma;
  cfg.wbf_iou = f.wbf_iou;
  cfg.jobs = f.jobs;
  try {
    validate(cfg);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (f.shots < 0) throw UsageError("--shots must be >= 0");
  return cfg;
}

// Keeps `shots` supports per class, drawn without replacement; every class
// must have at least that many.
void subsample_supports(Dataset& ds, int shots, std::uint64_t seed) {
  if (shots <= 0) return;
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < ds.supports.size(); ++i) {
    by_class[ds.supports[i].class_id].push_back(i);
  }
  std::vector<SupportAnnotation> kept;
  for (auto& [cls, idx] : by_class) {
    if (static_cast<int>(idx.size()) < shots) {
      throw UsageError("--shots " + std::to_string(shots) + " exceeds the " +
                       std::to_string(idx.size()) + " support(s) of class " + std::to_string(cls));
    }
    detail::Rng rng = detail::Rng::stream(seed, 3, static_cast<std::uint32_t>(cls));
    for (std::size_t i = idx.size(); i > 1; --i) {
      std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
    }
    idx.resize(static_cast<std::size_t>(shots));
    std::sort(idx.begin(), idx.end());
    for (std::size_t i : idx) kept.push_back(ds.supports[i]);
  }
  ds.supports = std::move(kept);
  ds.shots = shots;
}

Dataset load_for(const RunFlags& f) {
  Dataset ds = load_dataset(f.manifest);
  subsample_supports(ds, f.shots, f.support_seed);
  return ds;
}

struct GenFlags {
  std::string out_dir = "protodiff_out";
  std::uint64_t seed = 17;
  int images = 50;
  int classes = 3;
  int shots = 1;
  std::string objects = "2:4";
  std::string fragments = "3:6";
  std::string distractors = "0:2";
  int feature_dim = 64;
  double noise = 0.15;
  std::string fragment_scores = "0.05:0.5";
  std::string whole_scores = "0.6:0.95";
  bool allow_overlap = false;
  int image_size = 128;
  int grid_size = 16;
  bool query_maps = false;
  int jobs = 1;
};

int cmd_gen(const GenFlags& f, std::ostream& out) {
  GeneratorConfig cfg;
  cfg.seed = f.seed;
  cfg.images = f.images;
  cfg.num_classes = f.classes;
  cfg.shots = f.shots;
  cfg.objects_per_image = parse_range<IntRange, int>(f.objects, "--objects");
  cfg.fragments_per_object = parse_range<IntRange, int>(f.fragments, "--fragments");
  cfg.distractors_per_image = parse_range<IntRange, int>(f.distractors, "--distractors");
  cfg.feature_dim = f.feature_dim;
  cfg.feature_noise = f.noise;
  cfg.fragment_score_range = parse_range<RealRange, double>(f.fragment_scores, "--fragment-scores");
  cfg.whole_score_range = parse_range<RealRange, double>(f.whole_scores, "--whole-scores");
  cfg.allow_score_overlap = f.allow_overlap;
  cfg.image_size = f.image_size;
  cfg.grid_size = f.grid_size;
  cfg.query_feature_maps = f.query_maps;
  cfg.jobs = f.jobs;
  try {
    validate(cfg);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const fs::path manifest = generate_dataset(cfg, f.out_dir);
  out << manifest.string() << '\n';
  return kExitOk;
}

int cmd_run(const RunFlags& f, std::ostream& out) {
  const PipelineConfig cfg = to_config(f);
  const Dataset ds = load_for(f);
  const RunResult r = run_end_to_end(ds, cfg);
  export_run(r.detections, r.report, f.out_dir, cfg.max_output);
  out << "method=" << method_name(cfg.method) << '\n'
      << "nAP=" << fmt_num(r.report.nAP) << '\n'
      << "nAP50=" << fmt_num(r.report.nAP50) << '\n'
      << "nAP75=" << fmt_num(r.report.nAP75) << '\n'
      << "output=" << f.out_dir << '\n';
  return kExitOk;
}

std::string one_line(std::string s) {
  std::replace_if(s.begin(), s.end(), [](char c) { return c == '\t' || c == '\n'; }, ' ');
  return s;
}

struct SweepFlags {
  std::vector<double> lambdas{0.3, 0.5, 1.0};
  std::vector<double> alphas{0.0, 0.3, 0.5};
  std::vector<int> steps{30};
  bool no_timing = false;
};

int cmd_sweep(const RunFlags& f, const SweepFlags& s, std::ostream& out) {
  const std::vector<double> lambdas = dedup(s.lambdas);
  const std::vector<double> alphas = dedup(s.alphas);
  const std::vector<int> steps = dedup(s.steps);
  if (lambdas.empty() || alphas.empty() || steps.empty()) {
    throw UsageError("sweep grids must be non-empty");
  }
  const PipelineConfig base = to_config(f);
  const Dataset ds = load_for(f);
  const std::vector<ClassPrototype> protos = run_support_stage(ds);
  const double images = std::max<std::size_t>(1, ds.query_image_ids().size());

  std::string table = "lambda\talpha\tsteps\tnAP\tnAP50\tnAP75\tsec_per_image\tstatus\n";
  for (double lambda : lambdas) {
    for (double alpha : alphas) {
      for (int step : steps) {
        PipelineConfig cfg = base;
        cfg.diffusion.lambda = lambda;
        cfg.diffusion.alpha = alpha;
        cfg.diffusion.max_steps = step;
        cfg.prototypes = protos;
        std::string row = fmt_num(lambda) + '\t' + fmt_num(alpha) + '\t' + std::to_string(step);
        try {
          const auto t0 = std::chrono::steady_clock::now();
          const RunResult r = run_end_to_end(ds, cfg);
          const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
          row += '\t' + fmt_num(r.report.nAP) + '\t' + fmt_num(r.report.nAP50) + '\t' +
                 fmt_num(r.report.nAP75) + '\t' +
                 (s.no_timing ? std::string("-") : fmt_num(dt.count() / images)) + "\tok";
        } catch (const std::exception& e) {
          row += "\t-\t-\t-\t-\tfailed: " + one_line(e.what());
        }
        table += row + '\n';
      }
    }
  }
  write_text_file(fs::path(f.out_dir) / "sweep.tsv", table);
  out << table;
  return kExitOk;
}

int cmd_compare(const RunFlags& f, std::ostream& out, std::ostream& err) {
  const PipelineConfig base = to_config(f);
  const Dataset ds = load_for(f);
  const std::vector<ClassPrototype> protos = run_support_stage(ds);
  std::string table = "method\tnAP\tnAP50\tnAP75\tstatus\n";
  for (Method m : all_methods()) {
    PipelineConfig cfg = base;
    cfg.method = m;
    cfg.prototypes = protos;
    std::string row(method_name(m));
    try {
      const RunResult r = run_end_to_end(ds, cfg);
      row += '\t' + fmt_num(r.report.nAP) + '\t' + fmt_num(r.report.nAP50) + '\t' +
             fmt_num(r.report.nAP75) + "\tok";
    } catch (const std::exception& e) {
      err << "notice: skipping " << method_name(m) << ": " << e.what() << '\n';
      row += "\t-\t-\t-\tskipped: " + one_line(e.what());
    }
    table += row + '\n';
  }
  write_text_file(fs::path(f.out_dir) / "compare.tsv", table);
  out << table;
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"protodiff: prototype matching and graph-diffusion rescoring for "
               "few-shot detection proposals"};
  app.set_config("--config", "",
                 "Read options from a TOML/INI file; command-line flags take precedence");
  app.require_subcommand(1);

  GenFlags gen;
  CLI::App* gen_cmd = app.add_subcommand("gen", "Generate a synthetic corpus");
  gen_cmd->add_option("-o,--out", gen.out_dir, "Output directory (created if missing)")
      ->envname("PROTODIFF_OUT")
      ->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "RNG seed")->capture_default_str();
  gen_cmd->add_option("--images", gen.images, "Number of query images")->capture_default_str();
  gen_cmd->add_option("--classes", gen.classes, "Number of classes")->capture_default_str();
  gen_cmd->add_option("--shots", gen.shots, "Supports per class (K)")->capture_default_str();
  gen_cmd->add_option("--objects", gen.objects, "Objects per image, lo:hi")->capture_default_str();
  gen_cmd->add_option("--fragments", gen.fragments, "Fragments per object, lo:hi")
      ->capture_default_str();
  gen_cmd->add_option("--distractors", gen.distractors, "Background distractors per image, lo:hi")
      ->capture_default_str();
  gen_cmd->add_option("--feature-dim", gen.feature_dim, "Feature channels")->capture_default_str();
  gen_cmd->add_option("--noise", gen.noise, "Feature noise in [0, 1)")->capture_default_str();
  gen_cmd->add_option("--fragment-scores", gen.fragment_scores, "Fragment score range lo:hi")
      ->capture_default_str();
  gen_cmd->add_option("--whole-scores", gen.whole_scores, "Whole-object score range lo:hi")
      ->capture_default_str();
  gen_cmd->add_flag("--allow-score-overlap", gen.allow_overlap,
                    "Draw fragment and whole scores from one shared range");
  gen_cmd->add_option("--image-size", gen.image_size, "Image side in pixels")
      ->capture_default_str();
  gen_cmd->add_option("--grid-size", gen.grid_size, "Feature grid side in cells")
      ->capture_default_str();
  gen_cmd->add_flag("--query-maps", gen.query_maps,
                    "Write dense query feature maps instead of per-proposal features");
  gen_cmd->add_option("-j,--jobs", gen.jobs, "Worker threads")->capture_default_str();

  RunFlags run;
  CLI::App* run_cmd = app.add_subcommand("run", "Run the pipeline and evaluate");
  add_pipeline_flags(run_cmd, run, true);

  RunFlags sweep;
  SweepFlags grids;
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "Grid over lambda, alpha and steps");
  add_pipeline_flags(sweep_cmd, sweep, false);
  sweep_cmd->add_option("--lambdas", grids.lambdas, "Lambda grid")
      ->delimiter(',')
      ->capture_default_str();
  sweep_cmd->add_option("--alphas", grids.alphas, "Alpha grid")
      ->delimiter(',')
      ->capture_default_str();
  sweep_cmd->add_option("--steps", grids.steps, "Max-steps grid")
      ->delimiter(',')
      ->capture_default_str();
  sweep_cmd->add_flag("--no-timing", grids.no_timing,
                      "Write '-' instead of wall time so output is byte-stable");

  RunFlags compare;
  CLI::App* compare_cmd =
      app.add_subcommand("compare", "Evaluate every post-processing method on the same inputs");
  add_pipeline_flags(compare_cmd, compare, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen(gen, out);
    if (run_cmd->parsed()) return cmd_run(run, out);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep, grids, out);
    if (compare_cmd->parsed()) return cmd_compare(compare, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "error [load]: " << e.what() << '\n';
    return kExitData;
  } catch (const PipelineError& e) {
    err << "error [pipeline]: " << e.what() << '\n';
    return kExitPipeline;
  } catch (const std::exception& e) {
    err << "error [pipeline]: " << e.what() << '\n';
    return kExitPipeline;
  }
  return kExitUsage;
}

}  // namespace protodiff
