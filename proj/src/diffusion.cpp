// Copyright 2026 The protodiff Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "protodiff/diffusion.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>

#include "protodiff/error.hpp"

namespace protodiff {

namespace {

// Rounding slack on the [0, 1] bound of the iterates.
constexpr double kBoundSlack = 1e-12;

double refined(double pi, double lambda, double similarity) {
  if (pi > 1.0 + kBoundSlack || pi < -kBoundSlack) {
    throw std::logic_error("refine_scores: diffusion value " +
                           std::to_string(pi) + " outside [0, 1]");
  }
  const double keep = std::clamp(1.0 - pi, 0.0, 1.0);
  return std::pow(keep, lambda) * similarity;
}

}  // namespace

void validate(const DiffusionParams& p) {
  if (!(p.alpha >= 0.0 && p.alpha < 1.0)) {
    throw std::invalid_argument("alpha must lie in [0, 1)");
  }
  if (!(p.lambda >= 0.0) || !std::isfinite(p.lambda)) {
    throw std::invalid_argument("lambda must be a finite value >= 0");
  }
  if (!(p.tau > 0.0)) {
    throw std::invalid_argument("tau must be > 0");
  }
  if (p.max_steps < 1) {
    throw std::invalid_argument("max_steps must be >= 1");
  }
}

ClassGraph build_class_graph(std::span<const Proposal> props,
                             std::span<const std::size_t> ids) {
  ClassGraph g;
  if (ids.empty()) {
    g.node_ids.resize(props.size());
    std::iota(g.node_ids.begin(), g.node_ids.end(), std::size_t{0});
  } else {
    g.node_ids.assign(ids.begin(), ids.end());
  }
  const std::size_t n = g.node_ids.size();
  g.edges = SquareMatrix(n);
  g.transition = SquareMatrix(n);
  g.prior.assign(n, 0.0);

  for (std::size_t i = 0; i < n; ++i) {
    const Proposal& pi = props[g.node_ids[i]];
    const BinaryMask& first = props[g.node_ids[0]].mask;
    if (pi.mask.width() != first.width() || pi.mask.height() != first.height()) {
      throw FormatError("build_class_graph: proposal " +
                        std::to_string(g.node_ids[i]) +
                        " has a mask of different dimensions");
    }
    if (pi.mask.area() == 0) {
      throw std::invalid_argument("build_class_graph: proposal " +
                                  std::to_string(g.node_ids[i]) +
                                  " has an empty mask");
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const Proposal& pj = props[g.node_ids[j]];
      if (pi.upn_score > pj.upn_score) continue;
      g.edges(i, j) = mask_coverage(pi.mask, pj.mask);
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    double row_sum = 0.0;
    double row_max = 0.0;
    for (double e : g.edges.row(i)) {
      row_sum += e;
      row_max = std::max(row_max, e);
    }
    g.prior[i] = row_max;
    if (row_sum > 0.0) {
      for (std::size_t j = 0; j < n; ++j) {
        g.transition(i, j) = g.edges(i, j) / row_sum;
      }
    }
  }
  return g;
}

DiffusionResult diffuse(const ClassGraph& g, const DiffusionParams& params,
                        const DiffusionObserver& observer) {
  const std::size_t n = g.size();
  std::vector<double> start(n, n > 0 ? 1.0 / static_cast<double>(n) : 0.0);
  return diffuse_from(g, params, std::move(start), observer);
}

DiffusionResult diffuse_from(const ClassGraph& g, const DiffusionParams& params,
                             std::vector<double> start,
                             const DiffusionObserver& observer) {
  validate(params);
  const std::size_t n = g.size();
  if (start.size() != n) {
    throw std::invalid_argument("diffuse: start vector has wrong length");
  }
  DiffusionResult result;
  result.pi = std::move(start);
  if (n == 0) {
    result.converged = true;
    return result;
  }

  // The first step applies the recurrence directly; later steps propagate
  // the increment, delta <- alpha * P delta, which is the same recurrence
  // with the prior term cancelled. Increments then carry only relative
  // rounding error, so the contraction bound holds on computed values.
  std::vector<double> delta(n);
  std::vector<double> next(n);
  const double alpha = params.alpha;
  for (int step = 1; step <= params.max_steps; ++step) {
    const std::vector<double>& src = step == 1 ? result.pi : delta;
    double diff_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::span<const double> row = g.transition.row(i);
      double propagated = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (row[j] != 0.0) propagated += row[j] * src[j];
      }
      next[i] = alpha * propagated;
      if (step == 1) next[i] += (1.0 - alpha) * g.prior[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (step == 1) {
        delta[i] = next[i] - result.pi[i];
        result.pi[i] = next[i];
      } else {
        delta[i] = next[i];
        result.pi[i] += delta[i];
      }
      diff_sq += delta[i] * delta[i];
      assert(result.pi[i] >= -kBoundSlack && result.pi[i] <= 1.0 + kBoundSlack);
    }
    result.steps_taken = step;
    if (observer) observer(step, result.pi, delta);
    if (std::sqrt(diff_sq) < params.tau) {
      result.converged = true;
      break;
    }
  }
  return result;
}

std::vector<double> refine_scores(std::span<const Proposal> props,
                                  const DiffusionResult& result,
                                  double lambda) {
  if (props.size() != result.pi.size()) {
    throw std::invalid_argument("refine_scores: length mismatch");
  }
  std::vector<double> out(props.size());
  for (std::size_t k = 0; k < props.size(); ++k) {
    out[k] = refined(result.pi[k], lambda, props[k].similarity);
  }
  return out;
}

std::vector<RefinedScore> diffuse_all_classes(std::span<const Proposal> props,
                                              const DiffusionParams& params) {
  validate(params);
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < props.size(); ++i) {
    by_class[props[i].pred_class].push_back(i);
  }

  std::vector<RefinedScore> out;
  out.reserve(props.size());
  for (const auto& [class_id, ids] : by_class) {
    const ClassGraph g = build_class_graph(props, ids);
    const DiffusionResult r = diffuse(g, params);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const double score = refined(r.pi[k], params.lambda, props[ids[k]].similarity);
      out.push_back({ids[k], class_id, score, r.pi[k], r.steps_taken});
    }
  }
  return out;
}

}  // namespace protodiff
