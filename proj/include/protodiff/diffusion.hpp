// Copyright 2026 The protodiff Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#ifndef PROTODIFF_DIFFUSION_HPP_
#define PROTODIFF_DIFFUSION_HPP_

#include <functional>
#include <span>
#include <vector>

#include "protodiff/features.hpp"
#include "protodiff/geometry.hpp"

namespace protodiff {

/// A matched query proposal: (feature, predicted class, objectness score,
/// mask) together with the box and the winning cosine similarity.
struct Proposal {
  BoundingBox box;
  BinaryMask mask;
  double upn_score = 0.0;
  FeatureVector feature;
  int pred_class = 0;
  double similarity = 0.0;
};

/// Dense N x N row-major matrix.
class SquareMatrix {
 public:
  SquareMatrix() = default;
  explicit SquareMatrix(std::size_t n) : n_(n), data_(n * n, 0.0) {}

  std::size_t size() const { return n_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * n_ + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * n_ + c];
  }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * n_, n_};
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

/// Directed coverage graph over the proposals of one predicted class.
///
/// edges(i, j) is the fraction of mask i covered by mask j, kept only when
/// proposal i does not outscore proposal j; the diagonal is zero. prior[i]
/// is the largest outgoing edge of i, and transition is `edges` with every
/// non-zero row scaled to sum to one (zero rows stay zero).
struct ClassGraph {
  std::vector<std::size_t> node_ids;
  SquareMatrix edges;
  std::vector<double> prior;
  SquareMatrix transition;

  std::size_t size() const { return node_ids.size(); }
};

struct DiffusionParams {
  double alpha = 0.3;   // weight of the propagated term
  double lambda = 0.5;  // decay exponent in the score transform
  double tau = 1e-6;    // early stop on the L2 norm of successive iterates
  int max_steps = 30;
};

// Throws std::invalid_argument when a field is out of range.
void validate(const DiffusionParams& p);

struct DiffusionResult {
  std::vector<double> pi;
  int steps_taken = 0;
  bool converged = false;
};

// Called after each update with the 1-based step index, the new iterate and
// the increment that produced it.
using DiffusionObserver =
    std::function<void(int, std::span<const double>, std::span<const double>)>;

// Builds the graph over `props[ids[k]]`. When ids is empty, all proposals
// are used. Masks must share dimensions (FormatError otherwise) and be
// non-empty (std::invalid_argument otherwise).
ClassGraph build_class_graph(std::span<const Proposal> props,
                             std::span<const std::size_t> ids = {});

// Iterates pi <- alpha * P pi + (1 - alpha) * w from the uniform start.
// After the first step the update is applied in increment form,
// delta <- alpha * P delta and pi <- pi + delta. Stops once the L2 norm of
// delta drops below tau.
DiffusionResult diffuse(const ClassGraph& g, const DiffusionParams& params,
                        const DiffusionObserver& observer = {});

// Same recurrence from an explicit starting vector.
DiffusionResult diffuse_from(const ClassGraph& g, const DiffusionParams& params,
                             std::vector<double> start,
                             const DiffusionObserver& observer = {});

// f[k] = (1 - pi[k])^lambda * similarity[k], with props listed in graph
// node order.
std::vector<double> refine_scores(std::span<const Proposal> props,
                                  const DiffusionResult& result, double lambda);

struct RefinedScore {
  std::size_t index = 0;  // into the input proposal list
  int class_id = 0;
  double score = 0.0;
  double pi = 0.0;
  int steps_taken = 0;
};

// Per-class graph, diffusion and refinement. Output is ordered by class_id,
// then by input order.
std::vector<RefinedScore> diffuse_all_classes(std::span<const Proposal> props,
                                              const DiffusionParams& params);

}  // namespace protodiff

#endif  // PROTODIFF_DIFFUSION_HPP_
