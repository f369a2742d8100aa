// Copyright 2026 The mlhash Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Triplet, push and bit-balancing losses over sigmoid embeddings, with
// gradients w.r.t. the embeddings. Embedding batches are K x B matrices
// (one embedding per column). Every reduction over the batch is a sum.

#include <cstddef>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "mlhash/error.hpp"
#include "mlhash/net.hpp"

namespace mlhash {

struct LossWeights {
  double margin = 0.2;       // alpha
  double push = 0.001;       // lambda_1
  double balancing = 1.0;    // lambda_2

  void validate() const {
    if (!(margin > 0.0)) throw ValidationError("margin must be positive");
    if (!(push >= 0.0) || !(balancing >= 0.0)) {
      throw ValidationError("loss weights must be non-negative");
    }
  }
};

// M triplets as three K x M matrices; column i of each forms triplet i.
template <typename Scalar>
struct TripletBatch {
  Mat<Scalar> anchors;
  Mat<Scalar> positives;
  Mat<Scalar> negatives;

  Eigen::Index size() const { return anchors.cols(); }
  Eigen::Index bits() const { return anchors.rows(); }

  void validate() const {
    if (anchors.cols() < 1) throw ValidationError("triplet batch is empty");
    if (positives.rows() != anchors.rows() || negatives.rows() != anchors.rows()) {
      throw ValidationError("triplet embeddings have different lengths");
    }
    if (positives.cols() != anchors.cols() || negatives.cols() != anchors.cols()) {
      throw ValidationError("triplet roles have different batch sizes");
    }
  }
};

template <typename Scalar>
struct TripletLossResult {
  Scalar loss = 0;
  Mat<Scalar> grad_anchors;
  Mat<Scalar> grad_positives;
  Mat<Scalar> grad_negatives;
  std::vector<Scalar> per_triplet;  // hinge value of each triplet
};

// sum_i max(0, |a-p|^2 - |a-n|^2 + margin). Inactive hinges contribute
// exactly zero loss and zero gradient.
template <typename Scalar>
TripletLossResult<Scalar> triplet_loss(const TripletBatch<Scalar>& batch, double margin) {
  batch.validate();
  const auto k = batch.bits();
  const auto m = batch.size();
  TripletLossResult<Scalar> r;
  r.grad_anchors = Mat<Scalar>::Zero(k, m);
  r.grad_positives = Mat<Scalar>::Zero(k, m);
  r.grad_negatives = Mat<Scalar>::Zero(k, m);
  r.per_triplet.assign(static_cast<std::size_t>(m), Scalar(0));
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto a = batch.anchors.col(i);
    const auto p = batch.positives.col(i);
    const auto n = batch.negatives.col(i);
    const Scalar hinge = (a - p).squaredNorm() - (a - n).squaredNorm() + static_cast<Scalar>(margin);
    if (hinge <= Scalar(0)) continue;
    r.per_triplet[static_cast<std::size_t>(i)] = hinge;
    r.loss += hinge;
    r.grad_anchors.col(i) = Scalar(2) * (n - p);
    r.grad_positives.col(i) = Scalar(2) * (p - a);
    r.grad_negatives.col(i) = Scalar(2) * (a - n);
  }
  return r;
}

template <typename Scalar>
struct RegularizerResult {
  Scalar loss = 0;
  Mat<Scalar> grad;  // same shape as the input embeddings
};

// -(1/K) sum_i |v_i - 0.5|^2, driving activations toward {0, 1}.
template <typename Scalar>
RegularizerResult<Scalar> push_loss(const Mat<Scalar>& embeddings) {
  if (embeddings.cols() < 1 || embeddings.rows() < 1) throw ValidationError("push loss needs embeddings");
  const Scalar k = static_cast<Scalar>(embeddings.rows());
  const Mat<Scalar> centered = embeddings.array() - Scalar(0.5);
  return {-centered.squaredNorm() / k, (Scalar(-2) / k) * centered};
}

// sum_i (mean(v_i) - 0.5)^2, driving each code toward half ones.
template <typename Scalar>
RegularizerResult<Scalar> balancing_loss(const Mat<Scalar>& embeddings) {
  if (embeddings.cols() < 1 || embeddings.rows() < 1) throw ValidationError("balancing loss needs embeddings");
  const Scalar k = static_cast<Scalar>(embeddings.rows());
  RegularizerResult<Scalar> r;
  r.grad.resize(embeddings.rows(), embeddings.cols());
  for (Eigen::Index i = 0; i < embeddings.cols(); ++i) {
    const Scalar dev = embeddings.col(i).mean() - Scalar(0.5);
    r.loss += dev * dev;
    r.grad.col(i).setConstant(Scalar(2) * dev / k);
  }
  return r;
}

template <typename Scalar>
struct CombinedLossResult {
  Scalar total = 0;
  Scalar metric = 0;
  Scalar push = 0;
  Scalar balancing = 0;
  TripletLossResult<Scalar> triplet;  // gradients below already include every term
  Mat<Scalar> grad_anchors;
  Mat<Scalar> grad_positives;
  Mat<Scalar> grad_negatives;
};

// metric + push_weight * push + balancing_weight * balancing.
//
// The two regularizers run over all 3M embedding slots. When `image_ids`
// (length 3M, ordered anchors | positives | negatives) is supplied, each
// distinct image is regularized once, at its first slot.
template <typename Scalar>
CombinedLossResult<Scalar> combined_loss(const TripletBatch<Scalar>& batch,
                                         const LossWeights& weights,
                                         std::span<const std::size_t> image_ids = {}) {
  batch.validate();
  weights.validate();
  const auto k = batch.bits();
  const auto m = batch.size();
  if (!image_ids.empty() && image_ids.size() != static_cast<std::size_t>(3 * m)) {
    throw ValidationError("image id list must have one entry per embedding slot");
  }

  CombinedLossResult<Scalar> r;
  r.triplet = triplet_loss(batch, weights.margin);
  r.metric = r.triplet.loss;

  Mat<Scalar> slots(k, 3 * m);
  slots << batch.anchors, batch.positives, batch.negatives;
  std::vector<Eigen::Index> kept;
  if (image_ids.empty()) {
    kept.resize(static_cast<std::size_t>(3 * m));
    for (Eigen::Index j = 0; j < 3 * m; ++j) kept[static_cast<std::size_t>(j)] = j;
  } else {
    std::unordered_set<std::size_t> seen;
    for (Eigen::Index j = 0; j < 3 * m; ++j) {
      if (seen.insert(image_ids[static_cast<std::size_t>(j)]).second) kept.push_back(j);
    }
  }
  Mat<Scalar> regularized(k, static_cast<Eigen::Index>(kept.size()));
  for (std::size_t j = 0; j < kept.size(); ++j) regularized.col(static_cast<Eigen::Index>(j)) = slots.col(kept[j]);

  const auto push = push_loss(regularized);
  const auto bal = balancing_loss(regularized);
  r.push = push.loss;
  r.balancing = bal.loss;
  const auto lp = static_cast<Scalar>(weights.push);
  const auto lb = static_cast<Scalar>(weights.balancing);
  r.total = r.metric + lp * r.push + lb * r.balancing;

  Mat<Scalar> grad(k, 3 * m);
  grad << r.triplet.grad_anchors, r.triplet.grad_positives, r.triplet.grad_negatives;
  for (std::size_t j = 0; j < kept.size(); ++j) {
    const auto src = static_cast<Eigen::Index>(j);
    grad.col(kept[j]) += lp * push.grad.col(src) + lb * bal.grad.col(src);
  }
  r.grad_anchors = grad.leftCols(m);
  r.grad_positives = grad.middleCols(m, m);
  r.grad_negatives = grad.rightCols(m);
  return r;
}

}  // namespace mlhash
