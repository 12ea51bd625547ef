// Copyright 2026 The otoscad Authors.
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

// Representation-learning objectives on unit-sphere embeddings. Embedding
// sets are matrices with one sample per row. Every loss returns its value
// together with the gradient with respect to its input rows.

#pragma once

#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace otoscad::scad {

using Embeddings = Eigen::MatrixXd;

struct LossResult {
  double value = 0.0;
  Eigen::MatrixXd grad;  // same shape as the (stacked) inputs
};

/// An anchor row and the row holding its positive view.
struct ContrastiveAnchor {
  int anchor = 0;
  int positive = 0;
};

/// Anchors for 2N rows laid out as [first views; second views]: row i pairs
/// with row i + N and vice versa.
std::vector<ContrastiveAnchor> paired_anchors(int n_pairs);

/// Per-anchor contrastive loss
///   -log( exp(e_a . e_p / tau) / sum_{m != a} exp(e_a . e_m / tau) ).
/// Rows that are never anchors still appear in every denominator.
double contrastive_anchor_loss(const Embeddings& e, int anchor, int positive, double tau);

/// Mean of contrastive_anchor_loss over the given anchors.
LossResult contrastive_loss(const Embeddings& e, std::span<const ContrastiveAnchor> anchors,
                            double tau);

/// (e - c) / |e - c|. Throws kNumerical when e coincides with c.
Eigen::VectorXd mean_shift(const Eigen::VectorXd& e, const Eigen::VectorXd& center);
Embeddings mean_shift_rows(const Embeddings& e, const Eigen::VectorXd& center);
/// Pulls a gradient on the shifted rows back onto the unshifted rows.
Embeddings mean_shift_backward(const Embeddings& e, const Eigen::VectorXd& center,
                               const Embeddings& grad_shifted);

/// Contrastive loss on mean-shifted embeddings. `views` holds 2N rows laid
/// out as for paired_anchors; `shifted` rows (possibly none) join every
/// denominator as extra instances but are not anchors. The gradient is
/// stacked as [views; shifted].
LossResult mean_shifted_contrastive_loss(const Embeddings& views, const Embeddings& shifted,
                                         const Eigen::VectorXd& center, double tau);

/// Mean over rows of -e . c.
LossResult angular_center_loss(const Embeddings& e, const Eigen::VectorXd& center);

/// mean_i(-x_i . c) + mean_j max(0, 1 - z_j . c). An empty group contributes
/// zero. Gradient stacked as [normals; shifted].
LossResult shift_angular_loss(const Embeddings& normals, const Embeddings& shifted,
                              const Eigen::VectorXd& center);

/// The hinge part of shift_angular_loss alone.
double shift_hinge(const Embeddings& shifted, const Eigen::VectorXd& center);

/// mean_shifted_contrastive_loss + shift_angular_loss (views as normals).
LossResult final_loss(const Embeddings& views, const Embeddings& shifted,
                      const Eigen::VectorXd& center, double tau);

/// Training objectives available to the trainer and the ablation harness.
enum class Objective {
  kMsc,              // mean-shifted contrastive only
  kAngular,          // angular center loss only
  kShiftAngular,     // shift angular loss only
  kMscAngular,       // MSC baseline
  kMscShiftAngular,  // SCAD final loss
};

std::string_view to_string(Objective objective);
Objective parse_objective(std::string_view text);
/// Whether the objective consumes shift-transformed samples.
bool uses_shifted(Objective objective);

struct ObjectiveValue {
  double msc = 0.0;      // mean-shifted contrastive term (0 when unused)
  double angular = 0.0;  // mean -x . c over views (0 when unused)
  double hinge = 0.0;    // mean hinge over shifted samples (0 when unused)
  double total = 0.0;
  Eigen::MatrixXd grad;  // stacked [views; shifted]
};

ObjectiveValue evaluate_objective(Objective objective, const Embeddings& views,
                                  const Embeddings& shifted, const Eigen::VectorXd& center,
                                  double tau);

/// normalize(mean of rows). Throws kNumerical if the mean has norm < 1e-8.
Eigen::VectorXd center_of(const Embeddings& e);

}  // namespace otoscad::scad
