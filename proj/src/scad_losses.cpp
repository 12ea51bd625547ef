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

#include "otoscad/scad_losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "otoscad/error.hpp"

namespace otoscad::scad {

std::vector<ContrastiveAnchor> paired_anchors(int n_pairs) {
  std::vector<ContrastiveAnchor> anchors;
  anchors.reserve(2 * static_cast<std::size_t>(n_pairs));
  for (int i = 0; i < n_pairs; ++i) anchors.push_back({i, i + n_pairs});
  for (int i = 0; i < n_pairs; ++i) anchors.push_back({i + n_pairs, i});
  return anchors;
}

namespace {

void check_anchor(const Embeddings& e, const ContrastiveAnchor& a) {
  const auto rows = static_cast<int>(e.rows());
  require(a.anchor >= 0 && a.anchor < rows && a.positive >= 0 && a.positive < rows &&
              a.anchor != a.positive,
          ErrorCategory::kInvalidArgument, "contrastive pairing references an invalid row");
}

// Similarities of the anchor to every other row, scaled by 1/tau, and their
// log-sum-exp.
double anchor_logits(const Embeddings& e, int anchor, double tau, Eigen::VectorXd& logits) {
  logits = (e * e.row(anchor).transpose()) / tau;
  double peak = -std::numeric_limits<double>::infinity();
  for (Eigen::Index m = 0; m < logits.size(); ++m) {
    if (m != anchor) peak = std::max(peak, logits[m]);
  }
  double sum = 0.0;
  for (Eigen::Index m = 0; m < logits.size(); ++m) {
    if (m != anchor) sum += std::exp(logits[m] - peak);
  }
  return peak + std::log(sum);
}

}  // namespace

double contrastive_anchor_loss(const Embeddings& e, int anchor, int positive, double tau) {
  require(tau > 0, ErrorCategory::kInvalidArgument, "temperature must be positive");
  check_anchor(e, {anchor, positive});
  Eigen::VectorXd logits;
  const double lse = anchor_logits(e, anchor, tau, logits);
  return lse - logits[positive];
}

LossResult contrastive_loss(const Embeddings& e, std::span<const ContrastiveAnchor> anchors,
                            double tau) {
  require(tau > 0, ErrorCategory::kInvalidArgument, "temperature must be positive");
  require(!anchors.empty(), ErrorCategory::kInvalidArgument, "contrastive loss needs anchors");
  LossResult out;
  out.grad = Embeddings::Zero(e.rows(), e.cols());
  const double scale = 1.0 / static_cast<double>(anchors.size());
  Eigen::VectorXd logits;
  for (const auto& a : anchors) {
    check_anchor(e, a);
    const double lse = anchor_logits(e, a.anchor, tau, logits);
    out.value += (lse - logits[a.positive]) * scale;
    // d/d logit_m = softmax_m - [m == positive], over m != anchor.
    Eigen::VectorXd weights(logits.size());
    for (Eigen::Index m = 0; m < logits.size(); ++m) {
      weights[m] = m == a.anchor ? 0.0 : std::exp(logits[m] - lse);
    }
    weights[a.positive] -= 1.0;
    weights *= scale / tau;
    // logit_m = e_a . e_m / tau
    out.grad.row(a.anchor) += weights.transpose() * e;
    out.grad += weights * e.row(a.anchor);
  }
  return out;
}

Eigen::VectorXd mean_shift(const Eigen::VectorXd& e, const Eigen::VectorXd& center) {
  require(e.size() == center.size(), ErrorCategory::kInvalidArgument,
          "mean_shift: dimension mismatch");
  const Eigen::VectorXd diff = e - center;
  const double norm = diff.norm();
  require(norm > 1e-8, ErrorCategory::kNumerical,
          "mean_shift: embedding coincides with the center; direction undefined");
  return diff / norm;
}

Embeddings mean_shift_rows(const Embeddings& e, const Eigen::VectorXd& center) {
  Embeddings out(e.rows(), e.cols());
  for (Eigen::Index i = 0; i < e.rows(); ++i) {
    out.row(i) = mean_shift(e.row(i).transpose(), center).transpose();
  }
  return out;
}

Embeddings mean_shift_backward(const Embeddings& e, const Eigen::VectorXd& center,
                               const Embeddings& grad_shifted) {
  Embeddings out(e.rows(), e.cols());
  for (Eigen::Index i = 0; i < e.rows(); ++i) {
    const Eigen::VectorXd diff = e.row(i).transpose() - center;
    const double norm = diff.norm();
    const Eigen::VectorXd theta = diff / norm;
    const Eigen::VectorXd g = grad_shifted.row(i).transpose();
    out.row(i) = ((g - theta * theta.dot(g)) / norm).transpose();
  }
  return out;
}

LossResult mean_shifted_contrastive_loss(const Embeddings& views, const Embeddings& shifted,
                                         const Eigen::VectorXd& center, double tau) {
  require(views.rows() >= 2 && views.rows() % 2 == 0, ErrorCategory::kInvalidArgument,
          "views must hold an even number (2N >= 2) of rows");
  require(shifted.rows() == 0 || shifted.cols() == views.cols(), ErrorCategory::kInvalidArgument,
          "shifted samples have a different dimension");
  const auto n_views = views.rows();
  Embeddings stacked(n_views + shifted.rows(), views.cols());
  stacked.topRows(n_views) = views;
  if (shifted.rows() > 0) stacked.bottomRows(shifted.rows()) = shifted;

  const Embeddings theta = mean_shift_rows(stacked, center);
  const auto anchors = paired_anchors(static_cast<int>(n_views / 2));
  LossResult con = contrastive_loss(theta, anchors, tau);
  return {con.value, mean_shift_backward(stacked, center, con.grad)};
}

LossResult angular_center_loss(const Embeddings& e, const Eigen::VectorXd& center) {
  LossResult out;
  out.grad = Embeddings::Zero(e.rows(), e.cols());
  if (e.rows() == 0) return out;
  const double scale = 1.0 / static_cast<double>(e.rows());
  for (Eigen::Index i = 0; i < e.rows(); ++i) {
    out.value -= e.row(i).dot(center.transpose()) * scale;
    out.grad.row(i) = -center.transpose() * scale;
  }
  return out;
}

double shift_hinge(const Embeddings& shifted, const Eigen::VectorXd& center) {
  if (shifted.rows() == 0) return 0.0;
  double sum = 0.0;
  for (Eigen::Index j = 0; j < shifted.rows(); ++j) {
    sum += std::max(0.0, 1.0 - shifted.row(j).dot(center.transpose()));
  }
  return sum / static_cast<double>(shifted.rows());
}

LossResult shift_angular_loss(const Embeddings& normals, const Embeddings& shifted,
                              const Eigen::VectorXd& center) {
  LossResult angular = angular_center_loss(normals, center);
  LossResult out;
  out.value = angular.value + shift_hinge(shifted, center);
  out.grad = Embeddings::Zero(normals.rows() + shifted.rows(), center.size());
  if (normals.rows() > 0) out.grad.topRows(normals.rows()) = angular.grad;
  if (shifted.rows() > 0) {
    const double scale = 1.0 / static_cast<double>(shifted.rows());
    for (Eigen::Index j = 0; j < shifted.rows(); ++j) {
      if (1.0 - shifted.row(j).dot(center.transpose()) > 0.0) {
        out.grad.row(normals.rows() + j) = -center.transpose() * scale;
      }
    }
  }
  return out;
}

LossResult final_loss(const Embeddings& views, const Embeddings& shifted,
                      const Eigen::VectorXd& center, double tau) {
  LossResult msc = mean_shifted_contrastive_loss(views, shifted, center, tau);
  LossResult sa = shift_angular_loss(views, shifted, center);
  return {msc.value + sa.value, msc.grad + sa.grad};
}

std::string_view to_string(Objective objective) {
  switch (objective) {
    case Objective::kMsc: return "msc";
    case Objective::kAngular: return "angular";
    case Objective::kShiftAngular: return "shift_angular";
    case Objective::kMscAngular: return "msc+angular";
    case Objective::kMscShiftAngular: return "msc+shift_angular";
  }
  return "?";
}

Objective parse_objective(std::string_view text) {
  for (Objective o : {Objective::kMsc, Objective::kAngular, Objective::kShiftAngular,
                      Objective::kMscAngular, Objective::kMscShiftAngular}) {
    if (text == to_string(o)) return o;
  }
  fail(ErrorCategory::kConfig, "unknown objective '" + std::string(text) + "'");
}

bool uses_shifted(Objective objective) {
  return objective == Objective::kShiftAngular || objective == Objective::kMscShiftAngular;
}

ObjectiveValue evaluate_objective(Objective objective, const Embeddings& views,
                                  const Embeddings& shifted, const Eigen::VectorXd& center,
                                  double tau) {
  const Embeddings none(0, views.cols());
  const Embeddings& z = uses_shifted(objective) ? shifted : none;
  ObjectiveValue out;
  out.grad = Embeddings::Zero(views.rows() + shifted.rows(), views.cols());
  auto add_grad = [&](const Eigen::MatrixXd& g) { out.grad.topRows(g.rows()) += g; };

  const bool with_msc = objective == Objective::kMsc || objective == Objective::kMscAngular ||
                        objective == Objective::kMscShiftAngular;
  if (with_msc) {
    LossResult msc = mean_shifted_contrastive_loss(views, z, center, tau);
    out.msc = msc.value;
    add_grad(msc.grad);
  }
  if (objective == Objective::kAngular || objective == Objective::kMscAngular) {
    LossResult ang = angular_center_loss(views, center);
    out.angular = ang.value;
    add_grad(ang.grad);
  }
  if (uses_shifted(objective)) {
    LossResult sa = shift_angular_loss(views, z, center);
    out.hinge = shift_hinge(z, center);
    out.angular = sa.value - out.hinge;
    add_grad(sa.grad);
  }
  out.total = out.msc + out.angular + out.hinge;
  return out;
}

Eigen::VectorXd center_of(const Embeddings& e) {
  require(e.rows() > 0, ErrorCategory::kInvalidArgument, "center of an empty embedding set");
  const Eigen::VectorXd mean = e.colwise().mean().transpose();
  const double norm = mean.norm();
  require(norm >= 1e-8, ErrorCategory::kNumerical,
          "degenerate center: mean training embedding has (near) zero norm");
  return mean / norm;
}

}  // namespace otoscad::scad
