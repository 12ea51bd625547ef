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


// Brute-force reference implementations shared by the unit tests and the
// acceptance suite. Plain loops over std::vector, written without reuse of
// library code paths.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "otoscad/rng.hpp"
#include "otoscad/types.hpp"

namespace oracle {

using Vec = std::vector<double>;
using Rows = std::vector<Vec>;

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline Vec normalized(Vec v) {
  const double n = std::sqrt(dot(v, v));
  for (double& x : v) x /= n;
  return v;
}

inline Rows rows_of(const Eigen::MatrixXd& m) {
  Rows out(static_cast<std::size_t>(m.rows()), Vec(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  return out;
}

inline Eigen::MatrixXd matrix_of(const Rows& rows, std::size_t dim) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < dim; ++j) m(i, j) = rows[i][j];
  return m;
}

inline Vec vec_of(const Eigen::VectorXd& v) { return Vec(v.data(), v.data() + v.size()); }

inline Vec random_unit(otoscad::Rng& rng, int dim) {
  Vec v(static_cast<std::size_t>(dim));
  for (double& x : v) x = rng.normal();
  return normalized(v);
}

inline Rows random_units(otoscad::Rng& rng, int count, int dim) {
  Rows out;
  for (int i = 0; i < count; ++i) out.push_back(random_unit(rng, dim));
  return out;
}

// -log( exp(s_ap/tau) / sum_{m != a} exp(s_am/tau) ), evaluated directly.
inline double con_anchor(const Rows& e, std::size_t a, std::size_t p, double tau) {
  double denom = 0.0;
  for (std::size_t m = 0; m < e.size(); ++m) {
    if (m != a) denom += std::exp(dot(e[a], e[m]) / tau);
  }
  return -std::log(std::exp(dot(e[a], e[p]) / tau) / denom);
}

// Mean over the 2N view anchors; view i pairs with view i +- N. Extra rows
// join every denominator.
inline double con_batch(const Rows& views, const Rows& extra, double tau) {
  Rows all = views;
  all.insert(all.end(), extra.begin(), extra.end());
  const std::size_t n = views.size() / 2;
  double sum = 0.0;
  for (std::size_t i = 0; i < views.size(); ++i) sum += con_anchor(all, i, i < n ? i + n : i - n, tau);
  return sum / static_cast<double>(views.size());
}

inline Vec mean_shift(const Vec& e, const Vec& c) {
  Vec d(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) d[i] = e[i] - c[i];
  return normalized(d);
}

inline Rows mean_shift_all(const Rows& e, const Vec& c) {
  Rows out;
  for (const auto& r : e) out.push_back(mean_shift(r, c));
  return out;
}

inline double msc(const Rows& views, const Rows& shifted, const Vec& c, double tau) {
  return con_batch(mean_shift_all(views, c), mean_shift_all(shifted, c), tau);
}

inline double angular(const Rows& e, const Vec& c) {
  if (e.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : e) s += -dot(r, c);
  return s / static_cast<double>(e.size());
}

inline double hinge(const Rows& z, const Vec& c) {
  if (z.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : z) s += std::max(0.0, 1.0 - dot(r, c));
  return s / static_cast<double>(z.size());
}

inline double shift_angular(const Rows& normals, const Rows& shifted, const Vec& c) {
  return angular(normals, c) + hinge(shifted, c);
}

inline double final_loss(const Rows& views, const Rows& shifted, const Vec& c, double tau) {
  return msc(views, shifted, c, tau) + shift_angular(views, shifted, c);
}

inline bool close_rel(double a, double b, double rel) {
  return std::abs(a - b) <= rel * std::max({std::abs(a), std::abs(b), 1e-12});
}

// Central differences of f at x, one coordinate at a time.
inline Eigen::MatrixXd numeric_gradient(const std::function<double(const Eigen::MatrixXd&)>& f,
                                        const Eigen::MatrixXd& x, double h) {
  Eigen::MatrixXd g(x.rows(), x.cols());
  Eigen::MatrixXd probe = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      probe(i, j) = x(i, j) + h;
      const double up = f(probe);
      probe(i, j) = x(i, j) - h;
      const double down = f(probe);
      probe(i, j) = x(i, j);
      g(i, j) = (up - down) / (2.0 * h);
    }
  }
  return g;
}

// |analytic - numeric| / max(|analytic|, |numeric|) in the Frobenius norm.
inline double gradient_rel_error(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& numeric) {
  const double scale = std::max({analytic.norm(), numeric.norm(), 1e-12});
  return (analytic - numeric).norm() / scale;
}

// Box overlap counted on the centers of a grid x grid raster. Cells outside
// the bounding square of both boxes contribute to neither count.
inline double raster_iou(const otoscad::BoundingBox& a, const otoscad::BoundingBox& b, int grid) {
  const auto first = [&](double v) { return std::max(0, static_cast<int>(v * grid) - 1); };
  const auto last = [&](double v) { return std::min(grid, static_cast<int>(v * grid) + 1); };
  const int y_lo = first(std::min(a.y_min, b.y_min)), y_hi = last(std::max(a.y_max, b.y_max));
  const int x_lo = first(std::min(a.x_min, b.x_min)), x_hi = last(std::max(a.x_max, b.x_max));
  long inter = 0, uni = 0;
  for (int y = y_lo; y < y_hi; ++y) {
    const double py = (y + 0.5) / grid;
    for (int x = x_lo; x < x_hi; ++x) {
      const double px = (x + 0.5) / grid;
      const bool in_a = px >= a.x_min && px < a.x_max && py >= a.y_min && py < a.y_max;
      const bool in_b = px >= b.x_min && px < b.x_max && py >= b.y_min && py < b.y_max;
      inter += in_a && in_b;
      uni += in_a || in_b;
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// Pairwise Mann-Whitney count, ties credited 1/2.
inline double mann_whitney(const std::vector<otoscad::LabeledScore>& s) {
  double wins = 0.0;
  long pairs = 0;
  for (const auto& a : s) {
    if (a.label != otoscad::Label::kAbnormal) continue;
    for (const auto& n : s) {
      if (n.label != otoscad::Label::kNormal) continue;
      ++pairs;
      if (a.score > n.score) wins += 1.0;
      else if (a.score == n.score) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

// Average precision by enumerating every distinct threshold (descending) and
// recounting the flagged set (score >= threshold) from scratch.
inline double auprc_enumeration(const std::vector<otoscad::LabeledScore>& s) {
  std::vector<double> thresholds;
  int positives = 0;
  for (const auto& x : s) {
    thresholds.push_back(x.score);
    positives += x.label == otoscad::Label::kAbnormal;
  }
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  double area = 0.0, prev_recall = 0.0;
  for (double t : thresholds) {
    int tp = 0, fp = 0;
    for (const auto& x : s) {
      if (x.score >= t) (x.label == otoscad::Label::kAbnormal ? tp : fp)++;
    }
    const double recall = static_cast<double>(tp) / positives;
    const double precision = static_cast<double>(tp) / (tp + fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return area;
}

// Sum over the k largest similarities of (1 - similarity), by full sort.
inline double knn_scan(const std::vector<double>& refs, int dim, const double* q, int k) {
  const std::size_t rows = refs.size() / static_cast<std::size_t>(dim);
  std::vector<double> sims(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    double d = 0.0;
    for (int j = 0; j < dim; ++j) d += q[j] * refs[i * dim + j];
    sims[i] = d;
  }
  std::sort(sims.begin(), sims.end(), std::greater<>());
  double score = 0.0;
  for (int i = 0; i < k; ++i) score += std::max(0.0, 1.0 - sims[i]);
  return score;
}

}  // namespace oracle
