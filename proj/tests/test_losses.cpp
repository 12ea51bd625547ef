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


#include <cmath>

#include <doctest.h>

#include "oracles.hpp"
#include "otoscad/error.hpp"
#include "otoscad/scad_losses.hpp"

using namespace otoscad;
using namespace otoscad::scad;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Eigen::MatrixXd units(Rng& rng, int rows, int dim) {
  return oracle::matrix_of(oracle::random_units(rng, rows, dim), static_cast<std::size_t>(dim));
}

// Unit vector with a prescribed cosine to c (c must be e0 here).
Eigen::RowVectorXd with_cosine(double cosine, int dim) {
  Eigen::RowVectorXd v = Eigen::RowVectorXd::Zero(dim);
  v[0] = cosine;
  v[1] = std::sqrt(1.0 - cosine * cosine);
  return v;
}

}  // namespace

TEST_CASE("contrastive loss examples") {
  // Single pair: the positive is the only denominator term.
  Eigen::MatrixXd pair(2, 3);
  pair << 1, 0, 0, 0, 1, 0;
  CHECK(contrastive_loss(pair, paired_anchors(1), 0.25).value == doctest::Approx(0.0).epsilon(1e-12));

  // Positive similarity 1, two negatives with similarity 0, tau 1.
  Eigen::MatrixXd e(4, 3);
  e << 1, 0, 0,   //
      0, 1, 0,    //
      1, 0, 0,    //
      0, 0, 1;
  const double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + 2.0));
  CHECK(expected == doctest::Approx(0.5514).epsilon(1e-4));
  CHECK(contrastive_anchor_loss(e, 0, 2, 1.0) == doctest::Approx(expected).epsilon(1e-12));
  CHECK_THROWS_AS(contrastive_anchor_loss(e, 0, 2, 0.0), Error);
}

TEST_CASE("contrastive loss decreases as the positive similarity rises") {
  Rng rng(3);
  Eigen::MatrixXd e = units(rng, 6, 4);
  double previous = INFINITY;
  for (double cosine = -0.9; cosine <= 1.0; cosine += 0.1) {
    // Rotate the positive toward the anchor while negatives stay put.
    Eigen::VectorXd a = e.row(0).transpose();
    Eigen::VectorXd orth = e.row(3).transpose() - a * a.dot(e.row(3).transpose());
    orth.normalize();
    e.row(3) = (cosine * a + std::sqrt(1 - cosine * cosine) * orth).transpose();
    const double loss = contrastive_anchor_loss(e, 0, 3, 0.5);
    CHECK(loss < previous);
    previous = loss;
  }
}

TEST_CASE("contrastive loss is bounded at similarity extremes") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const int rows = 2 + 2 * static_cast<int>(rng.below(5));
    Eigen::MatrixXd e = units(rng, rows, 5);
    e.row(rows / 2) = e.row(0);  // positive similarity 1
    const double loss = contrastive_anchor_loss(e, 0, rows / 2, 0.25);
    CHECK(loss >= 0.0);
    CHECK(loss <= std::log(static_cast<double>(rows - 1)) + 1e-12);
  }
}

TEST_CASE("mean shift examples") {
  const Eigen::VectorXd t = mean_shift(vec({1, 0}), vec({0, 1}));
  CHECK(t[0] == doctest::Approx(1 / std::sqrt(2.0)));
  CHECK(t[1] == doctest::Approx(-1 / std::sqrt(2.0)));
  const Eigen::VectorXd c = vec({0.6, 0.8});
  const Eigen::VectorXd anti = mean_shift(-c, c);
  CHECK(anti[0] == doctest::Approx(-0.6));
  CHECK(anti[1] == doctest::Approx(-0.8));
  CHECK_THROWS_AS(mean_shift(c, c), Error);
}

TEST_CASE("angular and shift angular examples") {
  const Eigen::VectorXd c = vec({1, 0, 0});
  Eigen::MatrixXd x(1, 3);
  x << 1, 0, 0;
  CHECK(angular_center_loss(x, c).value == doctest::Approx(-1.0));
  x << 0, 1, 0;
  CHECK(angular_center_loss(x, c).value == doctest::Approx(0.0));
  x << -1, 0, 0;
  CHECK(angular_center_loss(x, c).value == doctest::Approx(1.0));

  Eigen::MatrixXd normal(1, 3), z(1, 3);
  normal << 1, 0, 0;
  z << 0, 1, 0;
  CHECK(shift_angular_loss(normal, z, c).value == doctest::Approx(0.0));
  z << 1, 0, 0;
  CHECK(shift_angular_loss(normal, z, c).value == doctest::Approx(-1.0));
  normal.row(0) = with_cosine(0.5, 3);
  z.row(0) = with_cosine(-0.2, 3);
  CHECK(shift_angular_loss(normal, z, c).value == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("angular losses stay in range") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::MatrixXd x = units(rng, 4, 6), z = units(rng, 2, 6);
    const Eigen::VectorXd c = units(rng, 1, 6).row(0).transpose();
    const double a = angular_center_loss(x, c).value;
    const double s = shift_angular_loss(x, z, c).value;
    CHECK(a >= -1.0);
    CHECK(a <= 1.0);
    CHECK(s >= -1.0);
    CHECK(s <= 3.0);
  }
  Eigen::MatrixXd x(1, 3), z(1, 3);
  x << -1, 0, 0;
  z << -1, 0, 0;
  const Eigen::Vector3d c(1, 0, 0);
  CHECK(shift_angular_loss(x, z, c).value == 3.0);
  CHECK(shift_angular_loss(-x, -z, c).value == -1.0);
}

TEST_CASE("center of embeddings") {
  Eigen::MatrixXd one(1, 3);
  one << 0, 0.6, 0.8;
  CHECK(center_of(one).isApprox(one.row(0).transpose()));

  Eigen::MatrixXd opposed(2, 2);
  opposed << 1, 0, -1, 0;
  CHECK_THROWS_AS(center_of(opposed), Error);

  Eigen::MatrixXd three(3, 3);
  three << 1, 0, 0, 0, 1, 0, 0, 0, 1;
  const Eigen::VectorXd c = center_of(three);
  for (int i = 0; i < 3; ++i) CHECK(c[i] == doctest::Approx(1 / std::sqrt(3.0)).epsilon(1e-15));
  CHECK(c.norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("mean-shifted contrastive loss composes mean shift and contrastive loss") {
  Rng rng(6);
  const Eigen::MatrixXd views = units(rng, 6, 5), none(0, 5);
  const Eigen::VectorXd c = units(rng, 1, 5).row(0).transpose();
  const double direct =
      contrastive_loss(mean_shift_rows(views, c), paired_anchors(3), 0.25).value;
  CHECK(mean_shifted_contrastive_loss(views, none, c, 0.25).value ==
        doctest::Approx(direct).epsilon(1e-14));
}

TEST_CASE("losses match brute-force scalar evaluation") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(5)), m = static_cast<int>(rng.below(4));
    const int dim = 2 + static_cast<int>(rng.below(7));
    const double tau = rng.uniform(0.1, 1.0);
    const auto v = oracle::random_units(rng, 2 * n, dim), z = oracle::random_units(rng, m, dim);
    const auto c = oracle::random_unit(rng, dim);
    const auto V = oracle::matrix_of(v, dim), Z = oracle::matrix_of(z, dim);
    const Eigen::VectorXd C = Eigen::Map<const Eigen::VectorXd>(c.data(), dim);

    CHECK(oracle::close_rel(contrastive_loss(V, paired_anchors(n), tau).value,
                            oracle::con_batch(v, {}, tau), 1e-5));
    CHECK(oracle::close_rel(mean_shifted_contrastive_loss(V, Z, C, tau).value,
                            oracle::msc(v, z, c, tau), 1e-5));
    CHECK(oracle::close_rel(angular_center_loss(V, C).value, oracle::angular(v, c), 1e-5));
    CHECK(oracle::close_rel(shift_angular_loss(V, Z, C).value, oracle::shift_angular(v, z, c), 1e-5));
    CHECK(oracle::close_rel(final_loss(V, Z, C, tau).value, oracle::final_loss(v, z, c, tau), 1e-5));
    const auto theta = mean_shift_rows(V, C);
    for (int i = 0; i < 2 * n; ++i) {
      const auto ref = oracle::mean_shift(v[i], c);
      for (int j = 0; j < dim; ++j) CHECK(oracle::close_rel(theta(i, j), ref[j], 1e-5));
    }
  }
}

TEST_CASE("final loss is the sum of its parts and MSC reduces to the baseline") {
  Rng rng(8);
  const Eigen::MatrixXd views = units(rng, 8, 6), z = units(rng, 4, 6), none(0, 6);
  const Eigen::VectorXd c = units(rng, 1, 6).row(0).transpose();
  const double sum = mean_shifted_contrastive_loss(views, z, c, 0.25).value +
                     shift_angular_loss(views, z, c).value;
  CHECK(final_loss(views, z, c, 0.25).value == doctest::Approx(sum).epsilon(1e-14));

  const auto baseline = evaluate_objective(Objective::kMscAngular, views, z, c, 0.25);
  const double expected = mean_shifted_contrastive_loss(views, none, c, 0.25).value +
                          angular_center_loss(views, c).value;
  CHECK(baseline.total == doctest::Approx(expected).epsilon(1e-14));
  CHECK(baseline.hinge == 0.0);
  CHECK(baseline.grad.bottomRows(4).isZero());

  const auto full = evaluate_objective(Objective::kMscShiftAngular, views, z, c, 0.25);
  CHECK(full.total == doctest::Approx(final_loss(views, z, c, 0.25).value).epsilon(1e-14));
  CHECK(full.grad.isApprox(final_loss(views, z, c, 0.25).grad));
}

TEST_CASE("objective names round-trip") {
  for (auto o : {Objective::kMsc, Objective::kAngular, Objective::kShiftAngular,
                 Objective::kMscAngular, Objective::kMscShiftAngular}) {
    CHECK(parse_objective(to_string(o)) == o);
  }
  CHECK_THROWS_AS(parse_objective("svdd"), Error);
}

TEST_CASE("loss gradients match central differences") {
  Rng rng(9);
  constexpr double h = 1e-4;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(3)), m = 1 + static_cast<int>(rng.below(3));
    const int dim = 3 + static_cast<int>(rng.below(4));
    const double tau = rng.uniform(0.2, 1.0);
    const Eigen::MatrixXd views = units(rng, 2 * n, dim);
    const Eigen::VectorXd c = units(rng, 1, dim).row(0).transpose();
    Eigen::MatrixXd z = units(rng, m, dim);
    for (int j = 0; j < m; ++j) {
      while (1.0 - z.row(j).dot(c.transpose()) < 1e-2) z.row(j) = units(rng, 1, dim).row(0);
    }
    Eigen::MatrixXd stacked(2 * n + m, dim);
    stacked << views, z;
    auto split = [&](const Eigen::MatrixXd& s) {
      return std::pair<Eigen::MatrixXd, Eigen::MatrixXd>{s.topRows(2 * n), s.bottomRows(m)};
    };

    const auto con = contrastive_loss(views, paired_anchors(n), tau);
    CHECK(oracle::gradient_rel_error(
              con.grad, oracle::numeric_gradient(
                            [&](const Eigen::MatrixXd& x) {
                              return contrastive_loss(x, paired_anchors(n), tau).value;
                            },
                            views, h)) <= 1e-3);

    const auto msc = mean_shifted_contrastive_loss(views, z, c, tau);
    CHECK(oracle::gradient_rel_error(
              msc.grad, oracle::numeric_gradient(
                            [&](const Eigen::MatrixXd& x) {
                              auto [v, s] = split(x);
                              return mean_shifted_contrastive_loss(v, s, c, tau).value;
                            },
                            stacked, h)) <= 1e-3);

    CHECK(oracle::gradient_rel_error(
              angular_center_loss(views, c).grad,
              oracle::numeric_gradient(
                  [&](const Eigen::MatrixXd& x) { return angular_center_loss(x, c).value; }, views,
                  h)) <= 1e-3);

    CHECK(oracle::gradient_rel_error(
              shift_angular_loss(views, z, c).grad,
              oracle::numeric_gradient(
                  [&](const Eigen::MatrixXd& x) {
                    auto [v, s] = split(x);
                    return shift_angular_loss(v, s, c).value;
                  },
                  stacked, h)) <= 1e-3);

    CHECK(oracle::gradient_rel_error(
              final_loss(views, z, c, tau).grad,
              oracle::numeric_gradient(
                  [&](const Eigen::MatrixXd& x) {
                    auto [v, s] = split(x);
                    return final_loss(v, s, c, tau).value;
                  },
                  stacked, h)) <= 1e-3);

    // Mean shift as a map: gradient of a random linear functional.
    const Eigen::MatrixXd w = units(rng, 2 * n, dim);
    const Eigen::MatrixXd analytic = mean_shift_backward(views, c, w);
    CHECK(oracle::gradient_rel_error(
              analytic, oracle::numeric_gradient(
                            [&](const Eigen::MatrixXd& x) {
                              return mean_shift_rows(x, c).cwiseProduct(w).sum();
                            },
                            views, h)) <= 1e-3);
  }
}
