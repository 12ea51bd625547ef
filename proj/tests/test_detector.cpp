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


#include <algorithm>
#include <cmath>
#include <filesystem>

#include <doctest.h>

#include "oracles.hpp"
#include "otoscad/detector.hpp"
#include "otoscad/error.hpp"
#include "otoscad/geometry.hpp"
#include "otoscad/synth.hpp"

using namespace otoscad;
using namespace otoscad::detect;

namespace {

FrameAnnotation with_box(int index, BoundingBox b) { return {index, true, b}; }
FrameAnnotation without_box(int index) { return {index, false, std::nullopt}; }

DetectorConfig tiny_config() {
  DetectorConfig c;
  c.backbone = {32, 4, {8, 8}};
  c.hidden = 16;
  return c;
}

Image disc_frame(int size, double cx, double cy, double r) {
  Image img(size, size);
  const auto mask = synth::disc_mask(size, cx, cy, r);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      if (mask[static_cast<std::size_t>(y) * size + x]) img.set_pixel(y, x, {1.0f, 1.0f, 1.0f});
  return img;
}

std::optional<BoundingBox> bright_box(const Image& img) {
  const int s = img.height();
  int x0 = s, y0 = s, x1 = -1, y1 = -1;
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      if (img.at(y, x, 0) < 0.5f) continue;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  if (x1 < 0) return std::nullopt;
  const double d = s;
  return BoundingBox{x0 / d, y0 / d, (x1 + 1) / d, (y1 + 1) / d};
}

}  // namespace

TEST_CASE("detect_loss examples") {
  const std::vector<FrameAnnotation> truth{with_box(0, {0.1, 0.2, 0.5, 0.6}), without_box(1)};
  Eigen::MatrixXd logits(2, 2), boxes(2, 4);
  logits << -20, 20, 20, -20;
  boxes << 0.1, 0.2, 0.5, 0.6, 0.3, 0.3, 0.3, 0.3;
  const DetectLoss perfect = detect_loss(logits, boxes, truth);
  CHECK(perfect.total <= 1e-6);
  CHECK(perfect.total >= 0.0);

  logits.setZero();
  const DetectLoss uniform = detect_loss(logits, boxes, truth);
  CHECK(uniform.cls == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  logits << -20, 20, 20, -20;
  boxes.row(0).array() += 0.1;
  const DetectLoss offset = detect_loss(logits, boxes, truth);
  CHECK(offset.local == doctest::Approx(0.1).epsilon(1e-12));

  const std::vector<FrameAnnotation> negatives{without_box(0), without_box(1)};
  CHECK(detect_loss(logits, boxes, negatives).local == 0.0);
  CHECK_THROWS_AS(detect_loss(Eigen::MatrixXd(0, 2), Eigen::MatrixXd(0, 4), {}), Error);
}

TEST_CASE("detect_loss gradients match central differences") {
  Rng rng(51);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(6));
    std::vector<FrameAnnotation> truth;
    Eigen::MatrixXd logits(n, 2), boxes(n, 4);
    for (int i = 0; i < n; ++i) {
      if (rng.bernoulli(0.6)) {
        const double x0 = rng.uniform(0, 0.4), y0 = rng.uniform(0, 0.4);
        truth.push_back(with_box(i, {x0, y0, x0 + rng.uniform(0.2, 0.55), y0 + rng.uniform(0.2, 0.55)}));
      } else {
        truth.push_back(without_box(i));
      }
      for (int j = 0; j < 2; ++j) logits(i, j) = rng.normal(0, 2);
      for (int j = 0; j < 4; ++j) {
        double v = rng.uniform(0.01, 0.99);
        // Keep away from the L1 kink.
        if (truth[i].box) {
          const double t = j == 0 ? truth[i].box->x_min : j == 1 ? truth[i].box->y_min
                         : j == 2 ? truth[i].box->x_max : truth[i].box->y_max;
          while (std::abs(v - t) < 1e-2) v = rng.uniform(0.01, 0.99);
        }
        boxes(i, j) = v;
      }
    }
    const DetectLoss loss = detect_loss(logits, boxes, truth);
    CHECK(loss.total >= 0.0);
    const auto num_logits = oracle::numeric_gradient(
        [&](const Eigen::MatrixXd& l) { return detect_loss(l, boxes, truth).total; }, logits, 1e-4);
    const auto num_boxes = oracle::numeric_gradient(
        [&](const Eigen::MatrixXd& b) { return detect_loss(logits, b, truth).total; }, boxes, 1e-4);
    CHECK(oracle::gradient_rel_error(loss.grad_logits, num_logits) <= 1e-3);
    if (loss.grad_boxes.norm() > 0 || num_boxes.norm() > 0) {
      CHECK(oracle::gradient_rel_error(loss.grad_boxes, num_boxes) <= 1e-3);
    }
  }
}

TEST_CASE("accuracy table") {
  const std::vector<FrameAnnotation> truth{with_box(0, {0.1, 0.1, 0.5, 0.5}),
                                           with_box(1, {0.2, 0.2, 0.6, 0.6})};
  const std::vector<Label> labels{Label::kNormal, Label::kNormal};
  const std::vector<double> thresholds{0.5, 0.75, 0.9};

  std::vector<Detection> exact{{true, 0.9, truth[0].box}, {true, 0.9, truth[1].box}};
  for (const auto& row : eval_detection_accuracy(exact, truth, labels, thresholds)) {
    CHECK(row.accuracy == 1.0);
  }

  // Second frame: right class, IoU 0.25.
  std::vector<Detection> half{{true, 0.9, truth[0].box}, {true, 0.9, BoundingBox{0.4, 0.4, 0.8, 0.8}}};
  const std::vector<double> at_half{0.5};
  const auto rows = eval_detection_accuracy(half, truth, labels, at_half);
  bool saw_overall = false;
  for (const auto& row : rows) {
    CHECK(row.accuracy == 0.5);
    saw_overall |= row.label == "overall";
  }
  CHECK(saw_overall);

  const std::vector<double> bad{1.0};
  CHECK_THROWS_AS(eval_detection_accuracy(half, truth, labels, bad), Error);

  // Monotone in the threshold on random detections.
  Rng rng(52);
  std::vector<FrameAnnotation> t2;
  std::vector<Detection> d2;
  std::vector<Label> l2;
  for (int i = 0; i < 200; ++i) {
    const double x = rng.uniform(0, 0.5), y = rng.uniform(0, 0.5);
    t2.push_back(rng.bernoulli(0.8) ? with_box(i, {x, y, x + 0.4, y + 0.4}) : without_box(i));
    const double dx = rng.uniform(-0.1, 0.1);
    const bool present = rng.bernoulli(0.8);
    d2.push_back({present, 0.7, present ? std::optional<BoundingBox>(clip_box({x + dx, y, x + dx + 0.4, y + 0.4}))
                                        : std::nullopt});
    l2.push_back(i % 2 ? Label::kAbnormal : Label::kNormal);
  }
  const std::vector<double> sweep{0.1, 0.3, 0.5, 0.7, 0.9};
  const auto table = eval_detection_accuracy(d2, t2, l2, sweep);
  for (const std::string label : {"normal", "abnormal", "overall"}) {
    double previous = 2.0;
    for (const auto& row : table) {
      if (row.label != label) continue;
      CHECK(row.accuracy <= previous);
      previous = row.accuracy;
    }
  }
}

TEST_CASE("augmented boxes follow the crop and the warp") {
  DetectorTrainParams params;
  params.jitter = {0, 0, 0, 0};
  params.max_rotation_degrees = 20;
  params.max_shear = 0.25;
  Rng rng(53);
  double iou_sum = 0.0;
  int count = 0;
  for (int i = 0; i < 300; ++i) {
    const double r = rng.uniform(7, 12);
    const double cx = rng.uniform(r + 2, 48 - r), cy = rng.uniform(r + 2, 48 - r);
    const Image frame = disc_frame(50, cx, cy, r);
    const FrameAnnotation truth = with_box(0, *bright_box(frame));
    const TrainingSample s = augment_for_training(frame, truth, 40, params, rng);
    CHECK(s.image.height() == 40);
    CHECK(s.truth.has_eardrum == s.truth.box.has_value());
    const auto visible = bright_box(s.image);
    if (!s.truth.box || !visible) continue;
    CHECK(s.truth.box->is_valid());
    iou_sum += iou(*s.truth.box, *visible);
    ++count;
  }
  CHECK(count > 250);
  CHECK(iou_sum / count > 0.85);
}

TEST_CASE("detector forward shapes, zero epochs and errors") {
  DetectorModel model(tiny_config());
  model.init(1);
  const auto initial = model.params().values();
  Rng rng(54);
  std::vector<Image> frames;
  std::vector<FrameAnnotation> truth;
  for (int i = 0; i < 5; ++i) {
    Image img(40, 40);
    for (float& v : img.data()) v = static_cast<float>(rng.uniform());
    frames.push_back(img);
    truth.push_back(with_box(0, {0.1, 0.1, 0.6, 0.6}));
  }
  const auto detections = run_detector(model, frames);
  CHECK(detections.size() == 5);
  for (const auto& d : detections) {
    CHECK(d.has_eardrum == d.box.has_value());
    CHECK(d.score >= 0.0);
    CHECK(d.score <= 1.0);
  }
  DetectorTrainParams params;
  params.epochs = 0;
  train_detector(frames, truth, model, params, 1);
  CHECK(model.params().values() == initial);
  CHECK_THROWS_AS(train_detector(std::vector<Image>{}, {}, model, params, 1), Error);
}

TEST_CASE("detector training reduces the loss and checkpoints round-trip") {
  synth::SynthConfig sc;
  sc.counts = {};
  sc.counts.at(Split::kTrain, Label::kNormal) = 10;
  sc.frames_per_video = 6;
  sc.image_size = 40;
  const auto data = synth::generate_in_memory(sc);
  DetectorModel model(tiny_config());
  model.init(2);
  DetectorTrainParams params;
  params.epochs = 30;
  params.batch_size = 20;
  params.learning_rate = 0.03;
  const auto result = train_detector(data.manifest, data.sources(), model, params, 3);
  REQUIRE(result.loss_curve.size() == 30);
  auto window = [&](std::size_t from) {
    double s = 0.0;
    for (std::size_t i = from; i < from + 5; ++i) s += result.loss_curve[i];
    return s / 5;
  };
  CHECK(window(25) < window(0));

  const auto path = std::filesystem::temp_directory_path() / "otoscad_test_detector.json";
  save_detector(model, {{"seed", 3}}, path);
  nlohmann::json meta;
  const DetectorModel loaded = load_detector(path, &meta);
  CHECK(loaded.params().values() == model.params().values());
  CHECK(loaded.config() == model.config());
  CHECK(meta.at("seed") == 3);
  std::filesystem::remove(path);

  // Same seed, same parameters.
  DetectorModel again(tiny_config());
  again.init(2);
  train_detector(data.manifest, data.sources(), again, params, 3);
  CHECK(again.params().values() == model.params().values());
}
