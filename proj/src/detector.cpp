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


#include "otoscad/detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include <spdlog/spdlog.h>

#include "otoscad/error.hpp"
#include "otoscad/geometry.hpp"
#include "otoscad/io.hpp"

namespace otoscad::detect {

namespace {

constexpr int kHeadOutputs = 6;
constexpr double kMinPredictedExtent = 1e-3;
constexpr double kMinAugmentedExtent = 0.05;

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

nn::Tensor resize_batch(std::span<const Image> frames, int size) {
  std::vector<Image> resized;
  resized.reserve(frames.size());
  for (const auto& f : frames) resized.push_back(resize_bilinear(f, size, size));
  return nn::images_to_tensor(resized);
}

}  // namespace

DetectorModel::DetectorModel(DetectorConfig config)
    : config_(std::move(config)), backbone_(config_.backbone, params_, 0) {
  require(config_.hidden > 0, ErrorCategory::kConfig, "detector hidden width must be positive");
  require(config_.presence_cutoff > 0.0 && config_.presence_cutoff < 1.0, ErrorCategory::kConfig,
          "presence cutoff must lie in (0, 1)");
  const int head_block = backbone_.num_blocks();
  const int flat = backbone_.out_channels() * backbone_.out_size() * backbone_.out_size();
  fc1_ = nn::Linear(params_, "head.fc1", flat, config_.hidden, head_block);
  fc2_ = nn::Linear(params_, "head.fc2", config_.hidden, kHeadOutputs, head_block);
}

void DetectorModel::init(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "detector.init"));
  backbone_.init(params_, rng);
  fc1_.init(params_, rng);
  fc2_.init(params_, rng, 0.1f);
}

DetectorModel::Output DetectorModel::forward(const nn::Tensor& x, Cache* cache) const {
  Cache local;
  Cache& c = cache ? *cache : local;
  c.features = backbone_.forward(params_, x, cache ? &c.backbone : nullptr);
  c.hidden = nn::relu(fc1_.forward(params_, c.features));
  c.out = fc2_.forward(params_, c.hidden);
  Output out{Eigen::MatrixXd(x.n, 2), Eigen::MatrixXd(x.n, 4)};
  for (int i = 0; i < x.n; ++i) {
    const float* o = c.out.sample(i);
    out.logits(i, 0) = o[0];
    out.logits(i, 1) = o[1];
    for (int j = 0; j < 4; ++j) out.boxes(i, j) = sigmoid(o[2 + j]);
  }
  return out;
}

void DetectorModel::backward(const Cache& cache, const Eigen::MatrixXd& grad_logits,
                             const Eigen::MatrixXd& grad_boxes, nn::Gradients& grads) const {
  const int n = cache.out.n;
  nn::Tensor g(n, kHeadOutputs, 1, 1);
  for (int i = 0; i < n; ++i) {
    const float* o = cache.out.sample(i);
    float* gi = g.sample(i);
    gi[0] = static_cast<float>(grad_logits(i, 0));
    gi[1] = static_cast<float>(grad_logits(i, 1));
    for (int j = 0; j < 4; ++j) {
      const double b = sigmoid(o[2 + j]);
      gi[2 + j] = static_cast<float>(grad_boxes(i, j) * b * (1.0 - b));
    }
  }
  nn::Tensor gh = fc2_.backward(params_, cache.hidden, g, grads, true);
  gh = nn::relu_backward(cache.hidden, gh);
  nn::Tensor gf = fc1_.backward(params_, cache.features, gh, grads, true);
  backbone_.backward(params_, cache.backbone, gf, grads, 0);
}

DetectLoss detect_loss(const Eigen::MatrixXd& logits, const Eigen::MatrixXd& boxes,
                       std::span<const FrameAnnotation> truth) {
  const auto n = static_cast<Eigen::Index>(truth.size());
  require(n > 0, ErrorCategory::kInvalidArgument, "detect_loss on an empty batch");
  require(logits.rows() == n && logits.cols() == 2 && boxes.rows() == n && boxes.cols() == 4,
          ErrorCategory::kInvalidArgument, "detect_loss: prediction shape mismatch");
  DetectLoss out;
  out.grad_logits = Eigen::MatrixXd::Zero(n, 2);
  out.grad_boxes = Eigen::MatrixXd::Zero(n, 4);
  int positives = 0;
  for (const auto& t : truth) positives += t.has_eardrum ? 1 : 0;

  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& t = truth[static_cast<std::size_t>(i)];
    require(t.has_eardrum == t.box.has_value(), ErrorCategory::kInvalidArgument,
            "detect_loss: annotation box must be present iff has_eardrum");
    const int y = t.has_eardrum ? 1 : 0;
    const double peak = std::max(logits(i, 0), logits(i, 1));
    const double lse =
        peak + std::log(std::exp(logits(i, 0) - peak) + std::exp(logits(i, 1) - peak));
    out.cls += (lse - logits(i, y)) / static_cast<double>(n);
    for (int k = 0; k < 2; ++k) {
      out.grad_logits(i, k) = (std::exp(logits(i, k) - lse) - (k == y ? 1.0 : 0.0)) / n;
    }
    if (!t.has_eardrum) continue;
    const BoundingBox& b = *t.box;
    const double target[4] = {b.x_min, b.y_min, b.x_max, b.y_max};
    const double scale = 1.0 / (4.0 * positives);
    for (int k = 0; k < 4; ++k) {
      const double d = boxes(i, k) - target[k];
      out.local += std::abs(d) * scale;
      out.grad_boxes(i, k) = d > 0 ? scale : (d < 0 ? -scale : 0.0);
    }
  }
  out.total = out.cls + out.local;
  return out;
}

void DetectorTrainParams::validate() const {
  require(epochs >= 0, ErrorCategory::kConfig, "detector epochs must be >= 0");
  require(learning_rate > 0, ErrorCategory::kConfig, "detector learning rate must be positive");
  require(momentum >= 0 && momentum < 1, ErrorCategory::kConfig, "momentum must lie in [0, 1)");
  require(weight_decay >= 0, ErrorCategory::kConfig, "weight decay must be >= 0");
  require(batch_size > 0, ErrorCategory::kConfig, "detector batch size must be positive");
  require(resize_ratio >= 1.0, ErrorCategory::kConfig, "resize ratio must be >= 1");
  require(max_rotation_degrees >= 0 && max_rotation_degrees < 90, ErrorCategory::kConfig,
          "rotation range must lie in [0, 90)");
  require(max_shear >= 0 && max_shear < 1, ErrorCategory::kConfig, "shear must lie in [0, 1)");
  require(cutout_fraction >= 0 && cutout_fraction < 1, ErrorCategory::kConfig,
          "cutout fraction must lie in [0, 1)");
  jitter.validate();
}

namespace {

// Applies the 2x2 map m about the image center, sampling the source through
// its inverse. Pixels mapped from outside the source are black.
Image warp_affine(const Image& src, const double m[4]) {
  const int h = src.height(), w = src.width();
  const double det = m[0] * m[3] - m[1] * m[2];
  const double inv[4] = {m[3] / det, -m[1] / det, -m[2] / det, m[0] / det};
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  Image out(h, w, 0.0f);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = x - cx, dy = y - cy;
      const double sx = inv[0] * dx + inv[1] * dy + cx;
      const double sy = inv[2] * dx + inv[3] * dy + cy;
      if (sx < -0.5 || sy < -0.5 || sx > w - 0.5 || sy > h - 0.5) continue;
      out.set_pixel(y, x, sample_bilinear(src, sy, sx));
    }
  }
  return out;
}

// Box of the transformed ellipse inscribed in `b` (the eardrum outline), in
// fractional coordinates of an s x s image.
std::optional<BoundingBox> warp_box(const BoundingBox& b, const double m[4], int s) {
  const double c = (s - 1) / 2.0;
  const double a = b.width() * s / 2.0, e = b.height() * s / 2.0;
  const double dx = (b.x_min + b.x_max) / 2.0 * s - 0.5 - c;
  const double dy = (b.y_min + b.y_max) / 2.0 * s - 0.5 - c;
  const double px = m[0] * dx + m[1] * dy + c + 0.5;
  const double py = m[2] * dx + m[3] * dy + c + 0.5;
  const double hx = std::hypot(m[0] * a, m[1] * e), hy = std::hypot(m[2] * a, m[3] * e);
  const double x0 = (px - hx) / s, x1 = (px + hx) / s, y0 = (py - hy) / s, y1 = (py + hy) / s;
  BoundingBox out{std::clamp(x0, 0.0, 1.0), std::clamp(y0, 0.0, 1.0), std::clamp(x1, 0.0, 1.0),
                  std::clamp(y1, 0.0, 1.0)};
  if (out.width() < kMinAugmentedExtent || out.height() < kMinAugmentedExtent) return std::nullopt;
  return out;
}

FrameAnnotation with_box(const FrameAnnotation& truth, std::optional<BoundingBox> box) {
  FrameAnnotation out = truth;
  out.has_eardrum = box.has_value();
  out.box = box;
  return out;
}

}  // namespace

TrainingSample augment_for_training(const Image& frame, const FrameAnnotation& truth,
                                    int input_size, const DetectorTrainParams& params, Rng& rng) {
  const int s = input_size;
  const int r = std::max(s, static_cast<int>(std::lround(s * params.resize_ratio)));
  const Image resized =
      (frame.height() == r && frame.width() == r) ? frame : resize_bilinear(frame, r, r);
  const int ox = static_cast<int>(rng.below(static_cast<std::size_t>(r - s + 1)));
  const int oy = static_cast<int>(rng.below(static_cast<std::size_t>(r - s + 1)));
  Image crop(s, s);
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) crop.set_pixel(y, x, resized.pixel(y + oy, x + ox));
  }
  std::optional<BoundingBox> box;
  if (truth.has_eardrum) {
    const BoundingBox& b = *truth.box;
    BoundingBox moved{(b.x_min * r - ox) / s, (b.y_min * r - oy) / s, (b.x_max * r - ox) / s,
                      (b.y_max * r - oy) / s};
    moved = {std::clamp(moved.x_min, 0.0, 1.0), std::clamp(moved.y_min, 0.0, 1.0),
             std::clamp(moved.x_max, 0.0, 1.0), std::clamp(moved.y_max, 0.0, 1.0)};
    if (moved.width() >= kMinAugmentedExtent && moved.height() >= kMinAugmentedExtent) box = moved;
  }

  if (params.jitter_all) crop = shift::color_jitter(crop, params.jitter, rng);
  switch (rng.below(4)) {
    case 0:
      crop = shift::color_jitter(crop, params.jitter, rng);
      break;
    case 1: {
      const int side = static_cast<int>(std::lround(params.cutout_fraction * s));
      const int cx = static_cast<int>(rng.below(static_cast<std::size_t>(s)));
      const int cy = static_cast<int>(rng.below(static_cast<std::size_t>(s)));
      for (int y = std::max(0, cy - side / 2); y < std::min(s, cy - side / 2 + side); ++y) {
        for (int x = std::max(0, cx - side / 2); x < std::min(s, cx - side / 2 + side); ++x) {
          crop.set_pixel(y, x, {0.0f, 0.0f, 0.0f});
        }
      }
      break;
    }
    case 2: {
      const double a =
          rng.uniform(-params.max_rotation_degrees, params.max_rotation_degrees) *
          std::numbers::pi / 180.0;
      const double m[4] = {std::cos(a), -std::sin(a), std::sin(a), std::cos(a)};
      crop = warp_affine(crop, m);
      if (box) box = warp_box(*box, m, s);
      break;
    }
    default: {
      const double k = rng.uniform(-params.max_shear, params.max_shear);
      const double m[4] = {1.0, k, 0.0, 1.0};
      crop = warp_affine(crop, m);
      if (box) box = warp_box(*box, m, s);
      break;
    }
  }
  return {std::move(crop), with_box(truth, box)};
}

DetectorTrainResult train_detector(const std::vector<Image>& frames,
                                   const std::vector<FrameAnnotation>& truth, DetectorModel& model,
                                   const DetectorTrainParams& params, std::uint64_t seed) {
  params.validate();
  require(!frames.empty(), ErrorCategory::kData, "detector training set is empty");
  require(frames.size() == truth.size(), ErrorCategory::kInvalidArgument,
          "frames and annotations differ in length");
  DetectorTrainResult result;
  if (params.epochs == 0) return result;

  const int s = model.input_size();
  const int r = std::max(s, static_cast<int>(std::lround(s * params.resize_ratio)));
  const int base = params.augment ? r : s;
  std::vector<Image> prepared;
  prepared.reserve(frames.size());
  for (const auto& f : frames) prepared.push_back(resize_bilinear(f, base, base));

  Rng rng(derive_seed(seed, "detector.train"));
  nn::Sgd sgd(params.learning_rate, params.momentum, params.weight_decay);
  nn::Gradients grads(model.params().size());
  std::vector<std::size_t> order(prepared.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(params.batch_size)) {
      const std::size_t end = std::min(order.size(), start + params.batch_size);
      std::vector<Image> images;
      std::vector<FrameAnnotation> targets;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        if (params.augment) {
          auto sample = augment_for_training(prepared[i], truth[i], s, params, rng);
          images.push_back(std::move(sample.image));
          targets.push_back(std::move(sample.truth));
        } else {
          images.push_back(prepared[i]);
          targets.push_back(truth[i]);
        }
      }
      DetectorModel::Cache cache;
      const auto out = model.forward(nn::images_to_tensor(images), &cache);
      const DetectLoss loss = detect_loss(out.logits, out.boxes, targets);
      if (!std::isfinite(loss.total)) {
        fail(ErrorCategory::kNumerical,
             "detector training diverged at epoch " + std::to_string(epoch) + ", batch " +
                 std::to_string(batches) + " (cls " + std::to_string(loss.cls) + ", local " +
                 std::to_string(loss.local) + ")");
      }
      grads.zero();
      model.backward(cache, loss.grad_logits, loss.grad_boxes, grads);
      sgd.step(model.params(), grads, 0);
      loss_sum += loss.total;
      ++batches;
    }
    result.loss_curve.push_back(loss_sum / batches);
    result.epochs_run = epoch + 1;
    spdlog::debug("detector epoch {} loss {:.5f}", epoch, result.loss_curve.back());
  }
  return result;
}

DetectorTrainResult train_detector(const data::DatasetManifest& manifest,
                                   const data::FrameSourceFactory& sources, DetectorModel& model,
                                   const DetectorTrainParams& params, std::uint64_t seed) {
  std::vector<Image> frames;
  std::vector<FrameAnnotation> truth;
  for (const VideoRecord* rec : manifest.in_split(Split::kTrain)) {
    if (rec->label != Label::kNormal) continue;
    auto source = sources(*rec);
    for (const auto& a : rec->annotations) {
      frames.push_back(source->frame(a.frame_index));
      truth.push_back(a);
    }
  }
  require(!frames.empty(), ErrorCategory::kData, "train split has no annotated frames");
  return train_detector(frames, truth, model, params, seed);
}

std::vector<Detection> run_detector(const DetectorModel& model, std::span<const Image> frames) {
  constexpr std::size_t kChunk = 64;
  std::vector<Detection> out;
  out.reserve(frames.size());
  for (std::size_t start = 0; start < frames.size(); start += kChunk) {
    const std::size_t end = std::min(frames.size(), start + kChunk);
    const auto pred =
        model.forward(resize_batch(frames.subspan(start, end - start), model.input_size()), nullptr);
    for (Eigen::Index i = 0; i < pred.logits.rows(); ++i) {
      Detection d;
      d.score = sigmoid(pred.logits(i, 1) - pred.logits(i, 0));
      d.has_eardrum = d.score >= model.config().presence_cutoff;
      if (d.has_eardrum) {
        BoundingBox b{std::min(pred.boxes(i, 0), pred.boxes(i, 2)),
                      std::min(pred.boxes(i, 1), pred.boxes(i, 3)),
                      std::max(pred.boxes(i, 0), pred.boxes(i, 2)),
                      std::max(pred.boxes(i, 1), pred.boxes(i, 3))};
        if (b.width() < kMinPredictedExtent) {
          b.x_min = std::max(0.0, b.x_min - kMinPredictedExtent);
          b.x_max = std::min(1.0, b.x_max + kMinPredictedExtent);
        }
        if (b.height() < kMinPredictedExtent) {
          b.y_min = std::max(0.0, b.y_min - kMinPredictedExtent);
          b.y_max = std::min(1.0, b.y_max + kMinPredictedExtent);
        }
        d.box = b;
      }
      out.push_back(d);
    }
  }
  return out;
}

std::vector<AccuracyRow> eval_detection_accuracy(std::span<const Detection> detections,
                                                 std::span<const FrameAnnotation> truth,
                                                 std::span<const Label> labels,
                                                 std::span<const double> iou_thresholds) {
  require(detections.size() == truth.size() && truth.size() == labels.size(),
          ErrorCategory::kInvalidArgument, "detections, annotations and labels differ in length");
  require(!detections.empty(), ErrorCategory::kInvalidArgument, "no frames to evaluate");
  for (double t : iou_thresholds) {
    require(t > 0.0 && t < 1.0, ErrorCategory::kInvalidArgument,
            "IoU threshold must lie in (0, 1)");
  }
  std::vector<AccuracyRow> rows;
  for (double t : iou_thresholds) {
    int correct[2] = {0, 0}, total[2] = {0, 0};
    for (std::size_t i = 0; i < detections.size(); ++i) {
      const auto& d = detections[i];
      const auto& a = truth[i];
      bool ok = d.has_eardrum == a.has_eardrum;
      if (ok && a.has_eardrum) ok = d.box && iou(*d.box, *a.box) > t;
      const int l = static_cast<int>(labels[i]);
      ++total[l];
      correct[l] += ok ? 1 : 0;
    }
    for (Label l : kAllLabels) {
      const int k = static_cast<int>(l);
      if (total[k] == 0) continue;
      rows.push_back({std::string(to_string(l)), t, static_cast<double>(correct[k]) / total[k],
                      total[k]});
    }
    rows.push_back({"overall", t,
                    static_cast<double>(correct[0] + correct[1]) / (total[0] + total[1]),
                    total[0] + total[1]});
  }
  return rows;
}

void write_accuracy_csv(const std::vector<AccuracyRow>& rows, const std::filesystem::path& path,
                        std::string_view provenance) {
  std::string text;
  if (!provenance.empty()) text += "# " + std::string(provenance) + "\n";
  text += "label,iou_threshold,accuracy\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.2f,%.6f\n", r.label.c_str(), r.iou_threshold,
                  r.accuracy);
    text += buf;
  }
  io::write_text(path, text);
}

nlohmann::json to_json(const DetectorConfig& config) {
  return {{"input_size", config.backbone.input_size},
          {"stem_channels", config.backbone.stem_channels},
          {"stage_channels", config.backbone.stage_channels},
          {"hidden", config.hidden},
          {"presence_cutoff", config.presence_cutoff}};
}

DetectorConfig detector_config_from_json(const nlohmann::json& j) {
  DetectorConfig c;
  try {
    c.backbone.input_size = j.at("input_size").get<int>();
    c.backbone.stem_channels = j.at("stem_channels").get<int>();
    c.backbone.stage_channels = j.at("stage_channels").get<std::vector<int>>();
    c.hidden = j.at("hidden").get<int>();
    c.presence_cutoff = j.at("presence_cutoff").get<double>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::kData, std::string("detector config: ") + e.what());
  }
  return c;
}

void save_detector(const DetectorModel& model, const nlohmann::json& metadata,
                   const std::filesystem::path& path) {
  io::Checkpoint ck;
  ck.kind = "detector";
  ck.config = to_json(model.config());
  ck.params = model.params().values();
  ck.metadata = metadata;
  io::save_checkpoint(ck, path);
}

DetectorModel load_detector(const std::filesystem::path& path, nlohmann::json* metadata) {
  io::Checkpoint ck = io::load_checkpoint(path, "detector");
  DetectorModel model(detector_config_from_json(ck.config));
  require(ck.params.size() == model.params().size(), ErrorCategory::kData,
          path.string() + ": parameter count does not match its config");
  model.params().values() = std::move(ck.params);
  if (metadata) *metadata = ck.metadata;
  return model;
}

}  // namespace otoscad::detect
