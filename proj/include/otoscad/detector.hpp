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

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "otoscad/dataset.hpp"
#include "otoscad/nn.hpp"
#include "otoscad/shift.hpp"
#include "otoscad/types.hpp"

namespace otoscad::detect {

/// Single-instance detector: a residual backbone, then a two-layer head over
/// the flattened feature map producing 2 presence logits and 4 box values.
/// Box outputs pass through a sigmoid and are read as fractional corners
/// (x_min, y_min, x_max, y_max).
struct DetectorConfig {
  nn::BackboneConfig backbone{48, 8, {16, 32, 32}};
  int hidden = 64;
  double presence_cutoff = 0.5;

  bool operator==(const DetectorConfig&) const = default;
};

class DetectorModel {
 public:
  explicit DetectorModel(DetectorConfig config = {});

  void init(std::uint64_t seed);

  const DetectorConfig& config() const { return config_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  int input_size() const { return config_.backbone.input_size; }

  struct Cache {
    nn::Backbone::Cache backbone;
    nn::Tensor features, hidden, out;
  };

  /// logits: N x 2; boxes: N x 4 in [0, 1].
  struct Output {
    Eigen::MatrixXd logits;
    Eigen::MatrixXd boxes;
  };

  Output forward(const nn::Tensor& x, Cache* cache) const;
  /// Gradients with respect to the logits and (post-sigmoid) boxes.
  void backward(const Cache& cache, const Eigen::MatrixXd& grad_logits,
                const Eigen::MatrixXd& grad_boxes, nn::Gradients& grads) const;

 private:
  DetectorConfig config_;
  nn::ParamStore params_;
  nn::Backbone backbone_;
  nn::Linear fc1_, fc2_;
};

struct Detection {
  bool has_eardrum = false;
  double score = 0.0;  // presence probability
  std::optional<BoundingBox> box;
};

struct DetectLoss {
  double total = 0.0;
  double cls = 0.0;
  double local = 0.0;
  Eigen::MatrixXd grad_logits;
  Eigen::MatrixXd grad_boxes;
};

/// L_cls + L_local. L_cls: mean cross-entropy over frames (class 1 =
/// eardrum present). L_local: mean absolute corner error, averaged over the
/// 4 coordinates and then over frames whose truth has an eardrum (0 if none).
DetectLoss detect_loss(const Eigen::MatrixXd& logits, const Eigen::MatrixXd& boxes,
                       std::span<const FrameAnnotation> truth);

struct DetectorTrainParams {
  int epochs = 5000;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int batch_size = 128;
  /// Frames are resized to round(input_size * resize_ratio) before the random
  /// input_size crop (256 -> 224).
  double resize_ratio = 256.0 / 224.0;
  bool augment = true;
  shift::ColorJitterParams jitter;
  /// Color-jitter every sample before the randomly selected augmentation.
  bool jitter_all = false;
  double max_rotation_degrees = 15.0;
  double max_shear = 0.2;
  double cutout_fraction = 0.25;

  void validate() const;
  bool operator==(const DetectorTrainParams&) const = default;
};

struct TrainingSample {
  Image image;  // input_size x input_size
  FrameAnnotation truth;
};

/// Resize, random crop, optional color jitter, then one randomly selected
/// augmentation among color-jitter, cutout, rotation and shearing. Boxes
/// follow the crop and the geometric transform (bounding box of the
/// transformed inscribed ellipse, clipped).
TrainingSample augment_for_training(const Image& frame, const FrameAnnotation& truth,
                                    int input_size, const DetectorTrainParams& params, Rng& rng);

struct DetectorTrainResult {
  std::vector<double> loss_curve;  // mean loss per epoch
  int epochs_run = 0;
};

/// Trains on every annotated frame of the normal training videos.
DetectorTrainResult train_detector(const data::DatasetManifest& manifest,
                                   const data::FrameSourceFactory& sources, DetectorModel& model,
                                   const DetectorTrainParams& params, std::uint64_t seed);

/// Same, on frames already loaded in memory.
DetectorTrainResult train_detector(const std::vector<Image>& frames,
                                   const std::vector<FrameAnnotation>& truth, DetectorModel& model,
                                   const DetectorTrainParams& params, std::uint64_t seed);

/// One detection per frame, in order.
std::vector<Detection> run_detector(const DetectorModel& model, std::span<const Image> frames);

struct AccuracyRow {
  std::string label;  // "normal", "abnormal" or "overall"
  double iou_threshold = 0.0;
  double accuracy = 0.0;
  int frames = 0;
};

/// A frame is correct iff presence matches truth and, when truth has an
/// eardrum, iou(pred, truth) > threshold. Rows per threshold: normal,
/// abnormal (only when such frames exist), overall.
std::vector<AccuracyRow> eval_detection_accuracy(std::span<const Detection> detections,
                                                 std::span<const FrameAnnotation> truth,
                                                 std::span<const Label> labels,
                                                 std::span<const double> iou_thresholds);

/// Columns label, iou_threshold, accuracy. A non-empty provenance string is
/// written first as a '#' comment line.
void write_accuracy_csv(const std::vector<AccuracyRow>& rows, const std::filesystem::path& path,
                        std::string_view provenance = {});

// Checkpoints -----------------------------------------------------------------

nlohmann::json to_json(const DetectorConfig& config);
DetectorConfig detector_config_from_json(const nlohmann::json& j);

void save_detector(const DetectorModel& model, const nlohmann::json& metadata,
                   const std::filesystem::path& path);
DetectorModel load_detector(const std::filesystem::path& path, nlohmann::json* metadata = nullptr);

}  // namespace otoscad::detect
