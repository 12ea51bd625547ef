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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "otoscad/dataset.hpp"
#include "otoscad/nn.hpp"
#include "otoscad/scad_losses.hpp"
#include "otoscad/shift.hpp"

namespace otoscad::scad {

/// Backbone, global average pooling, an optional linear projection, then
/// l2 normalization onto the unit sphere.
struct EmbeddingConfig {
  nn::BackboneConfig backbone{32, 16, {32, 64}};
  int embed_dim = 0;  // 0: no projection, d = last stage width

  bool operator==(const EmbeddingConfig&) const = default;
};

class EmbeddingModel {
 public:
  explicit EmbeddingModel(EmbeddingConfig config = {});

  void init(std::uint64_t seed);

  const EmbeddingConfig& config() const { return config_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  int input_size() const { return config_.backbone.input_size; }
  int dim() const;
  int num_blocks() const;
  /// First block index updated when fine-tuning the last `trainable` blocks;
  /// 0 (or more than num_blocks) trains everything.
  int first_trainable_block(int trainable) const;

  struct Cache {
    nn::Backbone::Cache backbone;
    nn::Tensor feature_map, pooled, projected;
    Eigen::VectorXd norms;
  };

  /// Unit-norm rows, one per input sample.
  Embeddings forward(const nn::Tensor& x, Cache* cache) const;
  /// Backpropagates a gradient on the normalized embeddings into every block
  /// with index >= stop_block.
  void backward(const Cache& cache, const Embeddings& output, const Embeddings& grad,
                nn::Gradients& grads, int stop_block) const;

 private:
  EmbeddingConfig config_;
  nn::ParamStore params_;
  nn::Backbone backbone_;
  std::optional<nn::Linear> head_;
};

/// Embeds patches in inference mode (patches are resized to the input size
/// when needed). Throws kNumerical on non-finite activations.
Embeddings embed(const EmbeddingModel& model, std::span<const Image> patches);

/// The training-set center c and what it was computed from.
struct Center {
  Eigen::VectorXd c;
  std::string model_id;      // hash of the parameters used
  std::string dataset_hash;  // hash of the patch set

  bool operator==(const Center&) const = default;
};

/// normalize(mean of the embeddings of every patch).
Center compute_center(const EmbeddingModel& model, const std::vector<data::VideoPatches>& patches);

std::string parameter_hash(const nn::ParamStore& params);
std::string patch_set_hash(const std::vector<data::VideoPatches>& patches);

struct ScadTrainParams {
  Objective objective = Objective::kMscShiftAngular;
  int epochs = 5000;
  double learning_rate = 1e-5;
  double momentum = 0.0;
  double weight_decay = 5e-5;
  int batch_size = 60;
  double temperature = 0.25;
  int trainable_blocks = 2;
  shift::PairAugmentParams augment;
  /// Shift-transform one of the two augmented views (true) or the plain
  /// patch resized to the crop size (false).
  bool shift_after_augment = true;
  /// 0 keeps the center frozen; n > 0 recomputes it every n epochs.
  int center_refresh = 0;

  void validate() const;
  bool operator==(const ScadTrainParams&) const = default;
};

struct EpochLog {
  int epoch = 0;
  double msc = 0.0;
  double hinge = 0.0;
  double angular = 0.0;
  double total = 0.0;
};

struct ScadTrainResult {
  Center center;
  std::vector<EpochLog> log;
};

/// Trains on the given groundtruth patches. `variant` supplies the shift
/// transform for objectives that consume shifted samples; it is required for
/// those and ignored otherwise.
ScadTrainResult train_scad(const std::vector<data::VideoPatches>& patches, EmbeddingModel& model,
                           const ScadTrainParams& params,
                           const std::optional<shift::ShiftVariant>& variant, std::uint64_t seed,
                           const std::function<void(const EpochLog&)>& on_epoch = {});

void write_train_log(const std::vector<EpochLog>& log, const std::filesystem::path& path,
                     std::string_view provenance = {});

nlohmann::json to_json(const EmbeddingConfig& config);
EmbeddingConfig embedding_config_from_json(const nlohmann::json& j);

void save_embedding(const EmbeddingModel& model, const Center& center,
                    const nlohmann::json& metadata, const std::filesystem::path& path);
struct LoadedEmbedding {
  EmbeddingModel model;
  Center center;
  nlohmann::json metadata;
};
LoadedEmbedding load_embedding(const std::filesystem::path& path);

}  // namespace otoscad::scad
