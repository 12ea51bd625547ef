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


#include "otoscad/scad_train.hpp"

#include <cmath>
#include <cstdio>
#include <string>

#include <spdlog/spdlog.h>

#include "otoscad/error.hpp"
#include "otoscad/io.hpp"

namespace otoscad::scad {

EmbeddingModel::EmbeddingModel(EmbeddingConfig config)
    : config_(std::move(config)), backbone_(config_.backbone, params_, 0) {
  require(config_.embed_dim >= 0, ErrorCategory::kConfig, "embed_dim must be >= 0");
  if (config_.embed_dim > 0) {
    head_.emplace(params_, "head.proj", backbone_.out_channels(), config_.embed_dim,
                  backbone_.num_blocks());
  }
}

void EmbeddingModel::init(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "embedding.init"));
  backbone_.init(params_, rng);
  if (head_) head_->init(params_, rng);
}

int EmbeddingModel::dim() const {
  return head_ ? head_->out_features() : backbone_.out_channels();
}

int EmbeddingModel::num_blocks() const { return backbone_.num_blocks() + (head_ ? 1 : 0); }

int EmbeddingModel::first_trainable_block(int trainable) const {
  const int total = num_blocks();
  if (trainable <= 0 || trainable >= total) return 0;
  return total - trainable;
}

Embeddings EmbeddingModel::forward(const nn::Tensor& x, Cache* cache) const {
  Cache local;
  Cache& c = cache ? *cache : local;
  c.feature_map = backbone_.forward(params_, x, cache ? &c.backbone : nullptr);
  c.pooled = nn::global_avg_pool(c.feature_map);
  const nn::Tensor& f = head_ ? (c.projected = head_->forward(params_, c.pooled)) : c.pooled;
  const int d = dim();
  Embeddings out(x.n, d);
  c.norms.resize(x.n);
  for (int i = 0; i < x.n; ++i) {
    const float* row = f.sample(i);
    double sq = 0.0;
    for (int j = 0; j < d; ++j) sq += static_cast<double>(row[j]) * row[j];
    const double norm = std::sqrt(sq);
    require(std::isfinite(norm), ErrorCategory::kNumerical, "non-finite embedding activation");
    require(norm > 0.0, ErrorCategory::kNumerical, "embedding feature vector is exactly zero");
    c.norms[i] = norm;
    for (int j = 0; j < d; ++j) out(i, j) = row[j] / norm;
  }
  return out;
}

void EmbeddingModel::backward(const Cache& cache, const Embeddings& output, const Embeddings& grad,
                              nn::Gradients& grads, int stop_block) const {
  const auto n = static_cast<int>(output.rows());
  const int d = dim();
  nn::Tensor gf(n, d, 1, 1);
  for (int i = 0; i < n; ++i) {
    const double dot = output.row(i).dot(grad.row(i));
    float* g = gf.sample(i);
    for (int j = 0; j < d; ++j) {
      g[j] = static_cast<float>((grad(i, j) - output(i, j) * dot) / cache.norms[i]);
    }
  }
  nn::Tensor gp = std::move(gf);
  if (head_) {
    const int head_block = backbone_.num_blocks();
    if (head_block < stop_block) return;
    gp = head_->backward(params_, cache.pooled, gp, grads, head_block > stop_block);
    if (head_block == stop_block) return;
  }
  const auto& fm = cache.feature_map;
  nn::Tensor gmap = nn::global_avg_pool_backward(gp, fm.h, fm.w);
  backbone_.backward(params_, cache.backbone, gmap, grads, stop_block);
}

namespace {

nn::Tensor to_input(const EmbeddingModel& model, std::span<const Image> patches) {
  const int s = model.input_size();
  bool native = true;
  for (const auto& p : patches) native = native && p.height() == s && p.width() == s;
  if (native) return nn::images_to_tensor(patches);
  std::vector<Image> resized;
  resized.reserve(patches.size());
  for (const auto& p : patches) resized.push_back(resize_bilinear(p, s, s));
  return nn::images_to_tensor(resized);
}

}  // namespace

Embeddings embed(const EmbeddingModel& model, std::span<const Image> patches) {
  constexpr std::size_t kChunk = 128;
  Embeddings out(static_cast<Eigen::Index>(patches.size()), model.dim());
  for (std::size_t start = 0; start < patches.size(); start += kChunk) {
    const std::size_t end = std::min(patches.size(), start + kChunk);
    const Embeddings part = model.forward(to_input(model, patches.subspan(start, end - start)),
                                          nullptr);
    out.middleRows(static_cast<Eigen::Index>(start), part.rows()) = part;
  }
  return out;
}

std::string parameter_hash(const nn::ParamStore& params) {
  const auto& v = params.values();
  return io::hex64(fnv1a64(std::string_view(reinterpret_cast<const char*>(v.data()),
                                            v.size() * sizeof(float))));
}

std::string patch_set_hash(const std::vector<data::VideoPatches>& patches) {
  std::uint64_t h = fnv1a64("patches");
  for (const auto& video : patches) {
    h = fnv1a64(video.video_id, h);
    for (const auto& p : video.patches) {
      h = fnv1a64(std::to_string(p.frame_index), h);
      const auto data = p.pixels.data();
      h = fnv1a64(std::string_view(reinterpret_cast<const char*>(data.data()),
                                   data.size() * sizeof(float)),
                  h);
    }
  }
  return io::hex64(h);
}

namespace {

std::vector<Image> all_pixels(const std::vector<data::VideoPatches>& patches) {
  std::vector<Image> out;
  for (const auto& v : patches) {
    for (const auto& p : v.patches) out.push_back(p.pixels);
  }
  return out;
}

}  // namespace

Center compute_center(const EmbeddingModel& model, const std::vector<data::VideoPatches>& patches) {
  const auto pixels = all_pixels(patches);
  require(!pixels.empty(), ErrorCategory::kInvalidArgument, "center needs training patches");
  return {center_of(embed(model, pixels)), parameter_hash(model.params()),
          patch_set_hash(patches)};
}

void ScadTrainParams::validate() const {
  require(epochs >= 0, ErrorCategory::kConfig, "SCAD epochs must be >= 0");
  require(learning_rate > 0, ErrorCategory::kConfig, "SCAD learning rate must be positive");
  require(momentum >= 0 && momentum < 1, ErrorCategory::kConfig, "momentum must lie in [0, 1)");
  require(weight_decay >= 0, ErrorCategory::kConfig, "weight decay must be >= 0");
  require(batch_size >= 1, ErrorCategory::kConfig, "SCAD batch size must be >= 1");
  require(temperature > 0, ErrorCategory::kConfig, "temperature must be positive");
  require(trainable_blocks >= 0, ErrorCategory::kConfig, "trainable_blocks must be >= 0");
  require(center_refresh >= 0, ErrorCategory::kConfig, "center_refresh must be >= 0");
  augment.validate();
}

ScadTrainResult train_scad(const std::vector<data::VideoPatches>& patches, EmbeddingModel& model,
                           const ScadTrainParams& params,
                           const std::optional<shift::ShiftVariant>& variant, std::uint64_t seed,
                           const std::function<void(const EpochLog&)>& on_epoch) {
  params.validate();
  const bool shifted = uses_shifted(params.objective);
  require(!shifted || variant.has_value(), ErrorCategory::kConfig,
          std::string("objective ") + std::string(to_string(params.objective)) +
              " needs a shift variant");
  if (variant) variant->validate();
  require(params.augment.crop_size == model.input_size(), ErrorCategory::kConfig,
          "crop size " + std::to_string(params.augment.crop_size) +
              " differs from the embedding input size " + std::to_string(model.input_size()));

  data::TrainingPatchSampler sampler(patches, params.batch_size, derive_seed(seed, "scad.sampler"));
  ScadTrainResult result;
  result.center = compute_center(model, patches);
  if (params.epochs == 0) return result;

  const int first_block = model.first_trainable_block(params.trainable_blocks);
  nn::Sgd sgd(params.learning_rate, params.momentum, params.weight_decay);
  nn::Gradients grads(model.params().size());
  const std::uint64_t aug_seed = derive_seed(seed, "scad.augment");

  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    Rng rng(derive_seed(aug_seed, static_cast<std::uint64_t>(epoch)));
    EpochLog log{epoch, 0.0, 0.0, 0.0, 0.0};
    const auto batches = sampler.epoch(epoch);
    int batch_index = 0;
    for (const auto& batch : batches) {
      const auto n = batch.size();
      std::vector<Image> first, second, shifted_views;
      for (const auto& p : batch.patches) {
        auto [v1, v2] = shift::positive_pair_augment(p.pixels, params.augment, rng);
        if (shifted) {
          Image source = params.shift_after_augment
                             ? (rng.bernoulli(0.5) ? v1 : v2)
                             : resize_bilinear(p.pixels, params.augment.crop_size,
                                               params.augment.crop_size);
          shifted_views.push_back(shift::apply_shift(source, *variant, rng));
        }
        first.push_back(std::move(v1));
        second.push_back(std::move(v2));
      }
      std::vector<Image> inputs = std::move(first);
      inputs.insert(inputs.end(), second.begin(), second.end());
      inputs.insert(inputs.end(), shifted_views.begin(), shifted_views.end());

      EmbeddingModel::Cache cache;
      const Embeddings e = model.forward(nn::images_to_tensor(inputs), &cache);
      const auto views_rows = static_cast<Eigen::Index>(2 * n);
      const ObjectiveValue value =
          evaluate_objective(params.objective, e.topRows(views_rows),
                             e.bottomRows(e.rows() - views_rows), result.center.c,
                             params.temperature);
      if (!std::isfinite(value.total)) {
        fail(ErrorCategory::kNumerical,
             "SCAD training diverged at epoch " + std::to_string(epoch) + ", batch " +
                 std::to_string(batch_index) + ": msc " + std::to_string(value.msc) +
                 ", angular " + std::to_string(value.angular) + ", hinge " +
                 std::to_string(value.hinge));
      }
      grads.zero();
      model.backward(cache, e, value.grad, grads, first_block);
      sgd.step(model.params(), grads, first_block);
      log.msc += value.msc;
      log.hinge += value.hinge;
      log.angular += value.angular;
      log.total += value.total;
      ++batch_index;
    }
    if (batch_index > 0) {
      log.msc /= batch_index;
      log.hinge /= batch_index;
      log.angular /= batch_index;
      log.total /= batch_index;
    }
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
    if (params.center_refresh > 0 && (epoch + 1) % params.center_refresh == 0) {
      result.center = compute_center(model, patches);
    }
  }
  return result;
}

void write_train_log(const std::vector<EpochLog>& log, const std::filesystem::path& path,
                     std::string_view provenance) {
  std::string text;
  if (!provenance.empty()) text += "# " + std::string(provenance) + "\n";
  text += "epoch,l_msc,hinge,angular,total\n";
  char buf[160];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g\n", e.epoch, e.msc, e.hinge, e.angular,
                  e.total);
    text += buf;
  }
  io::write_text(path, text);
}

nlohmann::json to_json(const EmbeddingConfig& config) {
  return {{"input_size", config.backbone.input_size},
          {"stem_channels", config.backbone.stem_channels},
          {"stage_channels", config.backbone.stage_channels},
          {"embed_dim", config.embed_dim}};
}

EmbeddingConfig embedding_config_from_json(const nlohmann::json& j) {
  EmbeddingConfig c;
  try {
    c.backbone.input_size = j.at("input_size").get<int>();
    c.backbone.stem_channels = j.at("stem_channels").get<int>();
    c.backbone.stage_channels = j.at("stage_channels").get<std::vector<int>>();
    c.embed_dim = j.at("embed_dim").get<int>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::kData, std::string("embedding config: ") + e.what());
  }
  return c;
}

void save_embedding(const EmbeddingModel& model, const Center& center,
                    const nlohmann::json& metadata, const std::filesystem::path& path) {
  io::Checkpoint ck;
  ck.kind = "embedding";
  ck.config = to_json(model.config());
  ck.params = model.params().values();
  ck.metadata = metadata;
  ck.extra["center"] = std::vector<double>(center.c.data(), center.c.data() + center.c.size());
  ck.extra["center_model"] = center.model_id;
  ck.extra["center_dataset"] = center.dataset_hash;
  io::save_checkpoint(ck, path);
}

LoadedEmbedding load_embedding(const std::filesystem::path& path) {
  io::Checkpoint ck = io::load_checkpoint(path, "embedding");
  EmbeddingModel model(embedding_config_from_json(ck.config));
  require(ck.params.size() == model.params().size(), ErrorCategory::kData,
          path.string() + ": parameter count does not match its config");
  model.params().values() = std::move(ck.params);
  Center center;
  try {
    const auto c = ck.extra.at("center").get<std::vector<double>>();
    center.c = Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
    center.model_id = ck.extra.at("center_model").get<std::string>();
    center.dataset_hash = ck.extra.at("center_dataset").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::kData, path.string() + ": " + e.what());
  }
  require(center.c.size() == model.dim(), ErrorCategory::kData,
          path.string() + ": center dimension does not match the model");
  return {std::move(model), std::move(center), std::move(ck.metadata)};
}

}  // namespace otoscad::scad
