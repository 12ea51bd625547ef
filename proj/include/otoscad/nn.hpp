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

// Minimal CPU convolutional network engine: NCHW float tensors, explicit
// forward caches and hand-written backward passes. Parameters for a model
// live in one flat buffer so optimizers, checkpoints and gradient checks
// operate on a single vector.

#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "otoscad/image.hpp"
#include "otoscad/rng.hpp"

namespace otoscad::nn {

struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, float fill = 0.0f)
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t sample_size() const { return static_cast<std::size_t>(c) * h * w; }
  float* sample(int i) { return data.data() + i * sample_size(); }
  const float* sample(int i) const { return data.data() + i * sample_size(); }
  float& at(int i, int ch, int y, int x) {
    return data[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x];
  }
  float at(int i, int ch, int y, int x) const {
    return data[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x];
  }
};

/// Packs HWC images of equal size into an N x 3 x H x W tensor.
Tensor images_to_tensor(std::span<const Image> images);

/// Location of one parameter tensor inside the flat buffer.
struct ParamRef {
  std::size_t offset = 0;
  std::size_t size = 0;
};

struct ParamEntry {
  std::string name;
  ParamRef ref;
  int block = 0;  // trainability group
};

class ParamStore {
 public:
  ParamRef add(std::string name, std::size_t size, int block);

  std::span<float> view(ParamRef r) { return {values_.data() + r.offset, r.size}; }
  std::span<const float> view(ParamRef r) const { return {values_.data() + r.offset, r.size}; }
  const float* ptr(ParamRef r) const { return values_.data() + r.offset; }

  std::vector<float>& values() { return values_; }
  const std::vector<float>& values() const { return values_; }
  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::size_t size() const { return values_.size(); }

 private:
  std::vector<float> values_;
  std::vector<ParamEntry> entries_;
};

/// Gradient buffer aligned with a ParamStore.
struct Gradients {
  std::vector<float> values;
  explicit Gradients(std::size_t size = 0) : values(size, 0.0f) {}
  float* ptr(ParamRef r) { return values.data() + r.offset; }
  void zero() { std::fill(values.begin(), values.end(), 0.0f); }
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamStore& store, const std::string& name, int in_channels, int out_channels, int kernel,
         int stride, int padding, int block);

  void init(ParamStore& store, Rng& rng, float gain = 1.0f) const;
  int out_size(int in) const { return (in + 2 * padding_ - kernel_) / stride_ + 1; }
  int out_channels() const { return out_channels_; }

  Tensor forward(const ParamStore& store, const Tensor& x) const;
  /// Accumulates parameter gradients; returns dL/dx when need_input_grad.
  Tensor backward(const ParamStore& store, const Tensor& x, const Tensor& grad_out, Gradients& grads,
                  bool need_input_grad) const;

 private:
  void im2col(const float* x, int h, int w, float* cols) const;
  void col2im(const float* cols, int h, int w, float* x) const;

  int in_channels_ = 0, out_channels_ = 0, kernel_ = 1, stride_ = 1, padding_ = 0;
  ParamRef weight_, bias_;
};

class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, int in_features, int out_features, int block);

  void init(ParamStore& store, Rng& rng, float gain = 1.0f) const;
  int in_features() const { return in_; }
  int out_features() const { return out_; }

  /// x is treated as N rows of in_features values.
  Tensor forward(const ParamStore& store, const Tensor& x) const;
  Tensor backward(const ParamStore& store, const Tensor& x, const Tensor& grad_out, Gradients& grads,
                  bool need_input_grad) const;

 private:
  int in_ = 0, out_ = 0;
  ParamRef weight_, bias_;
};

Tensor relu(const Tensor& x);
/// grad * (y > 0), with y the ReLU output.
Tensor relu_backward(const Tensor& y, const Tensor& grad);
Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Tensor& grad, int h, int w);

/// Residual network layout: a 3x3 stem followed by one basic residual block
/// per stage, each halving the resolution.
struct BackboneConfig {
  int input_size = 32;
  int stem_channels = 8;
  std::vector<int> stage_channels{16, 32};

  bool operator==(const BackboneConfig&) const = default;
};

class Backbone {
 public:
  Backbone() = default;
  /// Blocks are numbered from first_block: stem, then one per stage.
  Backbone(const BackboneConfig& config, ParamStore& store, int first_block = 0);

  void init(ParamStore& store, Rng& rng) const;

  int num_blocks() const { return 1 + static_cast<int>(stages_.size()); }
  int out_channels() const;
  int out_size() const;
  const BackboneConfig& config() const { return config_; }

  struct StageCache {
    Tensor x, h1, y;
  };
  struct Cache {
    Tensor input, stem;
    std::vector<StageCache> stages;
  };

  Tensor forward(const ParamStore& store, const Tensor& x, Cache* cache) const;
  /// Backpropagates into every block whose (global) index is >= stop_block.
  void backward(const ParamStore& store, const Cache& cache, const Tensor& grad_out,
                Gradients& grads, int stop_block) const;

 private:
  struct Stage {
    Conv2d conv1, conv2, shortcut;
  };

  BackboneConfig config_;
  int first_block_ = 0;
  Conv2d stem_;
  std::vector<Stage> stages_;
};

/// Copies every backbone tensor (names starting with "stem" or "stage") from
/// `from` into the same-named tensor of `to`. Throws kConfig when a tensor is
/// missing or differs in size; returns the number of tensors copied.
std::size_t copy_backbone_params(const ParamStore& from, ParamStore& to);

/// Plain stochastic gradient descent with optional momentum and coupled
/// weight decay (decay is added to the gradient before the momentum buffer).
class Sgd {
 public:
  Sgd(double learning_rate, double momentum, double weight_decay)
      : lr_(learning_rate), momentum_(momentum), weight_decay_(weight_decay) {}

  /// Updates only entries whose block is >= first_trainable_block.
  void step(ParamStore& store, const Gradients& grads, int first_trainable_block);

 private:
  double lr_, momentum_, weight_decay_;
  std::vector<float> velocity_;
};

}  // namespace otoscad::nn
