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

#include "otoscad/nn.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "otoscad/error.hpp"

namespace otoscad::nn {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using VectorMap = Eigen::Map<Eigen::VectorXf>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXf>;
using ColMap = Eigen::Map<Eigen::MatrixXf>;
using ConstColMap = Eigen::Map<const Eigen::MatrixXf>;

}  // namespace

Tensor images_to_tensor(std::span<const Image> images) {
  require(!images.empty(), ErrorCategory::kInvalidArgument, "empty image batch");
  const int h = images[0].height();
  const int w = images[0].width();
  Tensor t(static_cast<int>(images.size()), 3, h, w);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Image& img = images[i];
    require(img.height() == h && img.width() == w, ErrorCategory::kInvalidArgument,
            "images in a batch must share spatial dimensions");
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) t.at(static_cast<int>(i), c, y, x) = img.at(y, x, c);
      }
    }
  }
  return t;
}

ParamRef ParamStore::add(std::string name, std::size_t size, int block) {
  ParamRef ref{values_.size(), size};
  values_.resize(values_.size() + size, 0.0f);
  entries_.push_back({std::move(name), ref, block});
  return ref;
}

std::size_t copy_backbone_params(const ParamStore& from, ParamStore& to) {
  auto is_backbone = [](const std::string& name) {
    return name.starts_with("stem") || name.starts_with("stage");
  };
  std::size_t copied = 0;
  for (const auto& dst : to.entries()) {
    if (!is_backbone(dst.name)) continue;
    const auto src = std::find_if(from.entries().begin(), from.entries().end(),
                                  [&](const ParamEntry& e) { return e.name == dst.name; });
    require(src != from.entries().end(), ErrorCategory::kConfig,
            "backbone tensor '" + dst.name + "' missing from the source model");
    require(src->ref.size == dst.ref.size, ErrorCategory::kConfig,
            "backbone tensor '" + dst.name + "' differs in size from the source model");
    const auto values = from.view(src->ref);
    std::copy(values.begin(), values.end(), to.view(dst.ref).begin());
    ++copied;
  }
  return copied;
}

// ---------------------------------------------------------------------------

Conv2d::Conv2d(ParamStore& store, const std::string& name, int in_channels, int out_channels,
               int kernel, int stride, int padding, int block)
    : in_channels_(in_channels),
      out_channels_(out_channels),
      kernel_(kernel),
      stride_(stride),
      padding_(padding) {
  weight_ = store.add(name + ".weight",
                      static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel, block);
  bias_ = store.add(name + ".bias", static_cast<std::size_t>(out_channels), block);
}

void Conv2d::init(ParamStore& store, Rng& rng, float gain) const {
  const double fan_in = static_cast<double>(in_channels_) * kernel_ * kernel_;
  const double stddev = gain * std::sqrt(2.0 / fan_in);
  for (float& v : store.view(weight_)) v = static_cast<float>(rng.normal(0.0, stddev));
  for (float& v : store.view(bias_)) v = 0.0f;
}

namespace {

// Output columns [lo, hi) read input columns inside [0, w) for kernel tap kx.
void valid_range(int wo, int w, int stride, int offset, int& lo, int& hi) {
  lo = 0;
  while (lo < wo && lo * stride + offset < 0) ++lo;
  hi = wo;
  while (hi > lo && (hi - 1) * stride + offset >= w) --hi;
}

}  // namespace

void Conv2d::im2col(const float* x, int h, int w, float* cols) const {
  const int ho = out_size(h);
  const int wo = out_size(w);
  const int plane = ho * wo;
  for (int c = 0; c < in_channels_; ++c) {
    for (int ky = 0; ky < kernel_; ++ky) {
      for (int kx = 0; kx < kernel_; ++kx) {
        float* row = cols + static_cast<std::size_t>((c * kernel_ + ky) * kernel_ + kx) * plane;
        const int offset = kx - padding_;
        int lo, hi;
        valid_range(wo, w, stride_, offset, lo, hi);
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride_ - padding_ + ky;
          float* out = row + oy * wo;
          if (iy < 0 || iy >= h) {
            std::fill(out, out + wo, 0.0f);
            continue;
          }
          const float* in = x + (static_cast<std::size_t>(c) * h + iy) * w + offset;
          std::fill(out, out + lo, 0.0f);
          if (stride_ == 1) {
            std::copy(in + lo, in + hi, out + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) out[ox] = in[ox * stride_];
          }
          std::fill(out + hi, out + wo, 0.0f);
        }
      }
    }
  }
}

void Conv2d::col2im(const float* cols, int h, int w, float* x) const {
  const int ho = out_size(h);
  const int wo = out_size(w);
  const int plane = ho * wo;
  for (int c = 0; c < in_channels_; ++c) {
    for (int ky = 0; ky < kernel_; ++ky) {
      for (int kx = 0; kx < kernel_; ++kx) {
        const float* row = cols + static_cast<std::size_t>((c * kernel_ + ky) * kernel_ + kx) * plane;
        const int offset = kx - padding_;
        int lo, hi;
        valid_range(wo, w, stride_, offset, lo, hi);
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride_ - padding_ + ky;
          if (iy < 0 || iy >= h) continue;
          float* out = x + (static_cast<std::size_t>(c) * h + iy) * w + offset;
          const float* in = row + oy * wo;
          for (int ox = lo; ox < hi; ++ox) out[ox * stride_] += in[ox];
        }
      }
    }
  }
}

// With column-major views the per-sample buffers read as
//   cols: plane x k,  weight: k x out (transposed),  output: plane x out,
// so each product runs with the long pixel dimension as rows.
Tensor Conv2d::forward(const ParamStore& store, const Tensor& x) const {
  require(x.c == in_channels_, ErrorCategory::kInvalidArgument, "conv: channel mismatch");
  const int ho = out_size(x.h);
  const int wo = out_size(x.w);
  const int k = in_channels_ * kernel_ * kernel_;
  const int plane = ho * wo;
  Tensor y(x.n, out_channels_, ho, wo);
  std::vector<float> cols(static_cast<std::size_t>(k) * plane);
  ConstColMap weight_t(store.ptr(weight_), k, out_channels_);
  ConstVectorMap bias(store.ptr(bias_), out_channels_);
  for (int i = 0; i < x.n; ++i) {
    im2col(x.sample(i), x.h, x.w, cols.data());
    ColMap out(y.sample(i), plane, out_channels_);
    out.noalias() = ConstColMap(cols.data(), plane, k) * weight_t;
    out.rowwise() += bias.transpose();
  }
  return y;
}

Tensor Conv2d::backward(const ParamStore& store, const Tensor& x, const Tensor& grad_out,
                        Gradients& grads, bool need_input_grad) const {
  const int ho = grad_out.h;
  const int wo = grad_out.w;
  const int k = in_channels_ * kernel_ * kernel_;
  const int plane = ho * wo;
  std::vector<float> cols(static_cast<std::size_t>(k) * plane);
  std::vector<float> grad_cols(need_input_grad ? cols.size() : 0);
  ConstColMap weight_t(store.ptr(weight_), k, out_channels_);
  ColMap grad_weight_t(grads.ptr(weight_), k, out_channels_);
  VectorMap grad_bias(grads.ptr(bias_), out_channels_);
  Tensor grad_in;
  if (need_input_grad) grad_in = Tensor(x.n, x.c, x.h, x.w);
  for (int i = 0; i < x.n; ++i) {
    ConstColMap g(grad_out.sample(i), plane, out_channels_);
    im2col(x.sample(i), x.h, x.w, cols.data());
    grad_weight_t.noalias() += ConstColMap(cols.data(), plane, k).transpose() * g;
    // Plain loop: Eigen's vectorized reductions over unaligned maps sum in an
    // address-dependent order, which breaks run-to-run reproducibility.
    for (int o = 0; o < out_channels_; ++o) {
      const float* col = grad_out.sample(i) + static_cast<std::size_t>(o) * plane;
      float sum = 0.0f;
      for (int p = 0; p < plane; ++p) sum += col[p];
      grad_bias[o] += sum;
    }
    if (need_input_grad) {
      ColMap gc(grad_cols.data(), plane, k);
      gc.noalias() = g * weight_t.transpose();
      col2im(grad_cols.data(), x.h, x.w, grad_in.sample(i));
    }
  }
  return grad_in;
}

// ---------------------------------------------------------------------------

Linear::Linear(ParamStore& store, const std::string& name, int in_features, int out_features,
               int block)
    : in_(in_features), out_(out_features) {
  weight_ = store.add(name + ".weight", static_cast<std::size_t>(out_features) * in_features, block);
  bias_ = store.add(name + ".bias", static_cast<std::size_t>(out_features), block);
}

void Linear::init(ParamStore& store, Rng& rng, float gain) const {
  const double stddev = gain / std::sqrt(static_cast<double>(in_));
  for (float& v : store.view(weight_)) v = static_cast<float>(rng.normal(0.0, stddev));
  for (float& v : store.view(bias_)) v = 0.0f;
}

Tensor Linear::forward(const ParamStore& store, const Tensor& x) const {
  require(static_cast<int>(x.sample_size()) == in_, ErrorCategory::kInvalidArgument,
          "linear: feature size mismatch");
  Tensor y(x.n, out_, 1, 1);
  ConstMatrixMap in(x.data.data(), x.n, in_);
  ConstMatrixMap weight(store.ptr(weight_), out_, in_);
  MatrixMap out(y.data.data(), x.n, out_);
  out.noalias() = in * weight.transpose();
  out.rowwise() += ConstVectorMap(store.ptr(bias_), out_).transpose();
  return y;
}

Tensor Linear::backward(const ParamStore& store, const Tensor& x, const Tensor& grad_out,
                        Gradients& grads, bool need_input_grad) const {
  ConstMatrixMap in(x.data.data(), x.n, in_);
  ConstMatrixMap g(grad_out.data.data(), x.n, out_);
  MatrixMap grad_weight(grads.ptr(weight_), out_, in_);
  grad_weight.noalias() += g.transpose() * in;
  float* grad_bias = grads.ptr(bias_);
  for (int i = 0; i < x.n; ++i) {
    const float* row = grad_out.sample(i);
    for (int o = 0; o < out_; ++o) grad_bias[o] += row[o];
  }
  Tensor grad_in;
  if (need_input_grad) {
    grad_in = Tensor(x.n, x.c, x.h, x.w);
    MatrixMap gi(grad_in.data.data(), x.n, in_);
    gi.noalias() = g * ConstMatrixMap(store.ptr(weight_), out_, in_);
  }
  return grad_in;
}

// ---------------------------------------------------------------------------

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (float& v : y.data) v = v > 0.0f ? v : 0.0f;
  return y;
}

Tensor relu_backward(const Tensor& y, const Tensor& grad) {
  Tensor g = grad;
  for (std::size_t i = 0; i < g.data.size(); ++i) {
    if (!(y.data[i] > 0.0f)) g.data[i] = 0.0f;
  }
  return g;
}

Tensor global_avg_pool(const Tensor& x) {
  Tensor y(x.n, x.c, 1, 1);
  const int plane = x.h * x.w;
  for (int i = 0; i < x.n; ++i) {
    for (int c = 0; c < x.c; ++c) {
      const float* p = x.sample(i) + static_cast<std::size_t>(c) * plane;
      double sum = 0.0;
      for (int j = 0; j < plane; ++j) sum += p[j];
      y.at(i, c, 0, 0) = static_cast<float>(sum / plane);
    }
  }
  return y;
}

Tensor global_avg_pool_backward(const Tensor& grad, int h, int w) {
  Tensor g(grad.n, grad.c, h, w);
  const int plane = h * w;
  const float scale = 1.0f / static_cast<float>(plane);
  for (int i = 0; i < grad.n; ++i) {
    for (int c = 0; c < grad.c; ++c) {
      float* p = g.sample(i) + static_cast<std::size_t>(c) * plane;
      std::fill(p, p + plane, grad.at(i, c, 0, 0) * scale);
    }
  }
  return g;
}

namespace {

void add_inplace(Tensor& a, const Tensor& b) {
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

}  // namespace

// ---------------------------------------------------------------------------

Backbone::Backbone(const BackboneConfig& config, ParamStore& store, int first_block)
    : config_(config) {
  require(config.input_size >= 4 && config.stem_channels > 0 && !config.stage_channels.empty(),
          ErrorCategory::kConfig, "invalid backbone configuration");
  stem_ = Conv2d(store, "stem", 3, config.stem_channels, 3, 1, 1, first_block);
  int in = config.stem_channels;
  for (std::size_t s = 0; s < config.stage_channels.size(); ++s) {
    const int out = config.stage_channels[s];
    const int block = first_block + 1 + static_cast<int>(s);
    const std::string prefix = "stage" + std::to_string(s + 1);
    stages_.push_back({Conv2d(store, prefix + ".conv1", in, out, 3, 2, 1, block),
                       Conv2d(store, prefix + ".conv2", out, out, 3, 1, 1, block),
                       Conv2d(store, prefix + ".shortcut", in, out, 1, 2, 0, block)});
    in = out;
  }
  first_block_ = first_block;
}

void Backbone::init(ParamStore& store, Rng& rng) const {
  stem_.init(store, rng);
  for (const auto& st : stages_) {
    st.conv1.init(store, rng);
    st.conv2.init(store, rng, 0.5f);
    st.shortcut.init(store, rng, 0.5f);
  }
}

int Backbone::out_channels() const { return config_.stage_channels.back(); }

int Backbone::out_size() const {
  int size = config_.input_size;
  for (const auto& st : stages_) size = st.conv1.out_size(size);
  return size;
}

Tensor Backbone::forward(const ParamStore& store, const Tensor& x, Cache* cache) const {
  require(x.h == config_.input_size && x.w == config_.input_size, ErrorCategory::kInvalidArgument,
          "backbone: expected " + std::to_string(config_.input_size) + "px input, got " +
              std::to_string(x.h) + "x" + std::to_string(x.w));
  Tensor h = relu(stem_.forward(store, x));
  if (cache) {
    cache->input = x;
    cache->stem = h;
    cache->stages.clear();
  }
  for (const auto& st : stages_) {
    Tensor h1 = relu(st.conv1.forward(store, h));
    Tensor y = st.conv2.forward(store, h1);
    add_inplace(y, st.shortcut.forward(store, h));
    y = relu(y);
    if (cache) cache->stages.push_back({std::move(h), std::move(h1), y});
    h = std::move(y);
  }
  return h;
}

void Backbone::backward(const ParamStore& store, const Cache& cache, const Tensor& grad_out,
                        Gradients& grads, int stop_block) const {
  Tensor g = grad_out;
  for (int s = static_cast<int>(stages_.size()) - 1; s >= 0; --s) {
    const int block = first_block_ + 1 + s;
    if (block < stop_block) return;
    const auto& st = stages_[static_cast<std::size_t>(s)];
    const auto& sc = cache.stages[static_cast<std::size_t>(s)];
    Tensor gy = relu_backward(sc.y, g);
    const bool need_input = block > stop_block;
    Tensor gh1 = st.conv2.backward(store, sc.h1, gy, grads, true);
    Tensor ga1 = relu_backward(sc.h1, gh1);
    Tensor gx = st.conv1.backward(store, sc.x, ga1, grads, need_input);
    Tensor gs = st.shortcut.backward(store, sc.x, gy, grads, need_input);
    if (!need_input) return;
    add_inplace(gx, gs);
    g = std::move(gx);
  }
  if (first_block_ < stop_block) return;
  Tensor gstem = relu_backward(cache.stem, g);
  stem_.backward(store, cache.input, gstem, grads, false);
}

// ---------------------------------------------------------------------------

void Sgd::step(ParamStore& store, const Gradients& grads, int first_trainable_block) {
  require(grads.values.size() == store.size(), ErrorCategory::kInvalidArgument,
          "gradient buffer does not match parameters");
  if (momentum_ != 0.0 && velocity_.size() != store.size()) velocity_.assign(store.size(), 0.0f);
  const auto lr = static_cast<float>(lr_);
  const auto mom = static_cast<float>(momentum_);
  const auto wd = static_cast<float>(weight_decay_);
  auto& values = store.values();
  for (const auto& entry : store.entries()) {
    if (entry.block < first_trainable_block) continue;
    for (std::size_t i = entry.ref.offset; i < entry.ref.offset + entry.ref.size; ++i) {
      float g = grads.values[i] + wd * values[i];
      if (momentum_ != 0.0) {
        velocity_[i] = mom * velocity_[i] + g;
        g = velocity_[i];
      }
      values[i] -= lr * g;
    }
  }
}

}  // namespace otoscad::nn
