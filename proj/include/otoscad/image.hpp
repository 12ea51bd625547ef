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

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace otoscad {

/// Interleaved H x W x 3 RGB image with float samples, nominally in [0, 1].
class Image {
 public:
  static constexpr int kChannels = 3;

  Image() = default;
  Image(int height, int width, float fill = 0.0f)
      : height_(height),
        width_(width),
        data_(static_cast<std::size_t>(height) * width * kChannels, fill) {}

  int height() const { return height_; }
  int width() const { return width_; }
  bool empty() const { return data_.empty(); }
  std::size_t size() const { return data_.size(); }

  float& at(int y, int x, int c) { return data_[index(y, x, c)]; }
  float at(int y, int x, int c) const { return data_[index(y, x, c)]; }

  std::array<float, 3> pixel(int y, int x) const {
    std::size_t i = index(y, x, 0);
    return {data_[i], data_[i + 1], data_[i + 2]};
  }
  void set_pixel(int y, int x, const std::array<float, 3>& rgb) {
    std::size_t i = index(y, x, 0);
    data_[i] = rgb[0];
    data_[i + 1] = rgb[1];
    data_[i + 2] = rgb[2];
  }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  bool operator==(const Image& other) const = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * kChannels + c;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

/// Bilinear resize with half-pixel centers and edge clamping.
Image resize_bilinear(const Image& src, int out_height, int out_width);

/// Bilinear sample at continuous pixel coordinates (pixel centers at integers).
std::array<float, 3> sample_bilinear(const Image& src, double y, double x);

/// Horizontal mirror.
Image flip_horizontal(const Image& src);

/// Clamps every sample into [0, 1].
void clamp_unit(Image& image);

/// True iff every sample lies in [0, 1].
bool in_unit_range(const Image& image);

/// Rec. 601 luma of one pixel.
inline float luma(float r, float g, float b) { return 0.299f * r + 0.587f * g + 0.114f * b; }

}  // namespace otoscad
