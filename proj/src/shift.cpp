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

#include "otoscad/shift.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "otoscad/error.hpp"
#include "otoscad/geometry.hpp"

namespace otoscad::shift {

void ColorJitterParams::validate() const {
  require(brightness >= 0 && contrast >= 0 && saturation >= 0 && hue >= 0,
          ErrorCategory::kConfig, "color jitter magnitudes must be >= 0");
  require(hue <= 0.5, ErrorCategory::kConfig, "hue jitter magnitude must be <= 0.5");
}

JitterFactors draw_factors(const ColorJitterParams& params, Rng& rng) {
  params.validate();
  JitterFactors f;
  auto factor = [&](double magnitude) {
    const double u = rng.uniform();
    if (magnitude == 0.0) return 1.0;
    const double lo = std::max(0.0, 1.0 - magnitude);
    return lo + (1.0 + magnitude - lo) * u;
  };
  f.brightness = factor(params.brightness);
  f.contrast = factor(params.contrast);
  f.saturation = factor(params.saturation);
  const double u = rng.uniform();
  f.hue = params.hue == 0.0 ? 0.0 : -params.hue + 2.0 * params.hue * u;
  return f;
}

namespace {

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

void adjust_brightness(Image& img, double b) {
  for (float& v : img.data()) v = clamp01(b * v);
}

void adjust_contrast(Image& img, double f) {
  double sum = 0.0;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      sum += luma(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
    }
  }
  const double mean = sum / (static_cast<double>(img.height()) * img.width());
  for (float& v : img.data()) v = clamp01(f * v + (1.0 - f) * mean);
}

void adjust_saturation(Image& img, double s) {
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double gray = luma(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = clamp01(s * img.at(y, x, c) + (1.0 - s) * gray);
    }
  }
}

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 multiply(const Mat3& a, const Mat3& b) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) r[i][j] += a[i][k] * b[k][j];
  return r;
}

Mat3 inverse(const Mat3& m) {
  const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  Mat3 r{};
  r[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
  r[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
  r[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
  r[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
  r[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
  r[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
  r[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
  r[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
  r[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
  return r;
}

// RGB -> YIQ; the Y row is the Rec. 601 luma used everywhere else.
constexpr Mat3 kRgbToYiq = {{{0.299, 0.587, 0.114},
                             {0.595716, -0.274453, -0.321263},
                             {0.211456, -0.522591, 0.311135}}};

Mat3 hue_matrix(double hue) {
  const double theta = 2.0 * std::numbers::pi * hue;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const Mat3 rot = {{{1, 0, 0}, {0, c, -s}, {0, s, c}}};
  static const Mat3 kYiqToRgb = inverse(kRgbToYiq);
  return multiply(kYiqToRgb, multiply(rot, kRgbToYiq));
}

}  // namespace

Image rotate_hue(const Image& image, double hue) {
  Image out = image;
  if (hue == 0.0) return out;
  const Mat3 m = hue_matrix(hue);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      const auto p = image.pixel(y, x);
      for (int i = 0; i < 3; ++i) {
        out.at(y, x, i) = clamp01(m[i][0] * p[0] + m[i][1] * p[1] + m[i][2] * p[2]);
      }
    }
  }
  return out;
}

Image apply_jitter(const Image& image, const JitterFactors& f) {
  Image out = image;
  if (f.brightness != 1.0) adjust_brightness(out, f.brightness);
  if (f.contrast != 1.0) adjust_contrast(out, f.contrast);
  if (f.saturation != 1.0) adjust_saturation(out, f.saturation);
  if (f.hue != 0.0) out = rotate_hue(out, f.hue);
  return out;
}

Image color_jitter(const Image& image, const ColorJitterParams& params, Rng& rng) {
  return apply_jitter(image, draw_factors(params, rng));
}

std::string_view to_string(ShiftKind kind) {
  switch (kind) {
    case ShiftKind::kCjRc: return "cj-rc";
    case ShiftKind::kCjRr: return "cj-rr";
    case ShiftKind::kCjWf: return "cj-wf";
  }
  return "?";
}

ShiftKind parse_shift_kind(std::string_view text) {
  if (text == "cj-rc") return ShiftKind::kCjRc;
  if (text == "cj-rr") return ShiftKind::kCjRr;
  if (text == "cj-wf") return ShiftKind::kCjWf;
  fail(ErrorCategory::kConfig, "unknown shift transform '" + std::string(text) + "'");
}

void ShiftVariant::validate() const {
  jitter.validate();
  require(rect.min_area > 0 && rect.min_area <= rect.max_area && rect.max_area <= 1.0,
          ErrorCategory::kConfig, "CJ-RC area range must satisfy 0 < min <= max <= 1");
  require(rect.min_aspect > 0 && rect.min_aspect <= rect.max_aspect, ErrorCategory::kConfig,
          "CJ-RC aspect range must satisfy 0 < min <= max");
  require(region.points >= 0, ErrorCategory::kConfig, "CJ-RR point count must be >= 0");
  require(region.sigma_fraction > 0, ErrorCategory::kConfig, "CJ-RR sigma must be positive");
}

PixelRect draw_rect(int height, int width, const RectRegionParams& params, Rng& rng) {
  const double area = rng.uniform(params.min_area, params.max_area) * height * width;
  const double aspect = rng.uniform(params.min_aspect, params.max_aspect);
  const int w = std::clamp(static_cast<int>(std::lround(std::sqrt(area * aspect))), 1, width);
  const int h = std::clamp(static_cast<int>(std::lround(std::sqrt(area / aspect))), 1, height);
  const int x0 = static_cast<int>(rng.below(static_cast<std::size_t>(width - w + 1)));
  const int y0 = static_cast<int>(rng.below(static_cast<std::size_t>(height - h + 1)));
  return {x0, y0, x0 + w, y0 + h};
}

Image cj_rc_with(const Image& image, const PixelRect& rect, const JitterFactors& factors) {
  const Image jittered = apply_jitter(image, factors);
  Image out = image;
  for (int y = std::max(0, rect.y0); y < std::min(rect.y1, image.height()); ++y) {
    for (int x = std::max(0, rect.x0); x < std::min(rect.x1, image.width()); ++x) {
      out.set_pixel(y, x, jittered.pixel(y, x));
    }
  }
  return out;
}

Image cj_rc(const Image& image, const ShiftVariant& variant, Rng& rng) {
  const PixelRect rect = draw_rect(image.height(), image.width(), variant.rect, rng);
  const JitterFactors factors = draw_factors(variant.jitter, rng);
  return cj_rc_with(image, rect, factors);
}

std::vector<float> smooth_region_weights(int height, int width,
                                         std::span<const std::pair<int, int>> points, double sigma) {
  require(sigma > 0, ErrorCategory::kInvalidArgument, "sigma must be positive");
  std::vector<double> seeds(static_cast<std::size_t>(height) * width, 0.0);
  for (auto [y, x] : points) {
    require(y >= 0 && y < height && x >= 0 && x < width, ErrorCategory::kInvalidArgument,
            "region seed outside the image");
    seeds[static_cast<std::size_t>(y) * width + x] = 1.0;
  }
  const int radius = static_cast<int>(std::ceil(kKernelRadiusSigmas * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double ksum = 0.0;
  for (int d = -radius; d <= radius; ++d) {
    kernel[d + radius] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    ksum += kernel[d + radius];
  }
  for (double& k : kernel) k /= ksum;

  // Separable filtering with zero padding.
  std::vector<double> rows(seeds.size(), 0.0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int d = -radius; d <= radius; ++d) {
        const int xx = x + d;
        if (xx >= 0 && xx < width) acc += kernel[d + radius] * seeds[static_cast<std::size_t>(y) * width + xx];
      }
      rows[static_cast<std::size_t>(y) * width + x] = acc;
    }
  }
  std::vector<double> smooth(seeds.size(), 0.0);
  double peak = 0.0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int d = -radius; d <= radius; ++d) {
        const int yy = y + d;
        if (yy >= 0 && yy < height) acc += kernel[d + radius] * rows[static_cast<std::size_t>(yy) * width + x];
      }
      smooth[static_cast<std::size_t>(y) * width + x] = acc;
      peak = std::max(peak, acc);
    }
  }
  std::vector<float> weights(seeds.size(), 0.0f);
  if (peak > 0.0) {
    for (std::size_t i = 0; i < smooth.size(); ++i) {
      weights[i] = static_cast<float>(std::clamp(smooth[i] / peak, 0.0, 1.0));
    }
  }
  return weights;
}

Image blend(const Image& original, const Image& jittered, std::span<const float> weights) {
  require(weights.size() == static_cast<std::size_t>(original.height()) * original.width(),
          ErrorCategory::kInvalidArgument, "blend: weight map size mismatch");
  Image out = original;
  for (int y = 0; y < original.height(); ++y) {
    for (int x = 0; x < original.width(); ++x) {
      const float w = weights[static_cast<std::size_t>(y) * original.width() + x];
      if (w == 0.0f) continue;
      for (int c = 0; c < 3; ++c) {
        const float o = original.at(y, x, c);
        const float j = jittered.at(y, x, c);
        out.at(y, x, c) = w == 1.0f ? j : std::clamp(o + w * (j - o), std::min(o, j), std::max(o, j));
      }
    }
  }
  return out;
}

Image cj_rr_with(const Image& image, std::span<const std::pair<int, int>> points, double sigma,
                 const JitterFactors& factors) {
  if (points.empty()) return image;
  const auto weights = smooth_region_weights(image.height(), image.width(), points, sigma);
  return blend(image, apply_jitter(image, factors), weights);
}

Image cj_rr(const Image& image, const ShiftVariant& variant, Rng& rng) {
  std::vector<std::pair<int, int>> points;
  for (int i = 0; i < variant.region.points; ++i) {
    const int y = static_cast<int>(rng.below(static_cast<std::size_t>(image.height())));
    const int x = static_cast<int>(rng.below(static_cast<std::size_t>(image.width())));
    points.emplace_back(y, x);
  }
  const double sigma = variant.region.sigma_fraction * std::min(image.height(), image.width());
  const JitterFactors factors = draw_factors(variant.jitter, rng);
  return cj_rr_with(image, points, sigma, factors);
}

Image cj_wf(const Image& image, const ShiftVariant& variant, Rng& rng) {
  return color_jitter(image, variant.jitter, rng);
}

Image apply_shift(const Image& image, const ShiftVariant& variant, Rng& rng) {
  switch (variant.kind) {
    case ShiftKind::kCjRc: return cj_rc(image, variant, rng);
    case ShiftKind::kCjRr: return cj_rr(image, variant, rng);
    case ShiftKind::kCjWf: return cj_wf(image, variant, rng);
  }
  return image;
}

// ---------------------------------------------------------------------------

void PairAugmentParams::validate() const {
  require(crop_size > 0, ErrorCategory::kConfig, "crop size must be positive");
  require(min_scale > 0 && min_scale <= max_scale && max_scale <= 1.0, ErrorCategory::kConfig,
          "crop scale range must satisfy 0 < min <= max <= 1");
  require(min_ratio > 0 && min_ratio <= max_ratio, ErrorCategory::kConfig,
          "crop ratio range must satisfy 0 < min <= max");
}

Image augment_view(const Image& patch, const PairAugmentParams& params, Rng& rng) {
  if (!params.enabled) return resize_bilinear(patch, params.crop_size, params.crop_size);
  const int h = patch.height();
  const int w = patch.width();
  const double area = static_cast<double>(h) * w;
  BoundingBox crop{0.0, 0.0, 1.0, 1.0};
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * rng.uniform(params.min_scale, params.max_scale);
    const double ratio =
        std::exp(rng.uniform(std::log(params.min_ratio), std::log(params.max_ratio)));
    const int cw = static_cast<int>(std::lround(std::sqrt(target * ratio)));
    const int ch = static_cast<int>(std::lround(std::sqrt(target / ratio)));
    if (cw > 0 && cw <= w && ch > 0 && ch <= h) {
      const int x0 = static_cast<int>(rng.below(static_cast<std::size_t>(w - cw + 1)));
      const int y0 = static_cast<int>(rng.below(static_cast<std::size_t>(h - ch + 1)));
      crop = {static_cast<double>(x0) / w, static_cast<double>(y0) / h,
              static_cast<double>(x0 + cw) / w, static_cast<double>(y0 + ch) / h};
      break;
    }
  }
  Image view = extract_patch(patch, crop, params.crop_size, params.crop_size);
  if (params.flip && rng.bernoulli(0.5)) view = flip_horizontal(view);
  return view;
}

std::pair<Image, Image> positive_pair_augment(const Image& patch, const PairAugmentParams& params,
                                              Rng& rng) {
  params.validate();
  Image first = augment_view(patch, params, rng);
  Image second = augment_view(patch, params, rng);
  return {std::move(first), std::move(second)};
}

}  // namespace otoscad::shift
