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

#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "otoscad/image.hpp"
#include "otoscad/rng.hpp"

namespace otoscad::shift {

/// Maximum perturbation magnitudes. Factors are drawn per image as
///   brightness b ~ U[max(0, 1-B), 1+B]   x <- b*x
///   contrast   f ~ U[max(0, 1-C), 1+C]   x <- f*x + (1-f)*mean_luma(image)
///   saturation s ~ U[max(0, 1-S), 1+S]   x <- s*x + (1-s)*luma(pixel)
///   hue        h ~ U[-H, H]              rotate chroma in YIQ by 2*pi*h
/// applied in that order, each followed by clamping to [0, 1]. A factor of
/// exactly 1 (or hue 0) leaves the image untouched.
struct ColorJitterParams {
  double brightness = 0.4;
  double contrast = 0.4;
  double saturation = 0.4;
  double hue = 0.1;

  void validate() const;
  bool operator==(const ColorJitterParams&) const = default;
};

struct JitterFactors {
  double brightness = 1.0;
  double contrast = 1.0;
  double saturation = 1.0;
  double hue = 0.0;
};

/// Always consumes exactly four uniform draws.
JitterFactors draw_factors(const ColorJitterParams& params, Rng& rng);
Image apply_jitter(const Image& image, const JitterFactors& factors);
Image color_jitter(const Image& image, const ColorJitterParams& params, Rng& rng);

/// Hue rotation alone; preserves luma exactly in real arithmetic.
Image rotate_hue(const Image& image, double hue);

enum class ShiftKind { kCjRc, kCjRr, kCjWf };

std::string_view to_string(ShiftKind kind);
ShiftKind parse_shift_kind(std::string_view text);

/// Random rectangle for CJ-RC: area fraction and aspect (width / height)
/// are drawn uniformly from these ranges.
struct RectRegionParams {
  double min_area = 0.1;
  double max_area = 0.5;
  double min_aspect = 0.5;
  double max_aspect = 2.0;

  bool operator==(const RectRegionParams&) const = default;
};

/// Smoothed random region for CJ-RR: `points` uniformly placed seeds,
/// Gaussian sigma = sigma_fraction * min(height, width).
struct SmoothRegionParams {
  int points = 3;
  double sigma_fraction = 0.125;

  bool operator==(const SmoothRegionParams&) const = default;
};

struct ShiftVariant {
  ShiftKind kind = ShiftKind::kCjWf;
  ColorJitterParams jitter;
  RectRegionParams rect;
  SmoothRegionParams region;

  void validate() const;
};

/// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct PixelRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool contains(int y, int x) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

PixelRect draw_rect(int height, int width, const RectRegionParams& params, Rng& rng);

/// Jitter applied to the whole image, composited back only inside `rect`.
Image cj_rc_with(const Image& image, const PixelRect& rect, const JitterFactors& factors);
Image cj_rc(const Image& image, const ShiftVariant& variant, Rng& rng);

/// Gaussian kernel truncation radius, in units of sigma.
inline constexpr double kKernelRadiusSigmas = 4.0;

/// Zero map with ones at `points` (y, x), Gaussian-smoothed with zero
/// padding and rescaled so the maximum is 1. Empty point set gives zeros.
std::vector<float> smooth_region_weights(int height, int width,
                                         std::span<const std::pair<int, int>> points, double sigma);

/// Pixel-wise w * jittered + (1 - w) * original, one weight per pixel.
Image blend(const Image& original, const Image& jittered, std::span<const float> weights);

Image cj_rr_with(const Image& image, std::span<const std::pair<int, int>> points, double sigma,
                 const JitterFactors& factors);
Image cj_rr(const Image& image, const ShiftVariant& variant, Rng& rng);

Image cj_wf(const Image& image, const ShiftVariant& variant, Rng& rng);

/// Dispatches on variant.kind.
Image apply_shift(const Image& image, const ShiftVariant& variant, Rng& rng);

// ---------------------------------------------------------------------------
// Positive-pair augmentation

/// Random resized crop followed by a random horizontal flip.
struct PairAugmentParams {
  bool enabled = true;
  int crop_size = 224;
  double min_scale = 0.08;
  double max_scale = 1.0;
  double min_ratio = 3.0 / 4.0;
  double max_ratio = 4.0 / 3.0;
  bool flip = true;

  void validate() const;
  bool operator==(const PairAugmentParams&) const = default;
};

Image augment_view(const Image& patch, const PairAugmentParams& params, Rng& rng);
std::pair<Image, Image> positive_pair_augment(const Image& patch, const PairAugmentParams& params,
                                              Rng& rng);

}  // namespace otoscad::shift
