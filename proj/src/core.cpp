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
#include <set>

#include "otoscad/error.hpp"
#include "otoscad/geometry.hpp"
#include "otoscad/image.hpp"
#include "otoscad/types.hpp"

namespace otoscad {

std::string_view category_name(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kInvalidArgument: return "invalid_argument";
    case ErrorCategory::kConfig: return "config";
    case ErrorCategory::kData: return "data";
    case ErrorCategory::kMissingArtifact: return "missing_artifact";
    case ErrorCategory::kNumerical: return "numerical";
    case ErrorCategory::kIo: return "io";
  }
  return "unknown";
}

int exit_code(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kConfig: return 2;
    case ErrorCategory::kInvalidArgument: return 3;
    case ErrorCategory::kData: return 4;
    case ErrorCategory::kMissingArtifact: return 5;
    case ErrorCategory::kNumerical: return 6;
    case ErrorCategory::kIo: return 7;
  }
  return 1;
}

std::string_view to_string(Label label) {
  return label == Label::kNormal ? "normal" : "abnormal";
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Label parse_label(std::string_view text) {
  if (text == "normal") return Label::kNormal;
  if (text == "abnormal") return Label::kAbnormal;
  fail(ErrorCategory::kData, "unknown label '" + std::string(text) + "'");
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "val") return Split::kVal;
  if (text == "test") return Split::kTest;
  fail(ErrorCategory::kData, "unknown split '" + std::string(text) + "'");
}

bool BoundingBox::is_valid() const {
  for (double v : {x_min, y_min, x_max, y_max}) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) return false;
  }
  return x_min < x_max && y_min < y_max;
}

void validate_box(const BoundingBox& box) {
  if (!box.is_valid()) {
    fail(ErrorCategory::kInvalidArgument,
         "invalid bounding box (" + std::to_string(box.x_min) + ", " + std::to_string(box.y_min) +
             ", " + std::to_string(box.x_max) + ", " + std::to_string(box.y_max) + ")");
  }
}

int VideoRecord::eardrum_frame_count() const {
  return static_cast<int>(std::count_if(annotations.begin(), annotations.end(),
                                        [](const FrameAnnotation& a) { return a.has_eardrum; }));
}

void validate_record(const VideoRecord& record) {
  auto bad = [&](const std::string& what) {
    fail(ErrorCategory::kData, "video '" + record.video_id + "': " + what);
  };
  if (record.video_id.empty()) bad("empty video_id");
  if (record.frame_count < 1) bad("frame_count must be >= 1");
  if (!(record.fps > 0.0 && record.fps <= 240.0)) bad("fps outside (0, 240]");
  if (record.split == Split::kTrain && record.label == Label::kAbnormal) {
    bad("abnormal video assigned to the train split; training data must be normal only");
  }
  std::set<int> seen;
  for (const auto& a : record.annotations) {
    if (a.frame_index < 0 || a.frame_index >= record.frame_count) {
      bad("annotation frame_index " + std::to_string(a.frame_index) + " out of range");
    }
    if (!seen.insert(a.frame_index).second) {
      bad("duplicate annotation for frame " + std::to_string(a.frame_index));
    }
    if (a.has_eardrum != a.box.has_value()) {
      bad("frame " + std::to_string(a.frame_index) + ": box must be present iff has_eardrum");
    }
    if (a.box) {
      if (!a.box->is_valid()) bad("frame " + std::to_string(a.frame_index) + ": invalid box");
      constexpr double kSlack = 1e-9;
      if (a.box->width() + kSlack < kMinEardrumFraction ||
          a.box->height() + kSlack < kMinEardrumFraction) {
        bad("frame " + std::to_string(a.frame_index) + ": eardrum box below 20% of image extent");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Image helpers

std::array<float, 3> sample_bilinear(const Image& src, double y, double x) {
  const int h = src.height();
  const int w = src.width();
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const int y1 = std::min(y0 + 1, h - 1);
  const int x1 = std::min(x0 + 1, w - 1);
  const float fy = static_cast<float>(y - y0);
  const float fx = static_cast<float>(x - x0);
  std::array<float, 3> out{};
  for (int c = 0; c < 3; ++c) {
    const float a = src.at(y0, x0, c), b = src.at(y0, x1, c);
    const float d = src.at(y1, x0, c), e = src.at(y1, x1, c);
    const float top = a + fx * (b - a);
    const float bottom = d + fx * (e - d);
    out[c] = top + fy * (bottom - top);
  }
  return out;
}

Image resize_bilinear(const Image& src, int out_height, int out_width) {
  if (src.height() == out_height && src.width() == out_width) return src;
  Image out(out_height, out_width);
  const double sy = static_cast<double>(src.height()) / out_height;
  const double sx = static_cast<double>(src.width()) / out_width;
  for (int y = 0; y < out_height; ++y) {
    for (int x = 0; x < out_width; ++x) {
      out.set_pixel(y, x, sample_bilinear(src, (y + 0.5) * sy - 0.5, (x + 0.5) * sx - 0.5));
    }
  }
  return out;
}

Image flip_horizontal(const Image& src) {
  Image out(src.height(), src.width());
  for (int y = 0; y < src.height(); ++y) {
    for (int x = 0; x < src.width(); ++x) {
      out.set_pixel(y, x, src.pixel(y, src.width() - 1 - x));
    }
  }
  return out;
}

void clamp_unit(Image& image) {
  for (float& v : image.data()) v = std::clamp(v, 0.0f, 1.0f);
}

bool in_unit_range(const Image& image) {
  return std::all_of(image.data().begin(), image.data().end(),
                     [](float v) { return v >= 0.0f && v <= 1.0f; });
}

// ---------------------------------------------------------------------------
// Geometry

double iou(const BoundingBox& a, const BoundingBox& b) {
  validate_box(a);
  validate_box(b);
  const double iw = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double ih = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double inter = iw * ih;
  if (inter == 0.0) return 0.0;
  if (a == b) return 1.0;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

BoundingBox clip_box(const BoundingBox& box) {
  for (double v : {box.x_min, box.y_min, box.x_max, box.y_max}) {
    require(std::isfinite(v), ErrorCategory::kInvalidArgument, "box coordinate is not finite");
  }
  BoundingBox out{std::clamp(box.x_min, 0.0, 1.0), std::clamp(box.y_min, 0.0, 1.0),
                  std::clamp(box.x_max, 0.0, 1.0), std::clamp(box.y_max, 0.0, 1.0)};
  require(out.x_min < out.x_max && out.y_min < out.y_max, ErrorCategory::kInvalidArgument,
          "box has zero area after clipping to the image");
  return out;
}

Image extract_patch(const Image& frame, const BoundingBox& box, int out_height, int out_width) {
  require(!frame.empty(), ErrorCategory::kInvalidArgument, "extract_patch: empty frame");
  require(out_height > 0 && out_width > 0, ErrorCategory::kInvalidArgument,
          "extract_patch: output size must be positive");
  const BoundingBox b = clip_box(box);
  const double x0 = b.x_min * frame.width();
  const double y0 = b.y_min * frame.height();
  const double sx = (b.x_max - b.x_min) * frame.width() / out_width;
  const double sy = (b.y_max - b.y_min) * frame.height() / out_height;
  Image out(out_height, out_width);
  for (int y = 0; y < out_height; ++y) {
    for (int x = 0; x < out_width; ++x) {
      out.set_pixel(y, x, sample_bilinear(frame, y0 + (y + 0.5) * sy - 0.5, x0 + (x + 0.5) * sx - 0.5));
    }
  }
  return out;
}

}  // namespace otoscad
