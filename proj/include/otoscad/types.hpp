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

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "otoscad/image.hpp"

namespace otoscad {

enum class Label { kNormal, kAbnormal };
enum class Split { kTrain, kVal, kTest };

inline constexpr Split kAllSplits[] = {Split::kTrain, Split::kVal, Split::kTest};
inline constexpr Label kAllLabels[] = {Label::kNormal, Label::kAbnormal};

std::string_view to_string(Label label);
std::string_view to_string(Split split);
Label parse_label(std::string_view text);
Split parse_split(std::string_view text);

/// Axis-aligned box in fractional image coordinates.
struct BoundingBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 1.0;
  double y_max = 1.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }

  /// Ordered, finite, and inside [0, 1].
  bool is_valid() const;

  bool operator==(const BoundingBox&) const = default;
};

/// Throws kInvalidArgument unless the box is valid.
void validate_box(const BoundingBox& box);

struct FrameAnnotation {
  int frame_index = 0;
  bool has_eardrum = false;
  std::optional<BoundingBox> box;  // present iff has_eardrum

  bool operator==(const FrameAnnotation&) const = default;
};

/// Minimum eardrum extent, as a fraction of image width and height.
inline constexpr double kMinEardrumFraction = 0.20;

struct VideoRecord {
  std::string video_id;
  Label label = Label::kNormal;
  Split split = Split::kTrain;
  int frame_count = 1;
  double fps = 30.0;
  std::vector<FrameAnnotation> annotations;

  int eardrum_frame_count() const;
  bool operator==(const VideoRecord&) const = default;
};

/// Throws kData naming the video on any invariant violation.
void validate_record(const VideoRecord& record);

struct Patch {
  std::string video_id;
  int frame_index = 0;
  Image pixels;
};

struct PatchBatch {
  std::vector<Patch> patches;
  std::size_t size() const { return patches.size(); }
};

/// A score with its ground-truth label; abnormal is the positive class.
struct LabeledScore {
  double score = 0.0;
  Label label = Label::kNormal;
};

}  // namespace otoscad
