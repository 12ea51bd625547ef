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

#include "otoscad/image.hpp"
#include "otoscad/types.hpp"

namespace otoscad {

/// Intersection over union of two valid boxes.
double iou(const BoundingBox& a, const BoundingBox& b);

/// Clamps coordinates to [0, 1]. Throws if the result has zero area.
BoundingBox clip_box(const BoundingBox& box);

/// Crops the (clipped) box region out of `frame` and resamples it
/// bilinearly to out_height x out_width.
Image extract_patch(const Image& frame, const BoundingBox& box, int out_height, int out_width);

}  // namespace otoscad
