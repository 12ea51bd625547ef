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
#include <optional>
#include <string_view>
#include <vector>

#include "otoscad/dataset.hpp"
#include "otoscad/image.hpp"
#include "otoscad/types.hpp"

namespace otoscad::synth {

/// How abnormal videos are altered: the whole disc, one sub-region of it, or
/// a per-video choice between the two.
enum class AnomalyKind { kGlobal, kRegional, kMixed };

std::string_view to_string(AnomalyKind kind);
AnomalyKind parse_anomaly_kind(std::string_view text);

struct SynthConfig {
  data::SplitQuotas counts = data::SplitQuotas::paper();
  int frames_per_video = 32;
  int image_size = 64;
  /// Disc diameter range as a fraction of the image side.
  double min_diameter = 0.25;
  double max_diameter = 0.45;
  /// Per-frame standard deviation of the disc-center random walk, in pixels.
  double walk_step = 1.0;
  double negative_fraction = 0.15;
  double min_fps = 27.0;
  double max_fps = 30.0;
  AnomalyKind anomaly_kind = AnomalyKind::kMixed;
  /// Blend weight toward the infection tint; 0 leaves abnormal videos
  /// distributed exactly like normal ones.
  double anomaly_magnitude = 0.5;
  /// Regional anomalies cover a sub-disc with this radius range relative to
  /// the eardrum radius.
  double min_region = 0.45;
  double max_region = 0.75;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const SynthConfig&) const = default;
};

/// Eardrum disc of one frame, in pixels (pixel centers at integer + 0.5).
struct Disc {
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.0;
};

struct SynthVideo {
  VideoRecord record;
  std::vector<Image> frames;
  std::vector<std::optional<Disc>> discs;  // nullopt on negative frames
};

/// Deterministic id for the index-th video of a split/label cell.
std::string video_id(Split split, Label label, int index);

/// Seed of one video; depends only on (config seed, split, label, index).
std::uint64_t video_seed(std::uint64_t seed, Split split, Label label, int index);

/// Renders one video. Abnormal videos are the normal rendering of the same
/// seed with the tint applied afterwards.
SynthVideo render_video(const SynthConfig& config, Split split, Label label, int index);

/// All videos of the configured quotas, in manifest order (sorted by id).
std::vector<SynthVideo> generate_videos(const SynthConfig& config);

/// Writes <out_dir>/manifest.jsonl and <out_dir>/frames/<video_id>/<i>.png.
/// Returns the manifest.
data::DatasetManifest generate_dataset(const SynthConfig& config,
                                       const std::filesystem::path& out_dir);

/// Manifest plus an in-memory frame source factory, without touching disk.
struct MemoryDataset {
  data::DatasetManifest manifest;
  std::vector<SynthVideo> videos;
  data::FrameSourceFactory sources() const;
};
MemoryDataset generate_in_memory(const SynthConfig& config);

/// Disc pixels of a frame, used by tests: true where the eardrum is drawn.
std::vector<bool> disc_mask(int size, double center_x, double center_y, double radius);

}  // namespace otoscad::synth
