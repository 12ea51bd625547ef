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
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "otoscad/image.hpp"
#include "otoscad/rng.hpp"
#include "otoscad/types.hpp"

namespace otoscad::data {

/// Manifest file schema. Line 1 is a header object, then one JSON object
/// per video:
///
///   {"schema":"otoscad.manifest","version":1,"root":"frames","seed":7}
///   {"video_id":"v000","label":"normal","split":"train","frame_count":32,
///    "fps":29.5,"annotations":[[0,1,0.1,0.2,0.5,0.6],[1,0,null,null,null,null]]}
///
/// Each annotation is [frame_index, has_eardrum, x_min, y_min, x_max, y_max].
inline constexpr const char* kManifestSchema = "otoscad.manifest";
inline constexpr int kManifestVersion = 1;

/// Per-split, per-label video counts.
struct SplitQuotas {
  // counts[split][label]
  std::array<std::array<int, 2>, 3> counts{};

  int& at(Split s, Label l) { return counts[static_cast<int>(s)][static_cast<int>(l)]; }
  int at(Split s, Label l) const { return counts[static_cast<int>(s)][static_cast<int>(l)]; }
  int total(Label l) const;

  /// 60/10/10 normal, 0/10/10 abnormal.
  static SplitQuotas paper();
};

struct DatasetManifest {
  std::vector<VideoRecord> records;
  std::string root;  // frame directory, relative to the manifest file unless absolute
  std::uint64_t seed = 0;

  std::vector<const VideoRecord*> in_split(Split split) const;
  const VideoRecord& find(const std::string& video_id) const;
  SplitQuotas counts() const;
  /// Stable content hash over every record (used for provenance).
  std::uint64_t content_hash() const;

  bool operator==(const DatasetManifest&) const = default;
};

/// Validates every record, id uniqueness, and (optionally) quota equality.
void validate_manifest(const DatasetManifest& manifest,
                       const std::optional<SplitQuotas>& quotas = std::nullopt);

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
std::string serialize_manifest(const DatasetManifest& manifest);
DatasetManifest parse_manifest(const std::string& text);

/// Resolves manifest.root against the directory holding the manifest file.
std::filesystem::path frame_root(const DatasetManifest& manifest,
                                 const std::filesystem::path& manifest_path);

/// Assigns splits so every quota is met exactly. Records' incoming split
/// fields are ignored. Deterministic given seed.
DatasetManifest make_splits(std::vector<VideoRecord> records, const SplitQuotas& quotas,
                            std::uint64_t seed);

// ---------------------------------------------------------------------------
// Frame access

/// Random access to the decoded frames of one video. Single consumer.
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual const std::string& video_id() const = 0;
  virtual int frame_count() const = 0;
  virtual Image frame(int index) = 0;
};

/// Reads <root>/<video_id>/<frame_index>.<ext> still images.
class DirectoryFrameSource : public FrameSource {
 public:
  DirectoryFrameSource(std::filesystem::path root, const VideoRecord& record,
                       std::string extension = "png");
  const std::string& video_id() const override { return video_id_; }
  int frame_count() const override { return frame_count_; }
  Image frame(int index) override;

 private:
  std::filesystem::path dir_;
  std::string video_id_;
  int frame_count_;
  std::string extension_;
};

/// Frames held in memory; used by tests and the synthetic generator.
class MemoryFrameSource : public FrameSource {
 public:
  MemoryFrameSource(std::string video_id, std::vector<Image> frames)
      : video_id_(std::move(video_id)), frames_(std::move(frames)) {}
  const std::string& video_id() const override { return video_id_; }
  int frame_count() const override { return static_cast<int>(frames_.size()); }
  Image frame(int index) override;

 private:
  std::string video_id_;
  std::vector<Image> frames_;
};

using FrameSourceFactory = std::function<std::unique_ptr<FrameSource>(const VideoRecord&)>;

FrameSourceFactory directory_sources(std::filesystem::path root, std::string extension = "png");

std::filesystem::path frame_path(const std::filesystem::path& root, const std::string& video_id,
                                 int frame_index, const std::string& extension = "png");

/// 8-bit RGB still image I/O. Samples are quantized with round(v * 255).
void write_frame(const std::filesystem::path& path, const Image& image);
Image read_frame(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Patch datasets

/// Groundtruth-box patches of one video's annotated eardrum frames.
struct VideoPatches {
  std::string video_id;
  std::vector<Patch> patches;
};

/// Extracts every annotated eardrum patch of the given records.
std::vector<VideoPatches> extract_groundtruth_patches(const std::vector<const VideoRecord*>& records,
                                                      const FrameSourceFactory& sources,
                                                      int patch_size);

/// Per-epoch minibatches of training patches in which no two patches share a
/// video. Each epoch shuffles the videos and draws one annotated frame per
/// video, uniformly, from an rng reseeded by (seed, epoch).
class TrainingPatchSampler {
 public:
  TrainingPatchSampler(const DatasetManifest& manifest, const FrameSourceFactory& sources,
                       int patch_size, int batch_size, std::uint64_t seed);

  /// From already-extracted patches; videos without patches are skipped.
  TrainingPatchSampler(std::vector<VideoPatches> videos, int batch_size, std::uint64_t seed);

  std::vector<PatchBatch> epoch(int epoch_index) const;
  std::size_t video_count() const { return videos_.size(); }
  const std::vector<VideoPatches>& videos() const { return videos_; }

 private:
  void check_feasible() const;

  std::vector<VideoPatches> videos_;
  int batch_size_;
  std::uint64_t seed_;
};

}  // namespace otoscad::data
