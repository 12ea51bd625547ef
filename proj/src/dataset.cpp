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

#include "otoscad/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <spdlog/spdlog.h>

#include "otoscad/error.hpp"
#include "otoscad/geometry.hpp"

namespace otoscad::data {

using nlohmann::json;

int SplitQuotas::total(Label l) const {
  int sum = 0;
  for (Split s : kAllSplits) sum += at(s, l);
  return sum;
}

SplitQuotas SplitQuotas::paper() {
  SplitQuotas q;
  q.at(Split::kTrain, Label::kNormal) = 60;
  q.at(Split::kVal, Label::kNormal) = 10;
  q.at(Split::kTest, Label::kNormal) = 10;
  q.at(Split::kTrain, Label::kAbnormal) = 0;
  q.at(Split::kVal, Label::kAbnormal) = 10;
  q.at(Split::kTest, Label::kAbnormal) = 10;
  return q;
}

std::vector<const VideoRecord*> DatasetManifest::in_split(Split split) const {
  std::vector<const VideoRecord*> out;
  for (const auto& r : records) {
    if (r.split == split) out.push_back(&r);
  }
  return out;
}

const VideoRecord& DatasetManifest::find(const std::string& video_id) const {
  for (const auto& r : records) {
    if (r.video_id == video_id) return r;
  }
  fail(ErrorCategory::kData, "video '" + video_id + "' not in manifest");
}

SplitQuotas DatasetManifest::counts() const {
  SplitQuotas q;
  for (const auto& r : records) ++q.at(r.split, r.label);
  return q;
}

namespace {

json annotation_to_json(const FrameAnnotation& a) {
  if (a.box) {
    return json::array({a.frame_index, 1, a.box->x_min, a.box->y_min, a.box->x_max, a.box->y_max});
  }
  return json::array({a.frame_index, 0, nullptr, nullptr, nullptr, nullptr});
}

json record_to_json(const VideoRecord& r) {
  json anns = json::array();
  for (const auto& a : r.annotations) anns.push_back(annotation_to_json(a));
  // Keys are emitted in sorted order by nlohmann::json; that order is part of the format.
  return json{{"video_id", r.video_id},       {"label", to_string(r.label)},
              {"split", to_string(r.split)},  {"frame_count", r.frame_count},
              {"fps", r.fps},                 {"annotations", std::move(anns)}};
}

VideoRecord record_from_json(const json& j) {
  static const std::set<std::string> kKeys = {"video_id", "label",       "split",
                                              "frame_count", "fps", "annotations"};
  for (const auto& [key, _] : j.items()) {
    if (!kKeys.contains(key)) fail(ErrorCategory::kData, "unknown manifest record key '" + key + "'");
  }
  VideoRecord r;
  r.video_id = j.at("video_id").get<std::string>();
  r.label = parse_label(j.at("label").get<std::string>());
  r.split = parse_split(j.at("split").get<std::string>());
  r.frame_count = j.at("frame_count").get<int>();
  r.fps = j.at("fps").get<double>();
  for (const auto& a : j.at("annotations")) {
    if (!a.is_array() || a.size() != 6) {
      fail(ErrorCategory::kData, "video '" + r.video_id + "': malformed annotation " + a.dump());
    }
    FrameAnnotation ann;
    ann.frame_index = a[0].get<int>();
    ann.has_eardrum = a[1].get<int>() != 0;
    if (ann.has_eardrum) {
      ann.box = BoundingBox{a[2].get<double>(), a[3].get<double>(), a[4].get<double>(),
                            a[5].get<double>()};
    }
    r.annotations.push_back(ann);
  }
  return r;
}

}  // namespace

std::uint64_t DatasetManifest::content_hash() const {
  std::uint64_t h = fnv1a64("otoscad.manifest.v1");
  for (const auto& r : records) h = fnv1a64(record_to_json(r).dump(), h);
  return h;
}

void validate_manifest(const DatasetManifest& manifest, const std::optional<SplitQuotas>& quotas) {
  require(!manifest.records.empty(), ErrorCategory::kData, "manifest contains no videos");
  std::set<std::string> ids;
  for (const auto& r : manifest.records) {
    validate_record(r);
    require(ids.insert(r.video_id).second, ErrorCategory::kData,
            "duplicate video_id '" + r.video_id + "'");
  }
  if (quotas) {
    const SplitQuotas have = manifest.counts();
    for (Split s : kAllSplits) {
      for (Label l : kAllLabels) {
        if (have.at(s, l) != quotas->at(s, l)) {
          fail(ErrorCategory::kData, std::string("split ") + std::string(to_string(s)) + "/" +
                                         std::string(to_string(l)) + " has " +
                                         std::to_string(have.at(s, l)) + " videos, expected " +
                                         std::to_string(quotas->at(s, l)));
        }
      }
    }
  }
}

std::string serialize_manifest(const DatasetManifest& manifest) {
  std::ostringstream out;
  json header{{"schema", kManifestSchema},
              {"version", kManifestVersion},
              {"root", manifest.root},
              {"seed", manifest.seed}};
  out << header.dump() << '\n';
  for (const auto& r : manifest.records) out << record_to_json(r).dump() << '\n';
  return out.str();
}

DatasetManifest parse_manifest(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  DatasetManifest manifest;
  bool have_header = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorCategory::kData, "manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      if (!have_header) {
        require(j.value("schema", "") == kManifestSchema, ErrorCategory::kData,
                "manifest header missing schema '" + std::string(kManifestSchema) + "'");
        const int version = j.at("version").get<int>();
        require(version == kManifestVersion, ErrorCategory::kData,
                "unsupported manifest version " + std::to_string(version));
        manifest.root = j.at("root").get<std::string>();
        manifest.seed = j.at("seed").get<std::uint64_t>();
        have_header = true;
        continue;
      }
      manifest.records.push_back(record_from_json(j));
    } catch (const json::exception& e) {
      fail(ErrorCategory::kData, "manifest line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  require(have_header, ErrorCategory::kData, "manifest is empty");
  validate_manifest(manifest);
  return manifest;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::kMissingArtifact, "cannot open manifest " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_manifest(buffer.str());
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  validate_manifest(manifest);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCategory::kIo, "cannot write manifest " + path.string());
  out << serialize_manifest(manifest);
}

std::filesystem::path frame_root(const DatasetManifest& manifest,
                                 const std::filesystem::path& manifest_path) {
  std::filesystem::path root(manifest.root);
  if (root.is_absolute()) return root;
  return manifest_path.parent_path() / root;
}

DatasetManifest make_splits(std::vector<VideoRecord> records, const SplitQuotas& quotas,
                            std::uint64_t seed) {
  for (Split s : kAllSplits) {
    for (Label l : kAllLabels) {
      require(quotas.at(s, l) >= 0, ErrorCategory::kInvalidArgument, "negative split quota");
    }
  }
  require(quotas.at(Split::kTrain, Label::kAbnormal) == 0, ErrorCategory::kInvalidArgument,
          "train split must not contain abnormal videos");

  // Sort by id first so the assignment does not depend on input order.
  std::sort(records.begin(), records.end(),
            [](const VideoRecord& a, const VideoRecord& b) { return a.video_id < b.video_id; });

  DatasetManifest manifest;
  manifest.seed = seed;
  Rng rng(derive_seed(seed, "make_splits"));
  for (Label label : kAllLabels) {
    std::vector<VideoRecord*> pool;
    for (auto& r : records) {
      if (r.label == label) pool.push_back(&r);
    }
    const int needed = quotas.total(label);
    if (static_cast<int>(pool.size()) < needed) {
      fail(ErrorCategory::kInvalidArgument,
           "not enough " + std::string(to_string(label)) + " videos: need " +
               std::to_string(needed) + ", have " + std::to_string(pool.size()) + " (deficit " +
               std::to_string(needed - static_cast<int>(pool.size())) + ")");
    }
    rng.shuffle(pool.begin(), pool.end());
    std::size_t next = 0;
    for (Split split : kAllSplits) {
      for (int i = 0; i < quotas.at(split, label); ++i) {
        pool[next]->split = split;
        manifest.records.push_back(*pool[next]);
        ++next;
      }
    }
    if (next < pool.size()) {
      spdlog::warn("make_splits: {} {} videos left unassigned", pool.size() - next, to_string(label));
    }
  }
  std::stable_sort(manifest.records.begin(), manifest.records.end(),
                   [](const VideoRecord& a, const VideoRecord& b) { return a.video_id < b.video_id; });
  validate_manifest(manifest, quotas);
  return manifest;
}

// ---------------------------------------------------------------------------

std::filesystem::path frame_path(const std::filesystem::path& root, const std::string& video_id,
                                 int frame_index, const std::string& extension) {
  return root / video_id / (std::to_string(frame_index) + "." + extension);
}

DirectoryFrameSource::DirectoryFrameSource(std::filesystem::path root, const VideoRecord& record,
                                           std::string extension)
    : dir_(std::move(root)),
      video_id_(record.video_id),
      frame_count_(record.frame_count),
      extension_(std::move(extension)) {}

Image DirectoryFrameSource::frame(int index) {
  require(index >= 0 && index < frame_count_, ErrorCategory::kInvalidArgument,
          "frame index " + std::to_string(index) + " out of range for video " + video_id_);
  return read_frame(frame_path(dir_, video_id_, index, extension_));
}

Image MemoryFrameSource::frame(int index) {
  require(index >= 0 && index < frame_count(), ErrorCategory::kInvalidArgument,
          "frame index " + std::to_string(index) + " out of range for video " + video_id_);
  return frames_[static_cast<std::size_t>(index)];
}

FrameSourceFactory directory_sources(std::filesystem::path root, std::string extension) {
  return [root = std::move(root), extension = std::move(extension)](const VideoRecord& record) {
    return std::make_unique<DirectoryFrameSource>(root, record, extension);
  };
}

void write_frame(const std::filesystem::path& path, const Image& image) {
  cv::Mat mat(image.height(), image.width(), CV_8UC3);
  for (int y = 0; y < image.height(); ++y) {
    auto* row = mat.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width(); ++x) {
      // OpenCV stores BGR.
      for (int c = 0; c < 3; ++c) {
        float v = std::clamp(image.at(y, x, c), 0.0f, 1.0f);
        row[x][2 - c] = static_cast<unsigned char>(std::lround(v * 255.0f));
      }
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), mat)) fail(ErrorCategory::kIo, "cannot write " + path.string());
}

Image read_frame(const std::filesystem::path& path) {
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (mat.empty()) fail(ErrorCategory::kMissingArtifact, "cannot read frame " + path.string());
  Image image(mat.rows, mat.cols);
  for (int y = 0; y < mat.rows; ++y) {
    const auto* row = mat.ptr<cv::Vec3b>(y);
    for (int x = 0; x < mat.cols; ++x) {
      for (int c = 0; c < 3; ++c) image.at(y, x, c) = static_cast<float>(row[x][2 - c]) / 255.0f;
    }
  }
  return image;
}

// ---------------------------------------------------------------------------

std::vector<VideoPatches> extract_groundtruth_patches(const std::vector<const VideoRecord*>& records,
                                                      const FrameSourceFactory& sources,
                                                      int patch_size) {
  std::vector<VideoPatches> out;
  for (const VideoRecord* record : records) {
    VideoPatches vp{record->video_id, {}};
    auto source = sources(*record);
    for (const auto& ann : record->annotations) {
      if (!ann.has_eardrum) continue;
      Image frame = source->frame(ann.frame_index);
      vp.patches.push_back(
          {record->video_id, ann.frame_index, extract_patch(frame, *ann.box, patch_size, patch_size)});
    }
    if (vp.patches.empty()) {
      spdlog::warn("video '{}' has no annotated eardrum frames; skipped", record->video_id);
      continue;
    }
    out.push_back(std::move(vp));
  }
  return out;
}

TrainingPatchSampler::TrainingPatchSampler(const DatasetManifest& manifest,
                                           const FrameSourceFactory& sources, int patch_size,
                                           int batch_size, std::uint64_t seed)
    : TrainingPatchSampler(extract_groundtruth_patches(manifest.in_split(Split::kTrain), sources,
                                                       patch_size),
                           batch_size, seed) {}

TrainingPatchSampler::TrainingPatchSampler(std::vector<VideoPatches> videos, int batch_size,
                                           std::uint64_t seed)
    : batch_size_(batch_size), seed_(seed) {
  for (auto& v : videos) {
    if (v.patches.empty()) {
      spdlog::warn("video '{}' has no annotated eardrum frames; skipped", v.video_id);
      continue;
    }
    videos_.push_back(std::move(v));
  }
  check_feasible();
}

void TrainingPatchSampler::check_feasible() const {
  require(batch_size_ >= 1, ErrorCategory::kInvalidArgument, "batch size must be positive");
  require(!videos_.empty(), ErrorCategory::kData, "no training videos with eardrum frames");
  require(static_cast<std::size_t>(batch_size_) <= videos_.size(), ErrorCategory::kInvalidArgument,
          "batch size " + std::to_string(batch_size_) + " exceeds the " +
              std::to_string(videos_.size()) +
              " available training videos; batches must hold distinct videos");
}

std::vector<PatchBatch> TrainingPatchSampler::epoch(int epoch_index) const {
  Rng rng(derive_seed(seed_, static_cast<std::uint64_t>(epoch_index)));
  std::vector<std::size_t> order(videos_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order.begin(), order.end());

  // A trailing partial batch is dropped.
  const std::size_t n_batches = videos_.size() / static_cast<std::size_t>(batch_size_);
  std::vector<PatchBatch> batches(n_batches);
  for (std::size_t b = 0; b < n_batches; ++b) {
    std::set<std::string> ids;
    for (int i = 0; i < batch_size_; ++i) {
      const auto& video = videos_[order[b * batch_size_ + i]];
      const auto& patch = video.patches[rng.below(video.patches.size())];
      batches[b].patches.push_back(patch);
      ids.insert(video.video_id);
    }
    require(ids.size() == batches[b].size(), ErrorCategory::kData,
            "internal: minibatch repeated a video");
  }
  return batches;
}

}  // namespace otoscad::data
