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


#include "otoscad/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "otoscad/error.hpp"
#include "otoscad/rng.hpp"

namespace otoscad::synth {

namespace {

using Rgb = std::array<double, 3>;

constexpr Rgb kCanalColor{0.55, 0.32, 0.22};
constexpr Rgb kInfectionColor{0.95, 0.50, 0.40};
constexpr double kSensorNoise = 0.015;

// Smooth random field: a coarse grid of N(0, 1) values sampled bilinearly.
class NoiseField {
 public:
  NoiseField(int grid, Rng& rng) : grid_(grid), values_(static_cast<std::size_t>(grid) * grid) {
    for (auto& v : values_) v = rng.normal();
  }

  // u, v in [0, 1].
  double at(double u, double v) const {
    const double gx = std::clamp(u, 0.0, 1.0) * (grid_ - 1);
    const double gy = std::clamp(v, 0.0, 1.0) * (grid_ - 1);
    const int x0 = std::min(static_cast<int>(gx), grid_ - 2);
    const int y0 = std::min(static_cast<int>(gy), grid_ - 2);
    const double fx = gx - x0, fy = gy - y0;
    auto g = [&](int y, int x) { return values_[static_cast<std::size_t>(y) * grid_ + x]; };
    return (1 - fy) * ((1 - fx) * g(y0, x0) + fx * g(y0, x0 + 1)) +
           fy * ((1 - fx) * g(y0 + 1, x0) + fx * g(y0 + 1, x0 + 1));
  }

 private:
  int grid_;
  std::vector<double> values_;
};

struct DiscPose {
  bool visible = false;
  double cx = 0.0, cy = 0.0;
};

struct NormalRendering {
  std::vector<Image> frames;
  std::vector<DiscPose> poses;
  double radius = 0.0;
  Rgb base{};
};

bool inside(int x, int y, double cx, double cy, double r) {
  const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
  return dx * dx + dy * dy <= r * r;
}

float quantize(double v) {
  return static_cast<float>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0f;
}

NormalRendering render_normal(const SynthConfig& config, Rng& rng) {
  const int s = config.image_size;
  NormalRendering out;

  const double canal_gain = rng.uniform(0.8, 1.1);
  NoiseField background(6, rng);
  std::array<NoiseField, 3> background_tint{NoiseField(4, rng), NoiseField(4, rng),
                                            NoiseField(4, rng)};

  const double diameter = rng.uniform(config.min_diameter, config.max_diameter) * s;
  out.radius = std::max(diameter / 2.0, kMinEardrumFraction * s / 2.0 + 1.0);
  const double red = rng.uniform(0.68, 0.82);
  const double green = red - rng.uniform(0.08, 0.18);
  const double blue = green - rng.uniform(-0.02, 0.06);
  out.base = {red, green, blue};
  NoiseField texture(5, rng);
  const double reflex_x = 0.65 + 0.1 * rng.normal();
  const double reflex_y = 0.7 + 0.1 * rng.normal();
  const double reflex_gain = rng.uniform(0.08, 0.2);

  const double lo = out.radius + 1.0, hi = s - out.radius - 1.0;
  double cx = rng.uniform(lo, hi), cy = rng.uniform(lo, hi);
  auto reflect = [&](double v) {
    if (v < lo) v = 2 * lo - v;
    if (v > hi) v = 2 * hi - v;
    return std::clamp(v, lo, hi);
  };

  const double half_diag = s / std::numbers::sqrt2;
  for (int t = 0; t < config.frames_per_video; ++t) {
    if (t > 0) {
      cx = reflect(cx + config.walk_step * rng.normal());
      cy = reflect(cy + config.walk_step * rng.normal());
    }
    const bool visible = t == 0 || !rng.bernoulli(config.negative_fraction);
    Image frame(s, s);
    for (int y = 0; y < s; ++y) {
      for (int x = 0; x < s; ++x) {
        const double u = (x + 0.5) / s, v = (y + 0.5) / s;
        const double d = std::hypot(x + 0.5 - s / 2.0, y + 0.5 - s / 2.0) / half_diag;
        const double vignette = 1.0 - 0.6 * d * d;
        Rgb px;
        for (int c = 0; c < 3; ++c) {
          px[c] = (kCanalColor[c] * canal_gain + 0.06 * background.at(u, v) +
                   0.03 * background_tint[c].at(u, v)) *
                  vignette;
        }
        if (visible && inside(x, y, cx, cy, out.radius)) {
          // Disc-local coordinates in [0, 1].
          const double lu = (x + 0.5 - cx) / (2 * out.radius) + 0.5;
          const double lv = (y + 0.5 - cy) / (2 * out.radius) + 0.5;
          const double rr = std::hypot(lu - 0.5, lv - 0.5) * 2.0;
          const double shade = 1.0 - 0.25 * std::pow(rr, 4.0);
          const double reflex =
              reflex_gain * std::exp(-((lu - reflex_x) * (lu - reflex_x) +
                                       (lv - reflex_y) * (lv - reflex_y)) /
                                     (2 * 0.12 * 0.12));
          const double tex = 0.06 * texture.at(lu, lv);
          for (int c = 0; c < 3; ++c) px[c] = (out.base[c] + tex) * shade + reflex;
        }
        for (int c = 0; c < 3; ++c) frame.at(y, x, c) = static_cast<float>(px[c]);
      }
    }
    for (auto& v : frame.data()) v = static_cast<float>(v + kSensorNoise * rng.normal());
    out.frames.push_back(std::move(frame));
    out.poses.push_back({visible, cx, cy});
  }
  return out;
}

void apply_anomaly(const SynthConfig& config, NormalRendering& video, Rng& rng) {
  bool regional = config.anomaly_kind == AnomalyKind::kRegional;
  if (config.anomaly_kind == AnomalyKind::kMixed) regional = rng.bernoulli(0.5);
  const double region_r = rng.uniform(config.min_region, config.max_region) * video.radius;
  const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double offset = rng.uniform(0.0, 1.0 - config.min_region) * video.radius;
  const double m = config.anomaly_magnitude;
  if (m == 0.0) return;
  for (std::size_t t = 0; t < video.frames.size(); ++t) {
    const DiscPose& p = video.poses[t];
    if (!p.visible) continue;
    Image& frame = video.frames[t];
    const double rx = p.cx + offset * std::cos(angle), ry = p.cy + offset * std::sin(angle);
    for (int y = 0; y < frame.height(); ++y) {
      for (int x = 0; x < frame.width(); ++x) {
        if (!inside(x, y, p.cx, p.cy, video.radius)) continue;
        if (regional && !inside(x, y, rx, ry, region_r)) continue;
        for (int c = 0; c < 3; ++c) {
          frame.at(y, x, c) += static_cast<float>(m * (kInfectionColor[c] - video.base[c]));
        }
      }
    }
  }
}

std::optional<BoundingBox> tight_box(int s, const DiscPose& p, double r) {
  int x0 = s, y0 = s, x1 = -1, y1 = -1;
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      if (!inside(x, y, p.cx, p.cy, r)) continue;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) return std::nullopt;
  const double sd = s;
  return BoundingBox{x0 / sd, y0 / sd, (x1 + 1) / sd, (y1 + 1) / sd};
}

}  // namespace

std::string_view to_string(AnomalyKind kind) {
  switch (kind) {
    case AnomalyKind::kGlobal: return "global";
    case AnomalyKind::kRegional: return "regional";
    case AnomalyKind::kMixed: return "mixed";
  }
  return "?";
}

AnomalyKind parse_anomaly_kind(std::string_view text) {
  for (AnomalyKind k : {AnomalyKind::kGlobal, AnomalyKind::kRegional, AnomalyKind::kMixed}) {
    if (text == to_string(k)) return k;
  }
  fail(ErrorCategory::kConfig, "unknown anomaly kind '" + std::string(text) + "'");
}

void SynthConfig::validate() const {
  for (Split s : kAllSplits) {
    for (Label l : kAllLabels) {
      require(counts.at(s, l) >= 0, ErrorCategory::kConfig, "synthetic counts must be >= 0");
    }
  }
  require(counts.at(Split::kTrain, Label::kAbnormal) == 0, ErrorCategory::kConfig,
          "the train split must not contain abnormal videos");
  require(counts.at(Split::kTrain, Label::kNormal) > 0, ErrorCategory::kConfig,
          "the train split needs at least one normal video");
  require(frames_per_video >= 1, ErrorCategory::kConfig, "frames_per_video must be >= 1");
  require(image_size >= 16, ErrorCategory::kConfig, "image_size must be >= 16");
  require(min_diameter >= kMinEardrumFraction && min_diameter <= max_diameter,
          ErrorCategory::kConfig, "disc diameter range must satisfy 0.2 <= min <= max");
  require(max_diameter * image_size + 4.0 <= image_size, ErrorCategory::kConfig,
          "infeasible geometry: the disc does not fit inside the frame");
  require(walk_step >= 0, ErrorCategory::kConfig, "walk_step must be >= 0");
  require(negative_fraction >= 0 && negative_fraction < 1, ErrorCategory::kConfig,
          "negative_fraction must lie in [0, 1)");
  require(min_fps > 0 && min_fps <= max_fps && max_fps <= 240, ErrorCategory::kConfig,
          "fps range must satisfy 0 < min <= max <= 240");
  require(anomaly_magnitude >= 0 && anomaly_magnitude <= 1, ErrorCategory::kConfig,
          "anomaly_magnitude must lie in [0, 1]");
  require(min_region > 0 && min_region <= max_region && max_region <= 1, ErrorCategory::kConfig,
          "region range must satisfy 0 < min <= max <= 1");
}

std::string video_id(Split split, Label label, int index) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s-%c%03d", std::string(to_string(split)).c_str(),
                label == Label::kNormal ? 'n' : 'a', index);
  return buf;
}

std::uint64_t video_seed(std::uint64_t seed, Split split, Label label, int index) {
  return derive_seed(derive_seed(seed, video_id(split, label, index)), "synth.video");
}

SynthVideo render_video(const SynthConfig& config, Split split, Label label, int index) {
  config.validate();
  const std::uint64_t vseed = video_seed(config.seed, split, label, index);
  Rng rng(vseed);
  SynthVideo out;
  VideoRecord& rec = out.record;
  rec.video_id = video_id(split, label, index);
  rec.label = label;
  rec.split = split;
  rec.frame_count = config.frames_per_video;
  rec.fps = std::round(rng.uniform(config.min_fps, config.max_fps) * 100.0) / 100.0;

  NormalRendering video = render_normal(config, rng);
  if (label == Label::kAbnormal) {
    Rng anomaly_rng(derive_seed(vseed, "synth.anomaly"));
    apply_anomaly(config, video, anomaly_rng);
  }
  for (int t = 0; t < config.frames_per_video; ++t) {
    auto& frame = video.frames[static_cast<std::size_t>(t)];
    for (auto& v : frame.data()) v = quantize(v);
    FrameAnnotation a;
    a.frame_index = t;
    const DiscPose& p = video.poses[static_cast<std::size_t>(t)];
    if (p.visible) a.box = tight_box(config.image_size, p, video.radius);
    a.has_eardrum = a.box.has_value();
    rec.annotations.push_back(a);
    out.discs.push_back(p.visible ? std::optional<Disc>(Disc{p.cx, p.cy, video.radius})
                                  : std::nullopt);
  }
  out.frames = std::move(video.frames);
  validate_record(rec);
  return out;
}

std::vector<SynthVideo> generate_videos(const SynthConfig& config) {
  config.validate();
  std::vector<SynthVideo> videos;
  for (Split s : kAllSplits) {
    for (Label l : kAllLabels) {
      for (int i = 0; i < config.counts.at(s, l); ++i) videos.push_back(render_video(config, s, l, i));
    }
  }
  std::sort(videos.begin(), videos.end(), [](const SynthVideo& a, const SynthVideo& b) {
    return a.record.video_id < b.record.video_id;
  });
  return videos;
}

namespace {

data::DatasetManifest manifest_of(const SynthConfig& config, const std::vector<SynthVideo>& videos) {
  data::DatasetManifest m;
  m.root = "frames";
  m.seed = config.seed;
  for (const auto& v : videos) m.records.push_back(v.record);
  data::validate_manifest(m, config.counts);
  return m;
}

}  // namespace

data::DatasetManifest generate_dataset(const SynthConfig& config,
                                       const std::filesystem::path& out_dir) {
  config.validate();
  data::DatasetManifest manifest;
  manifest.root = "frames";
  manifest.seed = config.seed;
  const auto root = out_dir / manifest.root;
  // One video at a time keeps memory flat for large null-calibration sets.
  for (Split s : kAllSplits) {
    for (Label l : kAllLabels) {
      for (int i = 0; i < config.counts.at(s, l); ++i) {
        SynthVideo v = render_video(config, s, l, i);
        for (int t = 0; t < v.record.frame_count; ++t) {
          data::write_frame(data::frame_path(root, v.record.video_id, t),
                            v.frames[static_cast<std::size_t>(t)]);
        }
        manifest.records.push_back(std::move(v.record));
      }
    }
  }
  std::sort(manifest.records.begin(), manifest.records.end(),
            [](const VideoRecord& a, const VideoRecord& b) { return a.video_id < b.video_id; });
  data::validate_manifest(manifest, config.counts);
  data::save_manifest(manifest, out_dir / "manifest.jsonl");
  return manifest;
}

data::FrameSourceFactory MemoryDataset::sources() const {
  return [this](const VideoRecord& rec) -> std::unique_ptr<data::FrameSource> {
    for (const auto& v : videos) {
      if (v.record.video_id == rec.video_id) {
        return std::make_unique<data::MemoryFrameSource>(v.record.video_id, v.frames);
      }
    }
    fail(ErrorCategory::kMissingArtifact, "no frames for video " + rec.video_id);
  };
}

MemoryDataset generate_in_memory(const SynthConfig& config) {
  MemoryDataset out;
  out.videos = generate_videos(config);
  out.manifest = manifest_of(config, out.videos);
  return out;
}

std::vector<bool> disc_mask(int size, double center_x, double center_y, double radius) {
  std::vector<bool> mask(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      mask[static_cast<std::size_t>(y) * size + x] = inside(x, y, center_x, center_y, radius);
    }
  }
  return mask;
}

}  // namespace otoscad::synth
