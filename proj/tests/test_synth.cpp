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
#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>

#include "otoscad/error.hpp"
#include "otoscad/geometry.hpp"
#include "otoscad/synth.hpp"

using namespace otoscad;
using namespace otoscad::synth;

namespace {

SynthConfig small_config() {
  SynthConfig c;
  c.counts = {};
  c.counts.at(Split::kTrain, Label::kNormal) = 3;
  c.counts.at(Split::kVal, Label::kNormal) = 2;
  c.counts.at(Split::kVal, Label::kAbnormal) = 2;
  c.counts.at(Split::kTest, Label::kNormal) = 2;
  c.counts.at(Split::kTest, Label::kAbnormal) = 2;
  c.frames_per_video = 8;
  c.image_size = 48;
  c.seed = 17;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Bounding box of the rasterized disc, in fractional coordinates.
BoundingBox raster_box(const Disc& d, int size) {
  const auto mask = disc_mask(size, d.cx, d.cy, d.radius);
  int x0 = size, y0 = size, x1 = -1, y1 = -1;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      if (!mask[static_cast<std::size_t>(y) * size + x]) continue;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  const double s = size;
  return {x0 / s, y0 / s, (x1 + 1) / s, (y1 + 1) / s};
}

}  // namespace

TEST_CASE("default config follows the paper quotas") {
  SynthConfig c;
  c.frames_per_video = 1;
  c.image_size = 32;
  const auto videos = generate_videos(c);
  CHECK(videos.size() == 100);
  data::DatasetManifest m;
  for (const auto& v : videos) m.records.push_back(v.record);
  CHECK_NOTHROW(data::validate_manifest(m, data::SplitQuotas::paper()));
}

TEST_CASE("boxes tightly bound the rasterized disc") {
  const SynthConfig c = small_config();
  int negatives = 0;
  for (const auto& v : generate_videos(c)) {
    REQUIRE(v.discs.size() == v.frames.size());
    CHECK(v.record.fps >= 27.0);
    CHECK(v.record.fps <= 30.0);
    for (std::size_t t = 0; t < v.frames.size(); ++t) {
      const auto& a = v.record.annotations[t];
      CHECK(a.has_eardrum == v.discs[t].has_value());
      if (!v.discs[t]) {
        ++negatives;
        continue;
      }
      CHECK(iou(*a.box, raster_box(*v.discs[t], c.image_size)) == 1.0);
      CHECK(a.box->width() >= kMinEardrumFraction);
      CHECK(a.box->height() >= kMinEardrumFraction);
    }
    CHECK(v.record.annotations.front().has_eardrum);
    for (const auto& f : v.frames) CHECK(in_unit_range(f));
  }
  CHECK(negatives > 0);
}

TEST_CASE("anomalies change only disc pixels") {
  for (auto kind : {AnomalyKind::kRegional, AnomalyKind::kGlobal}) {
    SynthConfig tinted = small_config();
    tinted.anomaly_kind = kind;
    tinted.anomaly_magnitude = 0.6;
    SynthConfig plain = tinted;
    plain.anomaly_magnitude = 0.0;
    const SynthVideo a = render_video(tinted, Split::kTest, Label::kAbnormal, 1);
    const SynthVideo b = render_video(plain, Split::kTest, Label::kAbnormal, 1);
    int changed = 0;
    for (std::size_t t = 0; t < a.frames.size(); ++t) {
      std::vector<bool> mask(static_cast<std::size_t>(tinted.image_size * tinted.image_size), false);
      if (a.discs[t]) mask = disc_mask(tinted.image_size, a.discs[t]->cx, a.discs[t]->cy, a.discs[t]->radius);
      for (int y = 0; y < tinted.image_size; ++y)
        for (int x = 0; x < tinted.image_size; ++x) {
          const bool differs = a.frames[t].pixel(y, x) != b.frames[t].pixel(y, x);
          if (!mask[static_cast<std::size_t>(y) * tinted.image_size + x]) CHECK_FALSE(differs);
          changed += differs;
        }
    }
    CHECK(changed > 0);
    // Normal videos ignore the magnitude.
    CHECK(render_video(tinted, Split::kVal, Label::kNormal, 0).frames ==
          render_video(plain, Split::kVal, Label::kNormal, 0).frames);
  }
}

TEST_CASE("magnitude zero leaves abnormal videos distributed like normal ones") {
  SynthConfig c = small_config();
  c.anomaly_magnitude = 0.0;
  c.counts.at(Split::kTest, Label::kNormal) = 40;
  c.counts.at(Split::kTest, Label::kAbnormal) = 40;
  c.frames_per_video = 2;
  auto redness = [&](Label label) {
    double sum = 0.0;
    int n = 0;
    for (int i = 0; i < 40; ++i) {
      const SynthVideo v = render_video(c, Split::kTest, label, i);
      const Disc& d = *v.discs[0];
      const auto mask = disc_mask(c.image_size, d.cx, d.cy, d.radius);
      for (int y = 0; y < c.image_size; ++y)
        for (int x = 0; x < c.image_size; ++x) {
          if (!mask[static_cast<std::size_t>(y) * c.image_size + x]) continue;
          const auto p = v.frames[0].pixel(y, x);
          sum += p[0] - p[2];
          ++n;
        }
    }
    return sum / n;
  };
  const double normal = redness(Label::kNormal), abnormal = redness(Label::kAbnormal);
  CHECK(std::abs(normal - abnormal) < 0.02);
  c.anomaly_magnitude = 0.4;
  CHECK(redness(Label::kAbnormal) - redness(Label::kNormal) > 0.05);
}

TEST_CASE("generation is deterministic") {
  const SynthConfig c = small_config();
  const auto a = generate_in_memory(c), b = generate_in_memory(c);
  CHECK(a.manifest == b.manifest);
  for (std::size_t i = 0; i < a.videos.size(); ++i) CHECK(a.videos[i].frames == b.videos[i].frames);
  SynthConfig other = c;
  other.seed = 18;
  CHECK_FALSE(generate_in_memory(other).videos[0].frames == a.videos[0].frames);

  const auto d1 = std::filesystem::temp_directory_path() / "otoscad_test_synth1";
  const auto d2 = std::filesystem::temp_directory_path() / "otoscad_test_synth2";
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
  const auto m = generate_dataset(c, d1);
  generate_dataset(c, d2);
  CHECK(m == a.manifest);
  CHECK(slurp(d1 / "manifest.jsonl") == slurp(d2 / "manifest.jsonl"));
  int files = 0;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(d1)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), d1);
    CHECK(slurp(entry.path()) == slurp(d2 / rel));
    ++files;
  }
  CHECK(files == 1 + 11 * 8);
  // Frames on disk decode to the in-memory rendering.
  const auto source = data::directory_sources(d1 / "frames")(m.records[0]);
  CHECK(source->frame(3) == a.videos[0].frames[3]);
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}

TEST_CASE("config validation") {
  SynthConfig c = small_config();
  c.max_diameter = 0.99;
  CHECK_THROWS_AS(c.validate(), Error);
  c = small_config();
  c.min_diameter = 0.1;
  CHECK_THROWS_AS(c.validate(), Error);
  c = small_config();
  c.counts.at(Split::kTrain, Label::kAbnormal) = 1;
  CHECK_THROWS_AS(c.validate(), Error);
  c = small_config();
  c.anomaly_magnitude = 1.5;
  CHECK_THROWS_AS(c.validate(), Error);
  for (auto k : {AnomalyKind::kGlobal, AnomalyKind::kRegional, AnomalyKind::kMixed}) {
    CHECK(parse_anomaly_kind(to_string(k)) == k);
  }
  CHECK(video_id(Split::kTest, Label::kAbnormal, 7) == "test-a007");
}
