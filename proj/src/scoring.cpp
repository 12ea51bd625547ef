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


#include "otoscad/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "otoscad/error.hpp"
#include "otoscad/geometry.hpp"
#include "otoscad/io.hpp"

namespace otoscad::score {

namespace {

constexpr double kUnitTolerance = 1e-4;
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr const char* kReportSchema = "otoscad.report";
constexpr int kReportVersion = 1;

}  // namespace

ReferenceIndex::ReferenceIndex(const Eigen::MatrixXd& references, int k)
    : k_(k), rows_(static_cast<int>(references.rows())), dim_(static_cast<int>(references.cols())) {
  require(k >= 1, ErrorCategory::kInvalidArgument, "k must be >= 1");
  require(k <= rows_, ErrorCategory::kInvalidArgument,
          "index holds " + std::to_string(rows_) + " reference vectors, fewer than k = " +
              std::to_string(k));
  data_.resize(static_cast<std::size_t>(rows_) * dim_);
  for (int i = 0; i < rows_; ++i) {
    const double norm = references.row(i).norm();
    require(std::abs(norm - 1.0) <= kUnitTolerance, ErrorCategory::kInvalidArgument,
            "reference vector " + std::to_string(i) + " is not unit-norm");
    for (int j = 0; j < dim_; ++j) data_[static_cast<std::size_t>(i) * dim_ + j] = references(i, j);
  }
}

double ReferenceIndex::frame_score(std::span<const double> e) const {
  require(static_cast<int>(e.size()) == dim_, ErrorCategory::kInvalidArgument,
          "query dimension does not match the index");
  std::vector<double> sims(static_cast<std::size_t>(rows_));
  for (int i = 0; i < rows_; ++i) {
    const double* y = data_.data() + static_cast<std::size_t>(i) * dim_;
    double dot = 0.0;
    for (int j = 0; j < dim_; ++j) dot += e[static_cast<std::size_t>(j)] * y[j];
    sims[static_cast<std::size_t>(i)] = dot;
  }
  std::partial_sort(sims.begin(), sims.begin() + k_, sims.end(), std::greater<>());
  double score = 0.0;
  // Distances are clamped at 0 against rounding when e coincides with a reference.
  for (int i = 0; i < k_; ++i) score += std::max(0.0, 1.0 - sims[static_cast<std::size_t>(i)]);
  return score;
}

std::optional<double> video_score(std::span<const double> frame_scores) {
  if (frame_scores.empty()) return std::nullopt;
  double sum = 0.0;
  for (double s : frame_scores) sum += s;
  return sum / static_cast<double>(frame_scores.size());
}

double select_threshold(std::span<const LabeledScore> validation, double target_sensitivity) {
  require(target_sensitivity >= 0.0 && target_sensitivity <= 1.0, ErrorCategory::kInvalidArgument,
          "target sensitivity must lie in [0, 1]; anything above 1 is unachievable");
  int positives = 0, negatives = 0;
  std::vector<double> finite;
  for (const auto& s : validation) {
    require(!std::isnan(s.score), ErrorCategory::kInvalidArgument, "validation score is NaN");
    (s.label == Label::kAbnormal ? positives : negatives)++;
    if (std::isfinite(s.score)) finite.push_back(s.score);
  }
  require(positives > 0 && negatives > 0, ErrorCategory::kInvalidArgument,
          "threshold selection needs validation videos of both labels");
  require(!finite.empty(), ErrorCategory::kInvalidArgument,
          "threshold selection needs at least one finite validation score");
  std::sort(finite.begin(), finite.end(), std::greater<>());
  finite.erase(std::unique(finite.begin(), finite.end()), finite.end());

  std::vector<double> candidates{kInf};
  for (std::size_t i = 0; i + 1 < finite.size(); ++i) {
    candidates.push_back(finite[i] + (finite[i + 1] - finite[i]) / 2.0);
  }
  candidates.push_back(std::nextafter(finite.back(), -kInf));

  // Candidates are in descending order; sensitivity grows as psi falls.
  for (double psi : candidates) {
    int flagged = 0;
    for (const auto& s : validation) {
      if (s.label == Label::kAbnormal && s.score > psi) ++flagged;
    }
    if (static_cast<double>(flagged) / positives >= target_sensitivity) return psi;
  }
  fail(ErrorCategory::kInvalidArgument,
       "target sensitivity is unachievable on the validation scores");
}

std::string_view to_string(UndeterminedPolicy policy) {
  switch (policy) {
    case UndeterminedPolicy::kAbnormal: return "abnormal";
    case UndeterminedPolicy::kNormal: return "normal";
    case UndeterminedPolicy::kExclude: return "exclude";
  }
  return "?";
}

UndeterminedPolicy parse_undetermined_policy(std::string_view text) {
  for (auto p : {UndeterminedPolicy::kAbnormal, UndeterminedPolicy::kNormal,
                 UndeterminedPolicy::kExclude}) {
    if (text == to_string(p)) return p;
  }
  fail(ErrorCategory::kConfig, "unknown undetermined policy '" + std::string(text) + "'");
}

std::vector<DetectedVideo> detect_patches(const detect::DetectorModel& detector,
                                          const std::vector<const VideoRecord*>& records,
                                          const data::FrameSourceFactory& sources,
                                          int patch_size) {
  std::vector<DetectedVideo> out;
  out.reserve(records.size());
  for (const VideoRecord* rec : records) {
    auto source = sources(*rec);
    std::vector<Image> frames;
    frames.reserve(static_cast<std::size_t>(rec->frame_count));
    for (int t = 0; t < rec->frame_count; ++t) frames.push_back(source->frame(t));
    const auto detections = detect::run_detector(detector, frames);
    DetectedVideo video{rec->video_id, rec->label, rec->frame_count, {}};
    for (int t = 0; t < rec->frame_count; ++t) {
      const auto& d = detections[static_cast<std::size_t>(t)];
      if (!d.has_eardrum) continue;
      video.patches.push_back(
          {rec->video_id, t, extract_patch(frames[static_cast<std::size_t>(t)], *d.box, patch_size,
                                           patch_size)});
    }
    out.push_back(std::move(video));
  }
  return out;
}

std::vector<const VideoResult*> AnomalyReport::undetermined() const {
  std::vector<const VideoResult*> out;
  for (const auto& v : videos) {
    if (!v.score) out.push_back(&v);
  }
  return out;
}

AnomalyReport score_detected(const scad::EmbeddingModel& model, const ReferenceIndex& index,
                             const std::vector<DetectedVideo>& videos) {
  AnomalyReport report;
  for (const auto& video : videos) {
    VideoResult result{video.video_id, video.label, static_cast<int>(video.patches.size()),
                       std::nullopt, std::nullopt};
    if (!video.patches.empty()) {
      std::vector<Image> pixels;
      for (const auto& p : video.patches) pixels.push_back(p.pixels);
      const Eigen::MatrixXd e = embed(model, pixels);
      std::vector<double> scores;
      for (Eigen::Index i = 0; i < e.rows(); ++i) {
        const Eigen::VectorXd row = e.row(i).transpose();
        scores.push_back(index.frame_score(row));
        report.frames.push_back(
            {video.video_id, video.patches[static_cast<std::size_t>(i)].frame_index,
             scores.back()});
      }
      result.score = video_score(scores);
    }
    report.videos.push_back(std::move(result));
  }
  return report;
}

void apply_threshold(AnomalyReport& report, double threshold, UndeterminedPolicy policy) {
  require(!std::isnan(threshold), ErrorCategory::kInvalidArgument, "threshold is NaN");
  report.threshold = threshold;
  report.policy = policy;
  for (auto& v : report.videos) {
    if (v.score) {
      v.flagged = *v.score > threshold;
    } else if (policy == UndeterminedPolicy::kExclude) {
      v.flagged = std::nullopt;
    } else {
      v.flagged = policy == UndeterminedPolicy::kAbnormal;
    }
  }
}

std::vector<LabeledScore> labeled_video_scores(const AnomalyReport& report,
                                               UndeterminedPolicy policy) {
  std::vector<LabeledScore> out;
  for (const auto& v : report.videos) {
    if (v.score) {
      out.push_back({*v.score, v.label});
    } else if (policy == UndeterminedPolicy::kAbnormal) {
      out.push_back({kInf, v.label});
    } else if (policy == UndeterminedPolicy::kNormal) {
      out.push_back({-kInf, v.label});
    }
  }
  return out;
}

std::vector<LabeledScore> labeled_video_scores(const AnomalyReport& report) {
  return labeled_video_scores(report, report.policy);
}

namespace {

nlohmann::json encode_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double decode_double(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    fail(ErrorCategory::kData, "bad numeric value '" + s + "' in report");
  }
  return j.get<double>();
}

}  // namespace

void save_report(const AnomalyReport& report, const std::filesystem::path& dir) {
  nlohmann::json j;
  j["schema"] = kReportSchema;
  j["version"] = kReportVersion;
  j["config_hash"] = report.config_hash;
  j["seed"] = report.seed;
  j["threshold"] = encode_double(report.threshold);
  j["undetermined_policy"] = to_string(report.policy);
  j["frame_scores"] = "frame_scores.csv";
  auto& videos = j["videos"] = nlohmann::json::array();
  for (const auto& v : report.videos) {
    videos.push_back({{"video_id", v.video_id},
                      {"label", to_string(v.label)},
                      {"detected_frames", v.detected_frames},
                      {"score", v.score ? nlohmann::json(*v.score) : nlohmann::json(nullptr)},
                      {"undetermined", !v.score.has_value()},
                      {"flagged", v.flagged ? nlohmann::json(*v.flagged) : nlohmann::json(nullptr)}});
  }
  io::write_json(dir / "report.json", j);

  std::string csv = "# config_hash=" + report.config_hash + " seed=" + std::to_string(report.seed) +
                    "\nvideo_id,frame_index,score\n";
  char buf[64];
  for (const auto& f : report.frames) {
    std::snprintf(buf, sizeof buf, ",%d,%.17g\n", f.frame_index, f.score);
    csv += f.video_id + buf;
  }
  io::write_text(dir / "frame_scores.csv", csv);
}

AnomalyReport load_report(const std::filesystem::path& dir) {
  const nlohmann::json j = io::read_json(dir / "report.json");
  AnomalyReport r;
  try {
    require(j.at("schema").get<std::string>() == kReportSchema, ErrorCategory::kData,
            (dir / "report.json").string() + " is not an anomaly report");
    require(j.at("version").get<int>() == kReportVersion, ErrorCategory::kData,
            "unsupported report version");
    r.config_hash = j.at("config_hash").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.threshold = decode_double(j.at("threshold"));
    r.policy = parse_undetermined_policy(j.at("undetermined_policy").get<std::string>());
    for (const auto& v : j.at("videos")) {
      VideoResult res;
      res.video_id = v.at("video_id").get<std::string>();
      res.label = parse_label(v.at("label").get<std::string>());
      res.detected_frames = v.at("detected_frames").get<int>();
      if (!v.at("score").is_null()) res.score = v.at("score").get<double>();
      if (!v.at("flagged").is_null()) res.flagged = v.at("flagged").get<bool>();
      r.videos.push_back(std::move(res));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::kData, (dir / "report.json").string() + ": " + e.what());
  }
  std::istringstream csv(io::read_text(dir / "frame_scores.csv"));
  std::string line;
  bool header = false;
  while (std::getline(csv, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    const auto a = line.find(','), b = line.find(',', a + 1);
    require(a != std::string::npos && b != std::string::npos, ErrorCategory::kData,
            "malformed frame score line: " + line);
    r.frames.push_back({line.substr(0, a), std::stoi(line.substr(a + 1, b - a - 1)),
                        std::strtod(line.c_str() + b + 1, nullptr)});
  }
  return r;
}

ReferenceIndex build_index(const scad::EmbeddingModel& model,
                           const std::vector<data::VideoPatches>& train_patches, int k) {
  std::vector<Image> pixels;
  for (const auto& v : train_patches) {
    for (const auto& p : v.patches) pixels.push_back(p.pixels);
  }
  require(static_cast<int>(pixels.size()) >= k, ErrorCategory::kInvalidArgument,
          "only " + std::to_string(pixels.size()) + " training patches for k = " +
              std::to_string(k));
  return ReferenceIndex(scad::embed(model, pixels), k);
}

void export_embeddings(const scad::EmbeddingModel& model, const std::vector<DetectedVideo>& videos,
                       const std::filesystem::path& path, std::string_view provenance) {
  std::string text;
  if (!provenance.empty()) text += "# " + std::string(provenance) + "\n";
  text += "video_id,frame_index,label";
  for (int j = 0; j < model.dim(); ++j) text += ",e" + std::to_string(j);
  text += "\n";
  char buf[32];
  for (const auto& video : videos) {
    if (video.patches.empty()) continue;
    std::vector<Image> pixels;
    for (const auto& p : video.patches) pixels.push_back(p.pixels);
    const Eigen::MatrixXd e = scad::embed(model, pixels);
    for (Eigen::Index i = 0; i < e.rows(); ++i) {
      text += video.video_id + "," +
              std::to_string(video.patches[static_cast<std::size_t>(i)].frame_index) + "," +
              std::string(to_string(video.label));
      for (Eigen::Index j = 0; j < e.cols(); ++j) {
        std::snprintf(buf, sizeof buf, ",%.9g", e(i, j));
        text += buf;
      }
      text += "\n";
    }
  }
  io::write_text(path, text);
}

}  // namespace otoscad::score
