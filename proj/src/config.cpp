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

#include "otoscad/config.hpp"

#include <algorithm>
#include <functional>
#include <set>
#include <utility>

#include "otoscad/error.hpp"
#include "otoscad/io.hpp"
#include "otoscad/rng.hpp"

namespace otoscad::config {

using nlohmann::json;

std::string_view to_string(EmbeddingInit init) {
  switch (init) {
    case EmbeddingInit::kScratch: return "scratch";
    case EmbeddingInit::kDetector: return "detector";
  }
  return "?";
}

EmbeddingInit parse_embedding_init(std::string_view text) {
  if (text == "scratch") return EmbeddingInit::kScratch;
  if (text == "detector") return EmbeddingInit::kDetector;
  fail(ErrorCategory::kConfig, "unknown embedding init '" + std::string(text) + "'");
}

namespace {

// Serialization walks the same field list in both directions, so the two
// can never drift apart.

class Writer {
 public:
  json result = json::object();

  void section(const char* name, const std::function<void()>& body) {
    json* parent = current_;
    json child = json::object();
    current_ = &child;
    body();
    current_ = parent;
    (*current_)[name] = std::move(child);
  }
  template <class T>
  void field(const char* name, T& value) {
    (*current_)[name] = value;
  }
  template <class E, class ToString, class Parse>
  void enumeration(const char* name, E& value, ToString to_text, Parse) {
    (*current_)[name] = std::string(to_text(value));
  }

 private:
  json* current_ = &result;
};

class Reader {
 public:
  explicit Reader(const json& root) { push(root, ""); }

  void section(const char* name, const std::function<void()>& body) {
    const json* child = take(name);
    if (child == nullptr) return;
    if (!child->is_object()) bad_type(name, "an object");
    push(*child, path(name) + ".");
    body();
    pop();
  }

  void field(const char* name, bool& value) {
    if (const json* v = take(name)) {
      if (!v->is_boolean()) bad_type(name, "a boolean");
      value = v->get<bool>();
    }
  }
  void field(const char* name, int& value) {
    if (const json* v = take(name)) {
      if (!v->is_number_integer()) bad_type(name, "an integer");
      const auto wide = v->get<std::int64_t>();
      require(wide >= std::numeric_limits<int>::min() && wide <= std::numeric_limits<int>::max(),
              ErrorCategory::kConfig, "config key '" + path(name) + "' is out of range");
      value = static_cast<int>(wide);
    }
  }
  void field(const char* name, std::uint64_t& value) {
    if (const json* v = take(name)) {
      if (!non_negative_integer(*v)) bad_type(name, "a non-negative integer");
      value = v->get<std::uint64_t>();
    }
  }
  void field(const char* name, double& value) {
    if (const json* v = take(name)) {
      if (!v->is_number()) bad_type(name, "a number");
      value = v->get<double>();
    }
  }
  void field(const char* name, std::string& value) {
    if (const json* v = take(name)) {
      if (!v->is_string()) bad_type(name, "a string");
      value = v->get<std::string>();
    }
  }
  template <class T>
  void field(const char* name, std::vector<T>& value) {
    if (const json* v = take(name)) {
      if (!v->is_array()) bad_type(name, "an array");
      std::vector<T> out;
      for (const auto& item : *v) {
        if constexpr (std::is_same_v<T, std::string>) {
          if (!item.is_string()) bad_type(name, "an array of strings");
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
          if (!non_negative_integer(item)) bad_type(name, "an array of non-negative integers");
        } else if constexpr (std::is_integral_v<T>) {
          if (!item.is_number_integer()) bad_type(name, "an array of integers");
        } else {
          if (!item.is_number()) bad_type(name, "an array of numbers");
        }
        out.push_back(item.get<T>());
      }
      value = std::move(out);
    }
  }
  template <class E, class ToString, class Parse>
  void enumeration(const char* name, E& value, ToString, Parse parse) {
    std::string text;
    if (peek(name) == nullptr) return;
    field(name, text);
    try {
      value = parse(text);
    } catch (const Error& e) {
      fail(ErrorCategory::kConfig, "config key '" + path(name) + "': " + e.what());
    }
  }

  void finish() { pop(); }

 private:
  struct Frame {
    const json* object;
    std::string prefix;
    std::set<std::string> seen;
  };
  std::vector<Frame> stack_;

  void push(const json& object, std::string prefix) {
    require(object.is_object(), ErrorCategory::kConfig, "config root must be a JSON object");
    stack_.push_back({&object, std::move(prefix), {}});
  }
  void pop() {
    const Frame& f = stack_.back();
    for (const auto& [key, _] : f.object->items()) {
      require(f.seen.contains(key), ErrorCategory::kConfig,
              "unknown config key '" + f.prefix + key + "'");
    }
    stack_.pop_back();
  }
  const json* peek(const char* name) const {
    const auto it = stack_.back().object->find(name);
    return it == stack_.back().object->end() ? nullptr : &*it;
  }
  const json* take(const char* name) {
    const json* v = peek(name);
    if (v != nullptr) stack_.back().seen.insert(name);
    return v;
  }
  std::string path(const char* name) const { return stack_.back().prefix + name; }
  static bool non_negative_integer(const json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
  }
  [[noreturn]] void bad_type(const char* name, const char* expected) const {
    fail(ErrorCategory::kConfig, "config key '" + path(name) + "' must be " + expected);
  }
};

template <class V>
void visit_jitter(V& v, shift::ColorJitterParams& j) {
  v.field("brightness", j.brightness);
  v.field("contrast", j.contrast);
  v.field("saturation", j.saturation);
  v.field("hue", j.hue);
}

template <class V>
void visit_backbone(V& v, nn::BackboneConfig& b) {
  v.field("input_size", b.input_size);
  v.field("stem_channels", b.stem_channels);
  v.field("stage_channels", b.stage_channels);
}

template <class V>
void visit(V& v, RunConfig& c) {
  v.field("seed", c.seed);
  v.field("out", c.out);

  v.section("synth", [&] {
    auto& s = c.synth;
    v.section("counts", [&] {
      for (Split split : kAllSplits) {
        v.section(std::string(to_string(split)).c_str(), [&] {
          for (Label label : kAllLabels) {
            v.field(std::string(to_string(label)).c_str(), s.counts.at(split, label));
          }
        });
      }
    });
    v.field("frames_per_video", s.frames_per_video);
    v.field("image_size", s.image_size);
    v.field("min_diameter", s.min_diameter);
    v.field("max_diameter", s.max_diameter);
    v.field("walk_step", s.walk_step);
    v.field("negative_fraction", s.negative_fraction);
    v.field("min_fps", s.min_fps);
    v.field("max_fps", s.max_fps);
    v.enumeration("anomaly_kind", s.anomaly_kind,
                  [](synth::AnomalyKind k) { return synth::to_string(k); },
                  [](std::string_view t) { return synth::parse_anomaly_kind(t); });
    v.field("anomaly_magnitude", s.anomaly_magnitude);
    v.field("min_region", s.min_region);
    v.field("max_region", s.max_region);
  });

  v.section("detector", [&] {
    auto& d = c.detector;
    v.section("model", [&] {
      visit_backbone(v, d.model.backbone);
      v.field("hidden", d.model.hidden);
      v.field("presence_cutoff", d.model.presence_cutoff);
    });
    v.section("train", [&] {
      auto& t = d.train;
      v.field("epochs", t.epochs);
      v.field("learning_rate", t.learning_rate);
      v.field("momentum", t.momentum);
      v.field("weight_decay", t.weight_decay);
      v.field("batch_size", t.batch_size);
      v.field("resize_ratio", t.resize_ratio);
      v.field("augment", t.augment);
      v.section("jitter", [&] { visit_jitter(v, t.jitter); });
      v.field("jitter_all", t.jitter_all);
      v.field("max_rotation_degrees", t.max_rotation_degrees);
      v.field("max_shear", t.max_shear);
      v.field("cutout_fraction", t.cutout_fraction);
    });
    v.field("iou_thresholds", d.iou_thresholds);
  });

  v.section("scad", [&] {
    auto& s = c.scad;
    v.section("model", [&] {
      visit_backbone(v, s.model.backbone);
      v.field("embed_dim", s.model.embed_dim);
      v.enumeration("init", s.init, [](EmbeddingInit i) { return to_string(i); },
                    [](std::string_view t) { return parse_embedding_init(t); });
    });
    v.field("patch_size", s.patch_size);
    v.section("train", [&] {
      auto& t = s.train;
      v.field("epochs", t.epochs);
      v.field("learning_rate", t.learning_rate);
      v.field("momentum", t.momentum);
      v.field("weight_decay", t.weight_decay);
      v.field("batch_size", t.batch_size);
      v.field("temperature", t.temperature);
      v.field("trainable_blocks", t.trainable_blocks);
      v.field("shift_after_augment", t.shift_after_augment);
      v.field("center_refresh", t.center_refresh);
      v.section("augment", [&] {
        auto& a = t.augment;
        v.field("enabled", a.enabled);
        v.field("crop_size", a.crop_size);
        v.field("min_scale", a.min_scale);
        v.field("max_scale", a.max_scale);
        v.field("min_ratio", a.min_ratio);
        v.field("max_ratio", a.max_ratio);
        v.field("flip", a.flip);
      });
    });
    v.section("shift", [&] {
      auto& sh = s.shift;
      v.section("jitter", [&] { visit_jitter(v, sh.jitter); });
      v.section("rect", [&] {
        v.field("min_area", sh.rect.min_area);
        v.field("max_area", sh.rect.max_area);
        v.field("min_aspect", sh.rect.min_aspect);
        v.field("max_aspect", sh.rect.max_aspect);
      });
      v.section("region", [&] {
        v.field("points", sh.region.points);
        v.field("sigma_fraction", sh.region.sigma_fraction);
      });
    });
  });

  v.section("scoring", [&] {
    v.field("k", c.scoring.k);
    v.field("target_sensitivity", c.scoring.target_sensitivity);
    v.enumeration("undetermined", c.scoring.undetermined,
                  [](score::UndeterminedPolicy p) { return score::to_string(p); },
                  [](std::string_view t) { return score::parse_undetermined_policy(t); });
  });

  v.section("matrix", [&] {
    auto& m = c.matrix;
    v.field("methods", m.methods);
    v.field("seeds", m.seeds);
    v.field("ablation", m.ablation);
    v.field("ablation_shift", m.ablation_shift);
    v.field("null_set", m.null_set);
    v.field("null_test_videos", m.null_test_videos);
  });
}

void check(bool condition, const std::string& message) {
  require(condition, ErrorCategory::kConfig, message);
}

}  // namespace

void RunConfig::validate() const {
  check(!out.empty(), "out must not be empty");
  synth.validate();
  detector.train.validate();
  check(detector.model.backbone.input_size >= 16, "detector.model.input_size must be >= 16");
  check(detector.model.backbone.stem_channels > 0 && !detector.model.backbone.stage_channels.empty(),
        "detector.model needs a stem and at least one stage");
  check(detector.model.hidden > 0, "detector.model.hidden must be positive");
  check(detector.model.presence_cutoff > 0 && detector.model.presence_cutoff < 1,
        "detector.model.presence_cutoff must lie in (0, 1)");
  check(!detector.iou_thresholds.empty(), "detector.iou_thresholds must not be empty");
  for (double t : detector.iou_thresholds) {
    check(t > 0 && t < 1, "detector.iou_thresholds must lie in (0, 1)");
  }
  for (const auto* b : {&detector.model.backbone, &scad.model.backbone}) {
    for (int ch : b->stage_channels) check(ch > 0, "stage channels must be positive");
  }

  check(scad.patch_size >= 8, "scad.patch_size must be >= 8");
  check(scad.model.embed_dim >= 0, "scad.model.embed_dim must be >= 0");
  check(scad.model.backbone.stem_channels > 0 && !scad.model.backbone.stage_channels.empty(),
        "scad.model needs a stem and at least one stage");
  scad.train.validate();
  check(scad.train.augment.crop_size == scad.model.backbone.input_size,
        "scad.train.augment.crop_size must equal scad.model.input_size");
  if (scad.init == EmbeddingInit::kDetector) {
    check(scad.model.backbone.stem_channels == detector.model.backbone.stem_channels &&
              scad.model.backbone.stage_channels == detector.model.backbone.stage_channels,
          "scad.model.init 'detector' needs the detector's stem and stage channels");
  }
  scad.shift.validate();

  check(scoring.k >= 1, "scoring.k must be >= 1");
  check(scoring.target_sensitivity >= 0 && scoring.target_sensitivity <= 1,
        "scoring.target_sensitivity must lie in [0, 1]");

  check(!matrix.methods.empty(), "matrix.methods must not be empty");
  for (const auto& m : matrix.methods) method_spec(m);
  check(!matrix.seeds.empty(), "matrix.seeds must not be empty");
  std::set<std::uint64_t> unique(matrix.seeds.begin(), matrix.seeds.end());
  check(unique.size() == matrix.seeds.size(), "matrix.seeds must be distinct");
  try {
    shift::parse_shift_kind(matrix.ablation_shift);
  } catch (const Error& e) {
    fail(ErrorCategory::kConfig, std::string("matrix.ablation_shift: ") + e.what());
  }
  check(matrix.null_test_videos >= 1, "matrix.null_test_videos must be >= 1");
}

RunConfig paper_defaults() {
  RunConfig c;
  c.detector.model.backbone.input_size = 224;
  c.scad.model.backbone.input_size = 224;
  c.scad.patch_size = 224;
  c.scad.train.augment.crop_size = 224;
  return c;
}

RunConfig desk_preset() {
  RunConfig c;
  c.out = "run";
  c.synth.anomaly_magnitude = 0.4;

  auto& d = c.detector;
  d.model.backbone = {48, 8, {16, 32, 32}};
  d.model.hidden = 64;
  d.train.epochs = 150;
  d.train.learning_rate = 0.03;
  d.train.batch_size = 32;
  d.train.jitter = {0.4, 0.4, 0.9, 0.5};
  d.train.jitter_all = true;

  auto& s = c.scad;
  s.patch_size = 32;
  s.model.backbone = {32, 8, {16, 32}};
  s.model.embed_dim = 32;
  s.init = EmbeddingInit::kScratch;
  s.train.epochs = 500;
  s.train.learning_rate = 1e-3;
  s.train.batch_size = 20;
  s.train.trainable_blocks = 0;
  s.train.augment.crop_size = 32;
  s.shift.jitter = {0.4, 0.4, 0.9, 0.3};

  c.matrix.null_test_videos = 100;
  return c;
}

RunConfig preset(std::string_view name) {
  if (name == "desk") return desk_preset();
  if (name == "paper") return paper_defaults();
  fail(ErrorCategory::kConfig, "unknown preset '" + std::string(name) + "' (expected desk or paper)");
}

json to_json(const RunConfig& config) {
  RunConfig copy = config;
  Writer w;
  visit(w, copy);
  return w.result;
}

RunConfig from_json(const json& j) {
  RunConfig c = paper_defaults();
  Reader r(j);
  visit(r, c);
  r.finish();
  c.validate();
  return c;
}

RunConfig load(const std::filesystem::path& path) { return from_json(io::read_json(path)); }

void save(const RunConfig& config, const std::filesystem::path& path) {
  io::write_json(path, to_json(config));
}

std::string config_hash(const RunConfig& config) {
  json j = to_json(config);
  j.erase("out");
  return io::hex64(fnv1a64(j.dump()));
}

MethodSpec method_spec(std::string_view method) {
  if (method == "msc") return {"msc", scad::Objective::kMscAngular, std::nullopt};
  try {
    return {std::string(method), scad::Objective::kMscShiftAngular, shift::parse_shift_kind(method)};
  } catch (const Error&) {
    fail(ErrorCategory::kConfig,
         "unknown method '" + std::string(method) + "' (expected msc, cj-rc, cj-rr or cj-wf)");
  }
}

MethodSpec ablation_spec(std::string_view objective, const RunConfig& config) {
  const scad::Objective o = scad::parse_objective(objective);
  MethodSpec spec{"ablation-" + std::string(objective), o, std::nullopt};
  if (scad::uses_shifted(o)) spec.shift = shift::parse_shift_kind(config.matrix.ablation_shift);
  return spec;
}

scad::ScadTrainParams train_params(const RunConfig& config, const MethodSpec& method) {
  scad::ScadTrainParams p = config.scad.train;
  p.objective = method.objective;
  return p;
}

std::optional<shift::ShiftVariant> shift_variant(const RunConfig& config, const MethodSpec& method) {
  if (!method.shift) return std::nullopt;
  shift::ShiftVariant v = config.scad.shift;
  v.kind = *method.shift;
  return v;
}

}  // namespace otoscad::config
