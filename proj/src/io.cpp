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


#include "otoscad/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "otoscad/error.hpp"

namespace otoscad::io {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::kMissingArtifact, "cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCategory::kIo, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) fail(ErrorCategory::kIo, "short write to " + path.string());
}

nlohmann::json read_json(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::kData, path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& value) {
  write_text(path, value.dump(1) + "\n");
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  nlohmann::json j;
  j["schema"] = kCheckpointSchema;
  j["version"] = kCheckpointVersion;
  j["kind"] = checkpoint.kind;
  j["config"] = checkpoint.config;
  j["metadata"] = checkpoint.metadata;
  j["extra"] = checkpoint.extra;
  j["params"] = checkpoint.params;
  write_text(path, j.dump() + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::string_view expected_kind) {
  const nlohmann::json j = read_json(path);
  Checkpoint out;
  try {
    require(j.at("schema").get<std::string>() == kCheckpointSchema, ErrorCategory::kData,
            path.string() + " is not a checkpoint");
    require(j.at("version").get<int>() == kCheckpointVersion, ErrorCategory::kData,
            path.string() + ": unsupported checkpoint version");
    out.kind = j.at("kind").get<std::string>();
    require(out.kind == expected_kind, ErrorCategory::kData,
            path.string() + ": expected a " + std::string(expected_kind) + " checkpoint, found " +
                out.kind);
    out.config = j.at("config");
    out.metadata = j.at("metadata");
    out.extra = j.value("extra", nlohmann::json::object());
    out.params = j.at("params").get<std::vector<float>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::kData, path.string() + ": " + e.what());
  }
  return out;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace otoscad::io
