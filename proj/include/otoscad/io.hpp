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
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace otoscad::io {

/// Throws kMissingArtifact when the file cannot be opened.
std::string read_text(const std::filesystem::path& path);
/// Creates parent directories; throws kIo on failure.
void write_text(const std::filesystem::path& path, std::string_view text);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& value);

inline constexpr const char* kCheckpointSchema = "otoscad.checkpoint";
inline constexpr int kCheckpointVersion = 1;

/// Serialized model: parameters, the configuration that shapes them, and
/// free-form training metadata (seed, epoch, config hash, ...).
struct Checkpoint {
  std::string kind;
  nlohmann::json config;
  std::vector<float> params;
  nlohmann::json metadata = nlohmann::json::object();
  nlohmann::json extra = nlohmann::json::object();
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
/// Verifies schema, version and kind.
Checkpoint load_checkpoint(const std::filesystem::path& path, std::string_view expected_kind);

/// Hex rendering used for hashes in artifacts.
std::string hex64(std::uint64_t value);

}  // namespace otoscad::io
