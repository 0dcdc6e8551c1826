// SPDX-License-Identifier: Apache-2.0
//
// Plain-JSON fixture format for vocabularies, scenes and projections. Matrices are
// arrays of rows; numbers are written with round-trip precision.
#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "subsearch/objectives.hpp"
#include "subsearch/subspace.hpp"

namespace subsearch {

nlohmann::json to_json(const VocabularyTable& vocab);
nlohmann::json to_json(const SurrogateScene& scene);
nlohmann::json to_json(const Projection& projection);

VocabularyTable vocabulary_from_json(const nlohmann::json& j);
SurrogateScene scene_from_json(const nlohmann::json& j);
Projection projection_from_json(const nlohmann::json& j);

void save_json(const nlohmann::json& j, const std::filesystem::path& path);
void save_json(const nlohmann::ordered_json& j, const std::filesystem::path& path);
nlohmann::json load_json(const std::filesystem::path& path);

}  // namespace subsearch
