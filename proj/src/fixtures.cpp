// SPDX-License-Identifier: Apache-2.0
#include "subsearch/fixtures.hpp"

#include <fstream>

#include <fmt/format.h>

#include "subsearch/errors.hpp"

namespace subsearch {
namespace {

constexpr const char* kVocabFormat = "subsearch.vocabulary/1";
constexpr const char* kSceneFormat = "subsearch.scene/1";
constexpr const char* kProjectionFormat = "subsearch.projection/1";

nlohmann::json rows_of(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_of(const nlohmann::json& rows, const char* what) {
  if (!rows.is_array() || rows.empty() || !rows[0].is_array()) {
    throw DomainError(fmt::format("fixture: '{}' must be a non-empty array of rows", what));
  }
  const auto r = static_cast<Eigen::Index>(rows.size());
  const auto c = static_cast<Eigen::Index>(rows[0].size());
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != c) {
      throw DomainError(fmt::format("fixture: '{}' row {} has the wrong length", what, i));
    }
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = row[static_cast<std::size_t>(j)].get<double>();
  }
  return m;
}

nlohmann::json array_of(const Vector& v) { return std::vector<double>(v.begin(), v.end()); }

Vector vector_of(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

void expect_format(const nlohmann::json& j, const char* format) {
  if (!j.is_object() || j.value("format", std::string{}) != format) {
    throw DomainError(fmt::format("fixture: expected format '{}'", format));
  }
}

}  // namespace

nlohmann::json to_json(const VocabularyTable& vocab) {
  return {{"format", kVocabFormat}, {"tokens", vocab.tokens()}, {"embeddings", rows_of(vocab.embeddings())}};
}

nlohmann::json to_json(const SurrogateScene& scene) {
  nlohmann::json images = nlohmann::json::array();
  for (const Vector& y : scene.images) images.push_back(array_of(y));
  return {{"format", kSceneFormat},
          {"schedule", "linear"},
          {"eta", scene.eta},
          {"e_star", array_of(scene.e_star)},
          {"decoder", rows_of(scene.decoder)},
          {"images", std::move(images)},
          {"mixture_tokens", scene.mixture_tokens},
          {"mixture_weights", array_of(scene.mixture_weights)}};
}

nlohmann::json to_json(const Projection& projection) {
  return {{"format", kProjectionFormat},
          {"kind", std::string(to_string(projection.kind))},
          {"provenance", projection.provenance},
          {"weights", rows_of(projection.weights)}};
}

VocabularyTable vocabulary_from_json(const nlohmann::json& j) {
  expect_format(j, kVocabFormat);
  return VocabularyTable(j.at("tokens").get<std::vector<std::string>>(), matrix_of(j.at("embeddings"), "embeddings"));
}

SurrogateScene scene_from_json(const nlohmann::json& j) {
  expect_format(j, kSceneFormat);
  SurrogateScene scene;
  scene.eta = j.at("eta").get<double>();
  scene.e_star = vector_of(j.at("e_star"));
  scene.decoder = matrix_of(j.at("decoder"), "decoder");
  for (const auto& y : j.at("images")) scene.images.push_back(vector_of(y));
  scene.mixture_tokens = j.value("mixture_tokens", std::vector<std::size_t>{});
  if (j.contains("mixture_weights")) scene.mixture_weights = vector_of(j.at("mixture_weights"));
  if (scene.images.empty()) throw EmptyRequestError("fixture: scene has no images");
  if (scene.e_star.size() != scene.decoder.cols()) throw DomainError("fixture: e_star / decoder mismatch");
  for (const Vector& y : scene.images) {
    if (y.size() != scene.decoder.rows()) throw DomainError("fixture: image / decoder mismatch");
  }
  return scene;
}

Projection projection_from_json(const nlohmann::json& j) {
  expect_format(j, kProjectionFormat);
  Projection p;
  p.kind = parse_projection_kind(j.at("kind").get<std::string>());
  p.provenance = j.value("provenance", std::string{});
  p.weights = matrix_of(j.at("weights"), "weights");
  if (!p.weights.allFinite()) throw DomainError("fixture: projection has non-finite entries");
  return p;
}

namespace {
template <typename J>
void save_any(const J& j, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out << j.dump(2) << '\n';
  if (!out) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

}  // namespace

void save_json(const nlohmann::json& j, const std::filesystem::path& path) { save_any(j, path); }
void save_json(const nlohmann::ordered_json& j, const std::filesystem::path& path) { save_any(j, path); }

nlohmann::json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot read '{}'", path.string()));
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& error) {
    throw IoError(fmt::format("'{}': {}", path.string(), error.what()));
  }
}

}  // namespace subsearch
