#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "kvqa/domain.hpp"

namespace kvqa {

nlohmann::json to_json(const VqaProblem& problem);
VqaProblem problem_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ScoredAnswer& answer);
// Validates probabilities and the confidence/product agreement (relative 1e-9).
ScoredAnswer scored_answer_from_json(const nlohmann::json& j);

nlohmann::json to_json(const KnowledgePiece& piece);
KnowledgePiece knowledge_piece_from_json(const nlohmann::json& j);

// Checks a {"format", "version"} header and throws FormatError on mismatch.
void expect_format(const nlohmann::json& j, const std::string& format, int version);

// Whole-file helpers. write_text_file replaces the file atomically.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace kvqa
