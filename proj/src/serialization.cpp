#include "kvqa/serialization.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "kvqa/errors.hpp"

namespace kvqa {

nlohmann::json to_json(const VqaProblem& problem) {
    nlohmann::json j;
    j["id"] = problem.id;
    j["image_ref"] = problem.image_ref;
    j["question"] = problem.question;
    j["answers"] = problem.ground_truth;
    if (problem.choices) j["choices"] = *problem.choices;
    if (problem.correct_choice) j["correct_choice"] = *problem.correct_choice;
    j["split"] = std::string(to_string(problem.split));
    return j;
}

VqaProblem problem_from_json(const nlohmann::json& j) {
    VqaProblem p;
    p.id = j.at("id").get<std::string>();
    p.image_ref = j.at("image_ref").get<std::string>();
    p.question = j.at("question").get<std::string>();
    p.ground_truth = j.value("answers", std::vector<std::string>{});
    if (j.contains("choices")) p.choices = j.at("choices").get<std::vector<std::string>>();
    if (j.contains("correct_choice")) p.correct_choice = j.at("correct_choice").get<std::size_t>();
    p.split = parse_split(j.value("split", std::string("train")));
    validate(p);
    return p;
}

nlohmann::json to_json(const ScoredAnswer& answer) {
    return {{"text", answer.text}, {"token_probs", answer.token_probs}, {"confidence", answer.confidence}};
}

ScoredAnswer scored_answer_from_json(const nlohmann::json& j) {
    ScoredAnswer a;
    a.text = j.at("text").get<std::string>();
    a.token_probs = j.at("token_probs").get<std::vector<double>>();
    a.confidence = j.at("confidence").get<double>();
    const double product = sequence_confidence(a.token_probs);
    if (!(std::abs(product - a.confidence) <= 1e-9 * std::max(product, a.confidence))) {
        throw FormatError("scored answer '" + a.text + "': confidence disagrees with token probabilities");
    }
    return a;
}

nlohmann::json to_json(const KnowledgePiece& piece) {
    return {{"text", piece.text}, {"source_question", piece.source_question}, {"ordinal", piece.ordinal}};
}

KnowledgePiece knowledge_piece_from_json(const nlohmann::json& j) {
    KnowledgePiece k{j.at("text").get<std::string>(), j.at("source_question").get<std::string>(),
                     j.at("ordinal").get<std::size_t>()};
    if (k.text.empty()) throw FormatError("empty knowledge piece");
    return k;
}

void expect_format(const nlohmann::json& j, const std::string& format, int version) {
    if (!j.is_object() || !j.contains("format") || !j["format"].is_string() || j["format"] != format) {
        throw FormatError("expected a '" + format + "' document");
    }
    if (!j.contains("version") || !j["version"].is_number_integer() || j["version"].get<int>() != version) {
        throw FormatError("'" + format + "' version mismatch: expected " + std::to_string(version) + ", found " +
                          (j.contains("version") ? j["version"].dump() : std::string("none")));
    }
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write " + tmp.string());
        out << text;
        if (!out) throw ConfigError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace kvqa
