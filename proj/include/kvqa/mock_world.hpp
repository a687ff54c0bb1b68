#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "kvqa/backend.hpp"
#include "kvqa/domain.hpp"

namespace kvqa {

// A desk-scale world of (subject, relation) -> object facts. The mock models
// read and write facts in fixed sentence forms:
//
//   problem question     relation.question            "Who is this named after?"
//   knowledge question   "What is the {label} of {subject}?"
//   knowledge statement  "The {label} of {subject} is {object}"
struct MockRelation {
    std::string name;
    std::string label;
    std::string question;
};

struct MockSubject {
    std::string name;
    std::string image_ref;
    std::string scene;
};

using FactKey = std::pair<std::string, std::string>;  // (subject, relation)

struct MockWorld {
    std::uint64_t seed = 0;
    std::size_t embedding_dim = 64;
    // Probability that the knowledge model corrupts the object of a fact.
    double knowledge_noise = 0.2;
    // Probability that the knowledge model adds a bulleted side remark.
    double extra_point_rate = 0.25;
    std::vector<MockRelation> relations;
    std::vector<MockSubject> subjects;
    std::map<FactKey, std::string> fact_table;
    std::set<FactKey> vlm_known_facts;

    // Throws DomainError when references dangle or vlm_known_facts is not a
    // subset of the fact table.
    void validate() const;

    const MockRelation* find_relation(const std::string& name) const;
    const MockSubject* find_subject(const std::string& name) const;
};

nlohmann::json to_json(const MockWorld& world);
MockWorld mock_world_from_json(const nlohmann::json& j);
MockWorld load_mock_world(const std::filesystem::path& path);
void save_mock_world(const MockWorld& world, const std::filesystem::path& path);

std::string knowledge_question_text(const MockRelation& relation, const std::string& subject);
std::string knowledge_statement(const MockRelation& relation, const std::string& subject, const std::string& object);

// Deterministic backend over a MockWorld. Every output is a pure function of
// (world, inputs).
//
// VLM answers: a statement about the asked fact in the prompt is followed
// (0.95, correct or misled); otherwise a fact in vlm_known_facts is answered
// correctly (0.9); otherwise a distractor seeded by the prompt is returned
// (0.3).
class MockBackend final : public ModelBackend {
public:
    explicit MockBackend(MockWorld world);

    static constexpr double kPromptedConfidence = 0.95;
    static constexpr double kKnownConfidence = 0.9;
    static constexpr double kGuessConfidence = 0.3;

    ScoredAnswer vlm_answer(const std::string& image_ref, const std::string& prompt,
                            const GenerationParams& params) override;
    std::string vlm_caption(const std::string& image_ref) override;
    Embedding vlm_encode(const std::string& image_ref, const std::string& question) override;
    std::string generate(GenerateRole role, const std::string& prompt, const GenerationParams& params) override;
    Embedding text_embed(const std::string& text) override;
    double image_text_similarity(const std::string& image_ref, const std::string& text) override;
    EntailmentScores entail_scores(const std::string& premise, const std::string& hypothesis) override;

    const MockWorld& world() const noexcept { return world_; }

private:
    const MockSubject& subject_for_ref(const std::string& image_ref) const;
    const MockRelation* relation_in_text(const std::string& text) const;
    std::string pick_object(std::uint64_t key, const std::string& avoid) const;
    Embedding token_vector(const std::string& token) const;
    Embedding bag_of_words(const std::string& text, bool allow_empty = false) const;
    std::string answer_questions(const std::string& prompt) const;
    std::string answer_knowledge_query(const std::string& prompt) const;

    MockWorld world_;
    std::map<std::string, const MockSubject*> by_ref_;
    std::map<std::string, const MockSubject*> by_scene_;
    std::map<std::string, const MockSubject*> by_name_;
    std::vector<const MockRelation*> relations_by_question_length_;
    std::vector<std::string> vocabulary_;
};

// A generated world together with the problems and hand-written seeds that
// exercise it.
struct SeedSample {
    VqaProblem problem;
    std::vector<std::string> knowledge_questions;
};

struct MockCorpus {
    MockWorld world;
    std::vector<VqaProblem> problems;
    std::vector<SeedSample> seeds;
    std::vector<SeedSample> manual_demos;
};

struct MockWorldParams {
    std::uint64_t seed = 7;
    std::size_t n_facts = 1000;
    std::size_t n_problems = 500;
    double vlm_known_fraction = 0.5;
    double noise = 0.2;
    std::size_t embedding_dim = 64;
    double train_fraction = 0.5;
    std::size_t n_seeds = 5;
    std::size_t n_manual_demos = 3;
};

// Throws DomainError unless n_facts >= n_problems >= 1 and fractions lie in
// [0, 1].
MockCorpus generate_mock_world(const MockWorldParams& params);

}  // namespace kvqa
