#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "kvqa/backend.hpp"
#include "kvqa/domain.hpp"
#include "kvqa/templates.hpp"

namespace kvqa {

// One in-context demonstration for the question model: the demo image's
// caption, its question and the knowledge questions that were asked for it.
struct Demo {
    std::string id;
    std::string caption;
    std::string question;
    std::vector<std::string> knowledge_questions;
};

struct QuestionSet {
    std::vector<std::string> questions;
    std::vector<std::string> demo_ids;
    // Set when the question model produced nothing usable twice in a row; the
    // problem is then answered without knowledge.
    bool degraded = false;
};

struct KnowledgeSet {
    std::vector<KnowledgePiece> pieces;
};

struct GenerationLimits {
    std::size_t max_questions = 5;
    std::size_t max_pieces = 10;
};

std::string render_question_prompt(const PromptTemplates& templates, const std::vector<Demo>& demos,
                                   const std::string& caption, const std::string& question);

std::string render_knowledge_query(const PromptTemplates& templates, const QuestionSet& questions);

// Splits a numbered or bulleted model response into at most `limit` entries,
// markers removed. Exposed for the question parser and for tests.
std::vector<std::string> split_lines_without_markers(const std::string& raw, std::size_t limit);

// Splits a points-style response into knowledge pieces. Numbered markers
// ("2.", "2)") attribute what follows to that question (clamped to the
// question count); bullets and unmarked lines stay with the most recent
// question, starting from the first.
KnowledgeSet parse_points(const std::string& raw, const QuestionSet& questions, std::size_t max_pieces);

class KnowledgeGenerator {
public:
    KnowledgeGenerator(ModelGateway& gateway, const PromptTemplates& templates, GenerationLimits limits);

    // The prompt carries captions and questions only, never candidate answers.
    QuestionSet generate_questions(const std::string& caption, const std::string& question,
                                   const std::vector<Demo>& demos) const;

    KnowledgeSet generate_knowledge(const QuestionSet& questions) const;

    const GenerationLimits& limits() const noexcept { return limits_; }

private:
    ModelGateway& gateway_;
    const PromptTemplates& templates_;
    GenerationLimits limits_;
};

}  // namespace kvqa
