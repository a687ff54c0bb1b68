#pragma once

#include <string>
#include <vector>

#include "kvqa/backend.hpp"
#include "kvqa/domain.hpp"
#include "kvqa/templates.hpp"

namespace kvqa {

enum class AnswerMode { Direct, MultipleChoice };

std::string_view to_string(AnswerMode mode) noexcept;
AnswerMode parse_answer_mode(std::string_view text);

// The original answer plus one knowledge-conditioned answer per knowledge
// piece, aligned by ordinal.
struct PredictionBundle {
    ScoredAnswer original;
    std::vector<ScoredAnswer> knowledge_answers;
};

// Answers questions with the vision-language model, with or without a piece of
// knowledge in the prompt.
class AnswerPredictor {
public:
    AnswerPredictor(ModelGateway& gateway, const PromptTemplates& templates, AnswerMode mode);

    // Question text as shown to the VLM; in multiple-choice mode the options
    // are appended as "Options: (a) x; (b) y; (c) z."
    std::string question_text(const VqaProblem& problem) const;

    ScoredAnswer predict_original(const VqaProblem& problem) const;
    ScoredAnswer predict_with_knowledge(const VqaProblem& problem, const KnowledgePiece& knowledge) const;
    PredictionBundle predict_all(const VqaProblem& problem, const std::vector<KnowledgePiece>& knowledge) const;

    AnswerMode mode() const noexcept { return mode_; }

private:
    GenerationParams params_for(const VqaProblem& problem) const;

    ModelGateway& gateway_;
    const PromptTemplates& templates_;
    AnswerMode mode_;
};

/// Fills the knowledge-answer template with one knowledge statement and the
/// question. A trailing period on the statement is dropped so the template's
/// own delimiter is not doubled. Throws DomainError on empty inputs.
std::string render_knowledge_prompt(const PromptTemplates& templates, const std::string& knowledge,
                                    const std::string& question);

}  // namespace kvqa
