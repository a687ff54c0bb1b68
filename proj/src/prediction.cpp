#include "kvqa/prediction.hpp"

#include "kvqa/errors.hpp"

namespace kvqa {

std::string_view to_string(AnswerMode mode) noexcept {
    return mode == AnswerMode::Direct ? "direct" : "multiple_choice";
}

AnswerMode parse_answer_mode(std::string_view text) {
    if (text == "direct") return AnswerMode::Direct;
    if (text == "multiple_choice" || text == "mc") return AnswerMode::MultipleChoice;
    throw ConfigError("unknown answer mode '" + std::string(text) + "'");
}

std::string render_knowledge_prompt(const PromptTemplates& templates, const std::string& knowledge,
                                    const std::string& question) {
    if (knowledge.empty()) throw DomainError("render_knowledge_prompt: empty knowledge");
    if (question.empty()) throw DomainError("render_knowledge_prompt: empty question");
    std::string statement = knowledge;
    if (statement.back() == '.') statement.pop_back();
    return render_template(templates.knowledge_answer, {{"knowledge", statement}, {"question", question}});
}

AnswerPredictor::AnswerPredictor(ModelGateway& gateway, const PromptTemplates& templates, AnswerMode mode)
    : gateway_(gateway), templates_(templates), mode_(mode) {}

std::string AnswerPredictor::question_text(const VqaProblem& problem) const {
    if (mode_ != AnswerMode::MultipleChoice) return problem.question;
    if (!problem.choices) {
        throw DomainError("problem " + problem.id + " has no choices for multiple-choice mode");
    }
    std::string text = problem.question + " Options:";
    for (std::size_t i = 0; i < problem.choices->size(); ++i) {
        text += (i == 0 ? " (" : "; (") + choice_letter(i) + ") " + (*problem.choices)[i];
    }
    return text + ".";
}

GenerationParams AnswerPredictor::params_for(const VqaProblem& problem) const {
    GenerationParams params;
    if (mode_ == AnswerMode::MultipleChoice && problem.choices) {
        for (std::size_t i = 0; i < problem.choices->size(); ++i) params.options.push_back(choice_letter(i));
        params.max_tokens = 1;
    } else {
        params.max_tokens = 10;
    }
    return params;
}

ScoredAnswer AnswerPredictor::predict_original(const VqaProblem& problem) const {
    if (problem.image_ref.empty() || problem.question.empty()) {
        throw DomainError("predict_original: problem " + problem.id + " lacks image or question");
    }
    const std::string prompt = render_template(templates_.answer, {{"question", question_text(problem)}});
    return gateway_.vlm_answer(problem.image_ref, prompt, params_for(problem));
}

ScoredAnswer AnswerPredictor::predict_with_knowledge(const VqaProblem& problem,
                                                     const KnowledgePiece& knowledge) const {
    const std::string prompt = render_knowledge_prompt(templates_, knowledge.text, question_text(problem));
    return gateway_.vlm_answer(problem.image_ref, prompt, params_for(problem));
}

PredictionBundle AnswerPredictor::predict_all(const VqaProblem& problem,
                                              const std::vector<KnowledgePiece>& knowledge) const {
    PredictionBundle bundle{predict_original(problem), {}};
    bundle.knowledge_answers.reserve(knowledge.size());
    for (const auto& piece : knowledge) bundle.knowledge_answers.push_back(predict_with_knowledge(problem, piece));
    return bundle;
}

}  // namespace kvqa
