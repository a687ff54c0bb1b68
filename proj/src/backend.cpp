#include "kvqa/backend.hpp"

#include <algorithm>
#include <cmath>

#include "kvqa/errors.hpp"

namespace kvqa {

std::string_view to_string(GenerateRole role) noexcept {
    return role == GenerateRole::Question ? "question" : "knowledge";
}

GenerateRole parse_generate_role(std::string_view text) {
    if (text == "question") return GenerateRole::Question;
    if (text == "knowledge") return GenerateRole::Knowledge;
    throw MalformedOutputError("unknown generate model '" + std::string(text) + "'");
}

ModelGateway::ModelGateway(std::shared_ptr<ModelBackend> backend) : backend_(std::move(backend)) {
    if (!backend_) throw ConfigError("ModelGateway: null backend");
}

void ModelGateway::check_dimension(const Embedding& e, std::size_t& slot, const char* what) {
    if (e.empty()) throw MalformedOutputError(std::string(what) + ": empty embedding");
    for (double x : e) {
        if (!std::isfinite(x)) throw MalformedOutputError(std::string(what) + ": non-finite embedding");
    }
    std::lock_guard lock(mutex_);
    if (slot == 0) {
        slot = e.size();
    } else if (slot != e.size()) {
        throw MalformedOutputError(std::string(what) + ": embedding dimension changed from " +
                                   std::to_string(slot) + " to " + std::to_string(e.size()));
    }
}

ScoredAnswer ModelGateway::vlm_answer(const std::string& image_ref, const std::string& prompt,
                                      const GenerationParams& params) {
    if (prompt.empty()) throw DomainError("vlm_answer: empty prompt");
    ScoredAnswer answer = backend_->vlm_answer(image_ref, prompt, params);
    if (answer.token_probs.empty()) throw MalformedOutputError("vlm_answer: no token probabilities");
    for (double p : answer.token_probs) {
        if (!(p > 0.0 && p <= 1.0)) throw MalformedOutputError("vlm_answer: token probability outside (0,1]");
    }
    if (!params.options.empty() &&
        std::find(params.options.begin(), params.options.end(), answer.text) == params.options.end()) {
        throw MalformedOutputError("vlm_answer: '" + answer.text + "' is not one of the allowed options");
    }
    // Recompute rather than trust the backend's aggregate.
    return ScoredAnswer::from_tokens(std::move(answer.text), std::move(answer.token_probs));
}

std::string ModelGateway::vlm_caption(const std::string& image_ref) {
    if (image_ref.empty()) throw BackendError("vlm_caption: empty image reference");
    {
        std::lock_guard lock(mutex_);
        if (auto it = caption_memo_.find(image_ref); it != caption_memo_.end()) return it->second;
    }
    std::string caption = backend_->vlm_caption(image_ref);
    if (caption.empty()) throw MalformedOutputError("vlm_caption: empty caption for " + image_ref);
    std::lock_guard lock(mutex_);
    caption_memo_.emplace(image_ref, caption);
    return caption;
}

Embedding ModelGateway::vlm_encode(const std::string& image_ref, const std::string& question) {
    Embedding e = backend_->vlm_encode(image_ref, question);
    check_dimension(e, encode_dim_, "vlm_encode");
    return e;
}

std::string ModelGateway::generate(GenerateRole role, const std::string& prompt,
                                   const GenerationParams& params) {
    if (prompt.empty()) throw DomainError("generate: empty prompt");
    return backend_->generate(role, prompt, params);
}

Embedding ModelGateway::text_embed(const std::string& text) {
    {
        std::lock_guard lock(mutex_);
        if (auto it = text_memo_.find(text); it != text_memo_.end()) return it->second;
    }
    Embedding e = backend_->text_embed(text);
    check_dimension(e, text_dim_, "text_embed");
    std::lock_guard lock(mutex_);
    text_memo_.emplace(text, e);
    return e;
}

double ModelGateway::image_text_similarity(const std::string& image_ref, const std::string& text) {
    const double s = backend_->image_text_similarity(image_ref, text);
    if (!(s >= 0.0 && s <= 1.0)) throw MalformedOutputError("image_text_similarity: score outside [0,1]");
    return s;
}

EntailmentScores ModelGateway::entail_scores(const std::string& premise, const std::string& hypothesis) {
    const EntailmentScores s = backend_->entail_scores(premise, hypothesis);
    if (!(s.entailment >= 0.0 && s.entailment <= 1.0) || !(s.contradiction >= 0.0 && s.contradiction <= 1.0)) {
        throw MalformedOutputError("entail_scores: score outside [0,1]");
    }
    return s;
}

}  // namespace kvqa
