#include "kvqa/domain.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include <spdlog/spdlog.h>

#include "kvqa/errors.hpp"

namespace kvqa {

namespace {

constexpr double kLogFloor = -745.0;

bool is_space(char c) noexcept { return std::isspace(static_cast<unsigned char>(c)) != 0; }

}  // namespace

std::string_view to_string(Split split) noexcept {
    switch (split) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "train";
}

Split parse_split(std::string_view text) {
    if (text == "train") return Split::Train;
    if (text == "val" || text == "validation") return Split::Val;
    if (text == "test") return Split::Test;
    throw DomainError("unknown split '" + std::string(text) + "'");
}

AnswerKey normalize_answer(std::string_view text) {
    std::string collapsed;
    collapsed.reserve(text.size());
    bool pending_space = false;
    for (char c : text) {
        if (is_space(c)) {
            pending_space = !collapsed.empty();
            continue;
        }
        if (pending_space) collapsed.push_back(' ');
        pending_space = false;
        collapsed.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    // Stripping punctuation can expose trailing whitespace and vice versa.
    auto strip_tail = [&] {
        while (!collapsed.empty()) {
            const char c = collapsed.back();
            if (c == '.' || c == ',' || c == '!' || c == '?' || c == ' ') {
                collapsed.pop_back();
            } else {
                break;
            }
        }
    };
    strip_tail();
    // Repeated so that the result is a fixed point ("the the dog" -> "dog").
    for (bool stripped = true; stripped;) {
        stripped = false;
        for (std::string_view article : {"a ", "an ", "the "}) {
            if (collapsed.size() > article.size() && collapsed.starts_with(article)) {
                collapsed.erase(0, article.size());
                strip_tail();
                stripped = true;
                break;
            }
        }
    }
    return AnswerKey{std::move(collapsed)};
}

void validate(const VqaProblem& problem) {
    if (problem.id.empty()) throw DomainError("problem id is empty");
    if (problem.question.empty()) throw DomainError("problem " + problem.id + ": question is empty");
    if (!problem.choices) {
        if (problem.correct_choice) {
            throw DomainError("problem " + problem.id + ": correct_choice without choices");
        }
        return;
    }
    const auto& choices = *problem.choices;
    if (choices.size() < 2 || choices.size() > 26) {
        throw DomainError("problem " + problem.id + ": choices must number 2-26");
    }
    if (problem.correct_choice) {
        if (*problem.correct_choice >= choices.size()) {
            throw DomainError("problem " + problem.id + ": correct_choice out of range");
        }
        return;
    }
    for (const auto& gt : problem.ground_truth) {
        const AnswerKey key = normalize_answer(gt);
        const auto hits = std::count_if(choices.begin(), choices.end(),
                                        [&](const std::string& c) { return normalize_answer(c) == key; });
        if (hits != 1) {
            throw DomainError("problem " + problem.id + ": ground truth '" + gt +
                              "' must match exactly one choice");
        }
    }
}

std::string choice_letter(std::size_t index) {
    if (index >= 26) throw DomainError("choice index out of range");
    return std::string(1, static_cast<char>('a' + index));
}

std::optional<std::size_t> choice_index(std::string_view letter, std::size_t n_choices) {
    if (letter.size() != 1) return std::nullopt;
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(letter[0])));
    if (c < 'a' || c > 'z') return std::nullopt;
    const auto idx = static_cast<std::size_t>(c - 'a');
    if (idx >= n_choices) return std::nullopt;
    return idx;
}

std::string correct_letter(const VqaProblem& problem) {
    if (!problem.choices) throw DomainError("problem " + problem.id + " has no choices");
    if (problem.correct_choice) return choice_letter(*problem.correct_choice);
    if (problem.ground_truth.empty()) {
        throw DomainError("problem " + problem.id + " has no ground truth");
    }
    const AnswerKey key = normalize_answer(problem.ground_truth.front());
    const auto& choices = *problem.choices;
    for (std::size_t i = 0; i < choices.size(); ++i) {
        if (normalize_answer(choices[i]) == key) return choice_letter(i);
    }
    throw DomainError("problem " + problem.id + ": ground truth matches no choice");
}

double sequence_confidence(std::span<const double> token_probs) {
    if (token_probs.empty()) throw DomainError("sequence_confidence: empty token list");
    double log_sum = 0.0;
    for (double p : token_probs) {
        if (!(p > 0.0 && p <= 1.0)) {
            throw DomainError("sequence_confidence: probability outside (0,1]");
        }
        log_sum += std::log(p);
    }
    return std::exp(std::max(log_sum, kLogFloor));
}

ScoredAnswer ScoredAnswer::from_tokens(std::string text, std::vector<double> probs) {
    const double conf = sequence_confidence(probs);
    return ScoredAnswer{std::move(text), std::move(probs), conf};
}

ScoredAnswer ScoredAnswer::with_confidence(std::string text, double confidence) {
    if (!(confidence > 0.0 && confidence <= 1.0)) {
        throw DomainError("ScoredAnswer: confidence outside (0,1]");
    }
    std::size_t tokens = 0;
    std::istringstream in(text);
    for (std::string tok; in >> tok;) ++tokens;
    tokens = std::max<std::size_t>(tokens, 1);
    const double per_token = std::pow(confidence, 1.0 / static_cast<double>(tokens));
    return from_tokens(std::move(text), std::vector<double>(tokens, per_token));
}

bool matches_any(const AnswerKey& pred, std::span<const std::string> ground_truth) {
    if (pred.empty()) return false;
    return std::any_of(ground_truth.begin(), ground_truth.end(),
                       [&](const std::string& gt) { return normalize_answer(gt) == pred; });
}

double soft_accuracy(const AnswerKey& pred, std::span<const std::string> ground_truth) {
    if (ground_truth.empty()) throw EvaluationError("soft_accuracy: empty ground truth");
    if (pred.empty()) return 0.0;
    const auto matches = std::count_if(ground_truth.begin(), ground_truth.end(),
                                       [&](const std::string& gt) { return normalize_answer(gt) == pred; });
    return std::min(static_cast<double>(matches) / 3.0, 1.0);
}

double direct_answer_score(const AnswerKey& pred, std::span<const std::string> ground_truth) {
    if (ground_truth.size() == 1) {
        return (!pred.empty() && normalize_answer(ground_truth.front()) == pred) ? 1.0 : 0.0;
    }
    return soft_accuracy(pred, ground_truth);
}

ChoiceScore exact_choice_match(std::string_view pred, std::string_view gt, std::size_t n_choices) {
    const auto p = choice_index(pred, n_choices);
    if (!p) {
        spdlog::warn("malformed option prediction '{}' for {} choices", pred, n_choices);
        return ChoiceScore{0.0, true};
    }
    const auto g = choice_index(gt, n_choices);
    return ChoiceScore{(g && *g == *p) ? 1.0 : 0.0, false};
}

}  // namespace kvqa
