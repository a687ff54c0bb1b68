#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kvqa {

enum class Split { Train, Val, Test };

std::string_view to_string(Split split) noexcept;
Split parse_split(std::string_view text);

// Canonical answer text used for every equality test on answers.
struct AnswerKey {
    std::string normalized;

    bool empty() const noexcept { return normalized.empty(); }
    friend bool operator==(const AnswerKey&, const AnswerKey&) = default;
    friend auto operator<=>(const AnswerKey&, const AnswerKey&) = default;
};

/// Lowercases, trims, collapses internal whitespace, strips terminal
/// punctuation (.,!?) and leading articles ("a", "an", "the").
AnswerKey normalize_answer(std::string_view text);

struct VqaProblem {
    std::string id;
    std::string image_ref;
    std::string question;
    std::vector<std::string> ground_truth;
    std::optional<std::vector<std::string>> choices;
    // Index of the correct option when the source data carries one directly
    // (A-OKVQA); otherwise derived from ground_truth.
    std::optional<std::size_t> correct_choice;
    Split split = Split::Train;

    bool multiple_choice() const noexcept { return choices.has_value(); }

    friend bool operator==(const VqaProblem&, const VqaProblem&) = default;
};

// Throws DomainError if the problem violates its invariants.
void validate(const VqaProblem& problem);

/// Option letter for a zero-based choice index ("a", "b", ...).
std::string choice_letter(std::size_t index);

/// Zero-based option index of a letter, or nullopt if it is not a single
/// letter within [a, a + n_choices).
std::optional<std::size_t> choice_index(std::string_view letter, std::size_t n_choices);

/// Correct option letter of a multiple-choice problem. Throws DomainError if
/// the problem has no choices or no resolvable answer.
std::string correct_letter(const VqaProblem& problem);

/// Product of per-token probabilities, accumulated in log space. The result is
/// floored at exp(-745) rather than reaching zero. Throws DomainError for an
/// empty list or any entry outside (0, 1].
double sequence_confidence(std::span<const double> token_probs);

struct ScoredAnswer {
    std::string text;
    std::vector<double> token_probs;
    double confidence = 0.0;

    // Builds an answer whose confidence is the sequence_confidence of probs.
    static ScoredAnswer from_tokens(std::string text, std::vector<double> probs);

    // Answer whose tokens (whitespace split) share one probability so that the
    // product equals confidence.
    static ScoredAnswer with_confidence(std::string text, double confidence);

    AnswerKey key() const { return normalize_answer(text); }

    friend bool operator==(const ScoredAnswer&, const ScoredAnswer&) = default;
};

struct KnowledgePiece {
    std::string text;
    std::string source_question;
    std::size_t ordinal = 0;

    friend bool operator==(const KnowledgePiece&, const KnowledgePiece&) = default;
};

/// True iff pred matches any ground-truth entry after normalization. An empty
/// key never matches.
bool matches_any(const AnswerKey& pred, std::span<const std::string> ground_truth);

/// min(#matching ground-truth entries / 3, 1). Throws EvaluationError when
/// ground_truth is empty.
double soft_accuracy(const AnswerKey& pred, std::span<const std::string> ground_truth);

/// Direct-answer score: exact match for a single reference answer, soft
/// accuracy otherwise.
double direct_answer_score(const AnswerKey& pred, std::span<const std::string> ground_truth);

struct ChoiceScore {
    double score = 0.0;
    bool malformed = false;
};

/// 1 iff the letters agree (case-insensitive). A prediction outside the option
/// range scores 0 and is flagged malformed.
ChoiceScore exact_choice_match(std::string_view pred, std::string_view gt, std::size_t n_choices);

}  // namespace kvqa
