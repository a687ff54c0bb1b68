#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kvqa/domain.hpp"
#include "kvqa/knowledge_gen.hpp"
#include "kvqa/prediction.hpp"
#include "kvqa/vector_math.hpp"

namespace kvqa {

struct UsefulHarmful {
    std::size_t useful = 0;
    std::size_t harmful = 0;

    friend bool operator==(const UsefulHarmful&, const UsefulHarmful&) = default;
};

/// u counts knowledge answers that fix a wrong original answer, h those that
/// break a correct one. An answer is correct when it matches any reference.
UsefulHarmful count_useful_harmful(const ScoredAnswer& original, std::span<const ScoredAnswer> knowledge_answers,
                                   std::span<const std::string> references);

/// Reference answers used for correctness: ground truth in direct mode, the
/// correct option letter in multiple-choice mode.
std::vector<std::string> reference_answers(const VqaProblem& problem, AnswerMode mode);

struct DemoBankEntry {
    Embedding embedding;
    VqaProblem problem;
    std::string caption;
    std::vector<std::string> knowledge_questions;
    std::vector<KnowledgePiece> knowledge;
    ScoredAnswer original_answer;
    std::vector<ScoredAnswer> knowledge_answers;
    std::size_t harmful = 0;  // h
    std::size_t useful = 0;   // u

    const std::string& id() const noexcept { return problem.id; }
    Demo as_demo() const { return Demo{problem.id, caption, problem.question, knowledge_questions}; }

    friend bool operator==(const DemoBankEntry&, const DemoBankEntry&) = default;
};

// True when `a` should replace a similar entry `b`: fewer harmful pieces, or as
// many harmful and more useful ones.
bool dominates(const DemoBankEntry& a, const DemoBankEntry& b) noexcept;

enum class UpdateResult { Appended, Replaced, Rejected };

struct UpdateOutcome {
    UpdateResult result = UpdateResult::Rejected;
    std::size_t removed = 0;
};

// Ordered store of demonstrations. Order is insertion order; a replacing
// candidate goes to the back.
class DemoBank {
public:
    DemoBank(std::size_t dim, double lambda, AnswerMode mode = AnswerMode::Direct);

    std::size_t dim() const noexcept { return dim_; }
    double lambda() const noexcept { return lambda_; }
    AnswerMode answer_mode() const noexcept { return mode_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    const std::vector<DemoBankEntry>& entries() const noexcept { return entries_; }

    /// The min(k, size) entries most cosine-similar to `query`, best first;
    /// equal similarities keep the older entry first. Entries whose id equals
    /// `exclude_id` are skipped. Throws RetrievalError on an empty bank and
    /// DomainError for k == 0 or a bad query.
    std::vector<const DemoBankEntry*> retrieve_top_k(std::span<const double> query, std::size_t k,
                                                     std::string_view exclude_id = {}) const;

    /// Appends a hand-made entry. Throws ConfigError on a duplicate id or an
    /// entry without knowledge.
    void add_seed(DemoBankEntry entry);

    /// Dominance update. Every entry with similarity above lambda (or with the
    /// candidate's id) is compared: entries the candidate dominates are
    /// removed and the candidate is appended once. With no similar entry the
    /// candidate is appended. A candidate that does not dominate an entry with
    /// its own id is rejected.
    UpdateOutcome update(DemoBankEntry candidate);

    /// Recounts (u, h) from stored answers and checks every entry invariant.
    /// Throws FormatError on the first violation.
    void audit() const;

    void save(const std::filesystem::path& path) const;
    std::string serialize() const;
    static DemoBank load(const std::filesystem::path& path);
    static DemoBank deserialize(const std::string& text);

private:
    void check_entry(const DemoBankEntry& entry) const;

    std::size_t dim_;
    double lambda_;
    AnswerMode mode_;
    std::vector<DemoBankEntry> entries_;
};

}  // namespace kvqa
