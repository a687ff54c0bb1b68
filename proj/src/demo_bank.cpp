#include "kvqa/demo_bank.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kvqa/errors.hpp"
#include "kvqa/serialization.hpp"

namespace kvqa {

namespace {

constexpr int kBankVersion = 1;
constexpr const char* kBankFormat = "kvqa-demo-bank";

nlohmann::json entry_to_json(const DemoBankEntry& e) {
    nlohmann::json j;
    j["problem"] = to_json(e.problem);
    j["caption"] = e.caption;
    j["knowledge_questions"] = e.knowledge_questions;
    auto& knowledge = j["knowledge"] = nlohmann::json::array();
    for (const auto& k : e.knowledge) knowledge.push_back(to_json(k));
    j["original_answer"] = to_json(e.original_answer);
    auto& answers = j["knowledge_answers"] = nlohmann::json::array();
    for (const auto& a : e.knowledge_answers) answers.push_back(to_json(a));
    j["h"] = e.harmful;
    j["u"] = e.useful;
    j["embedding"] = e.embedding;
    return j;
}

DemoBankEntry entry_from_json(const nlohmann::json& j) {
    DemoBankEntry e;
    e.problem = problem_from_json(j.at("problem"));
    e.caption = j.at("caption").get<std::string>();
    e.knowledge_questions = j.at("knowledge_questions").get<std::vector<std::string>>();
    for (const auto& k : j.at("knowledge")) e.knowledge.push_back(knowledge_piece_from_json(k));
    e.original_answer = scored_answer_from_json(j.at("original_answer"));
    for (const auto& a : j.at("knowledge_answers")) e.knowledge_answers.push_back(scored_answer_from_json(a));
    e.harmful = j.at("h").get<std::size_t>();
    e.useful = j.at("u").get<std::size_t>();
    e.embedding = j.at("embedding").get<std::vector<double>>();
    return e;
}

}  // namespace

UsefulHarmful count_useful_harmful(const ScoredAnswer& original, std::span<const ScoredAnswer> knowledge_answers,
                                   std::span<const std::string> references) {
    UsefulHarmful counts;
    const bool original_right = matches_any(original.key(), references);
    for (const auto& answer : knowledge_answers) {
        const bool right = matches_any(answer.key(), references);
        if (right && !original_right) ++counts.useful;
        if (!right && original_right) ++counts.harmful;
    }
    return counts;
}

std::vector<std::string> reference_answers(const VqaProblem& problem, AnswerMode mode) {
    if (mode == AnswerMode::MultipleChoice) return {correct_letter(problem)};
    return problem.ground_truth;
}

bool dominates(const DemoBankEntry& a, const DemoBankEntry& b) noexcept {
    return a.harmful < b.harmful || (a.harmful == b.harmful && a.useful > b.useful);
}

DemoBank::DemoBank(std::size_t dim, double lambda, AnswerMode mode) : dim_(dim), lambda_(lambda), mode_(mode) {
    if (dim_ == 0) throw DomainError("DemoBank: dimension must be positive");
    if (!(lambda_ >= -1.0 && lambda_ <= 1.0)) throw DomainError("DemoBank: lambda outside [-1,1]");
}

void DemoBank::check_entry(const DemoBankEntry& entry) const {
    if (entry.embedding.size() != dim_) {
        throw DomainError("demo bank entry " + entry.id() + ": embedding dimension " +
                          std::to_string(entry.embedding.size()) + " != " + std::to_string(dim_));
    }
    if (entry.knowledge.size() != entry.knowledge_answers.size()) {
        throw DomainError("demo bank entry " + entry.id() + ": knowledge and answers are not aligned");
    }
}

std::vector<const DemoBankEntry*> DemoBank::retrieve_top_k(std::span<const double> query, std::size_t k,
                                                           std::string_view exclude_id) const {
    if (k == 0) throw DomainError("retrieve_top_k: k must be at least 1");
    if (entries_.empty()) throw RetrievalError("retrieve_top_k: the demo bank is empty; seed it first");
    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (!exclude_id.empty() && entries_[i].id() == exclude_id) continue;
        scored.emplace_back(cosine_similarity(query, entries_[i].embedding), i);
    }
    const std::size_t take = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
    std::vector<const DemoBankEntry*> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) out.push_back(&entries_[scored[i].second]);
    return out;
}

void DemoBank::add_seed(DemoBankEntry entry) {
    check_entry(entry);
    if (entry.knowledge.empty()) throw ConfigError("seed " + entry.id() + " has no knowledge pieces");
    for (const auto& e : entries_) {
        if (e.id() == entry.id()) throw ConfigError("duplicate seed id " + entry.id());
    }
    entries_.push_back(std::move(entry));
}

UpdateOutcome DemoBank::update(DemoBankEntry candidate) {
    check_entry(candidate);
    for (const auto& e : entries_) {
        if (e.id() == candidate.id() && !dominates(candidate, e)) return {UpdateResult::Rejected, 0};
    }
    bool any_similar = false;
    std::vector<bool> dominated(entries_.size(), false);
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& e = entries_[i];
        const bool similar = e.id() == candidate.id() || cosine_similarity(candidate.embedding, e.embedding) > lambda_;
        if (!similar) continue;
        any_similar = true;
        dominated[i] = dominates(candidate, e);
    }
    if (!any_similar) {
        entries_.push_back(std::move(candidate));
        return {UpdateResult::Appended, 0};
    }
    const auto removed = static_cast<std::size_t>(std::count(dominated.begin(), dominated.end(), true));
    if (removed == 0) return {UpdateResult::Rejected, 0};
    std::vector<DemoBankEntry> kept;
    kept.reserve(entries_.size() - removed + 1);
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (!dominated[i]) kept.push_back(std::move(entries_[i]));
    }
    kept.push_back(std::move(candidate));
    entries_ = std::move(kept);
    return {UpdateResult::Replaced, removed};
}

void DemoBank::audit() const {
    std::vector<std::string> ids;
    for (const auto& e : entries_) {
        try {
            check_entry(e);
        } catch (const DomainError& err) {
            throw FormatError(err.what());
        }
        for (std::size_t i = 0; i < e.knowledge.size(); ++i) {
            if (e.knowledge[i].ordinal != i) throw FormatError("entry " + e.id() + ": knowledge ordinals out of order");
        }
        const auto recount = count_useful_harmful(e.original_answer, e.knowledge_answers, reference_answers(e.problem, mode_));
        if (recount.useful != e.useful || recount.harmful != e.harmful) {
            throw FormatError("entry " + e.id() + ": stored (u,h) = (" + std::to_string(e.useful) + "," +
                              std::to_string(e.harmful) + ") but answers give (" + std::to_string(recount.useful) +
                              "," + std::to_string(recount.harmful) + ")");
        }
        ids.push_back(e.id());
    }
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw FormatError("duplicate entry ids in demo bank");
}

std::string DemoBank::serialize() const {
    nlohmann::json header{{"format", kBankFormat},
                          {"version", kBankVersion},
                          {"d", dim_},
                          {"lambda", lambda_},
                          {"answer_mode", std::string(to_string(mode_))},
                          {"entry_count", entries_.size()}};
    std::string out = header.dump() + "\n";
    for (const auto& e : entries_) out += entry_to_json(e).dump() + "\n";
    return out;
}

void DemoBank::save(const std::filesystem::path& path) const { write_text_file(path, serialize()); }

DemoBank DemoBank::deserialize(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("demo bank file is empty");
    try {
        const auto header = nlohmann::json::parse(line);
        expect_format(header, kBankFormat, kBankVersion);
        DemoBank bank(header.at("d").get<std::size_t>(), header.at("lambda").get<double>(),
                      parse_answer_mode(header.value("answer_mode", std::string("direct"))));
        const auto expected = header.at("entry_count").get<std::size_t>();
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            bank.entries_.push_back(entry_from_json(nlohmann::json::parse(line)));
        }
        if (bank.entries_.size() != expected) {
            throw FormatError("demo bank header announces " + std::to_string(expected) + " entries, file holds " +
                              std::to_string(bank.entries_.size()));
        }
        bank.audit();
        return bank;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed demo bank: ") + e.what());
    } catch (const DomainError& e) {
        throw FormatError(std::string("invalid demo bank: ") + e.what());
    }
}

DemoBank DemoBank::load(const std::filesystem::path& path) { return deserialize(read_text_file(path)); }

}  // namespace kvqa
