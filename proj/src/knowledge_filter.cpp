#include "kvqa/knowledge_filter.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "kvqa/errors.hpp"
#include "kvqa/serialization.hpp"
#include "kvqa/vector_math.hpp"

namespace kvqa {

namespace {

constexpr int kPerceiverVersion = 1;
constexpr const char* kPerceiverFormat = "kvqa-perceiver";

constexpr std::array<KnowledgeClass, kClassCount> kClasses{KnowledgeClass::Useful, KnowledgeClass::Neutral,
                                                           KnowledgeClass::Harmful};

std::vector<std::string> class_names() {
    std::vector<std::string> out;
    for (auto c : kClasses) out.emplace_back(to_string(c));
    return out;
}

std::vector<std::string> feature_name_list() {
    return {feature_names().begin(), feature_names().end()};
}

}  // namespace

const std::array<std::string_view, kFeatureCount>& feature_names() noexcept {
    static constexpr std::array<std::string_view, kFeatureCount> names{
        "original_confident",
        "knowledge_confident",
        "confident_gain",
        "text_similarity",
        "caption_similarity",
        "image_similarity",
        "entailment",
        "contradiction",
        "knowledge_confident_important",
        "knowledge_visual_important",
        "knowledge_caption_important",
    };
    return names;
}

std::string_view to_string(KnowledgeClass c) noexcept {
    switch (c) {
        case KnowledgeClass::Useful: return "useful";
        case KnowledgeClass::Neutral: return "neutral";
        case KnowledgeClass::Harmful: return "harmful";
    }
    return "neutral";
}

KnowledgeClass parse_knowledge_class(std::string_view text) {
    for (auto c : kClasses) {
        if (to_string(c) == text) return c;
    }
    throw DomainError("unknown knowledge class '" + std::string(text) + "'");
}

std::vector<KnowledgeFeatures> extract_features(ModelGateway& gateway, const VqaProblem& problem,
                                                const PredictionBundle& bundle, const KnowledgeSet& knowledge,
                                                const std::string& caption) {
    const auto& pieces = knowledge.pieces;
    if (pieces.empty()) throw DomainError("extract_features: problem " + problem.id + " has no knowledge");
    if (bundle.knowledge_answers.size() != pieces.size()) {
        throw DomainError("extract_features: answers and knowledge are not aligned for " + problem.id);
    }
    const std::size_t n = pieces.size();
    std::vector<KnowledgeFeatures> out(n);
    try {
        const Embedding q = gateway.text_embed(problem.question);
        const Embedding c = gateway.text_embed(caption);
        for (std::size_t i = 0; i < n; ++i) {
            const std::string& text = pieces[i].text;
            const Embedding k = gateway.text_embed(text);
            const EntailmentScores e = gateway.entail_scores(text, problem.question);
            auto& f = out[i];
            f[kOriginalConfident] = bundle.original.confidence;
            f[kKnowledgeConfident] = bundle.knowledge_answers[i].confidence;
            f[kConfidentGain] = f[kKnowledgeConfident] - f[kOriginalConfident];
            f[kTextSimilarity] = cosine_similarity(q, k);
            f[kCaptionSimilarity] = cosine_similarity(c, k);
            f[kImageSimilarity] = gateway.image_text_similarity(problem.image_ref, text);
            f[kEntailment] = e.entailment;
            f[kContradiction] = e.contradiction;
        }
    } catch (const BackendError& e) {
        throw EvaluationError("feature extraction failed for " + problem.id + ": " + e.what());
    }
    std::vector<double> column(n);
    const auto importance = [&](std::size_t from, std::size_t to) {
        for (std::size_t i = 0; i < n; ++i) column[i] = out[i][from];
        const auto s = softmax(column);
        for (std::size_t i = 0; i < n; ++i) out[i][to] = s[i];
    };
    importance(kKnowledgeConfident, kKnowledgeConfidentImportant);
    importance(kImageSimilarity, kKnowledgeVisualImportant);
    importance(kCaptionSimilarity, kKnowledgeCaptionImportant);
    for (const auto& f : out) {
        for (double v : f) {
            if (!std::isfinite(v)) throw EvaluationError("non-finite feature for " + problem.id);
        }
    }
    return out;
}

KnowledgeClass label_knowledge(const ScoredAnswer& original, const ScoredAnswer& knowledge_answer,
                               std::span<const std::string> references) {
    const bool original_right = matches_any(original.key(), references);
    const bool knowledge_right = matches_any(knowledge_answer.key(), references);
    if (knowledge_right && !original_right) return KnowledgeClass::Useful;
    if (!knowledge_right && original_right) return KnowledgeClass::Harmful;
    return KnowledgeClass::Neutral;
}

std::vector<double> balanced_class_weights(std::span<const LabeledFeatures> samples) {
    std::array<std::size_t, kClassCount> counts{};
    for (const auto& s : samples) ++counts[static_cast<std::size_t>(s.label)];
    const auto present = static_cast<double>(std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }));
    std::vector<double> weights(kClassCount, 1.0);
    for (std::size_t c = 0; c < kClassCount; ++c) {
        if (counts[c] > 0) {
            weights[c] = static_cast<double>(samples.size()) / (present * static_cast<double>(counts[c]));
        }
    }
    return weights;
}

Perceiver::Perceiver(gbdt::Ensemble ensemble) : ensemble_(std::move(ensemble)), fitted_(true) {
    if (ensemble_.n_classes() != kClassCount || ensemble_.feature_count() != kFeatureCount) {
        throw DomainError("perceiver ensemble must have 3 classes and 11 features");
    }
}

Perceiver Perceiver::train(std::span<const LabeledFeatures> samples, const PerceiverParams& params) {
    if (samples.empty()) throw TrainingError("train_perceiver: no training samples");
    gbdt::FeatureMatrix x(kFeatureCount);
    std::vector<int> y;
    y.reserve(samples.size());
    for (const auto& s : samples) {
        x.add_row(s.features);
        y.push_back(static_cast<int>(s.label));
    }
    gbdt::BoostParams boost = params.boost;
    if (boost.class_weights.empty() && params.balance_classes) boost.class_weights = balanced_class_weights(samples);
    return Perceiver(gbdt::fit(x, y, kClassCount, boost).ensemble);
}

Classification Perceiver::classify(std::span<const double> features) const {
    if (!fitted_) throw DomainError("classify: perceiver is not fitted");
    if (features.size() != kFeatureCount) {
        throw DomainError("classify: expected 11 features, got " + std::to_string(features.size()));
    }
    const auto p = ensemble_.predict_proba(features);
    Classification out;
    std::copy(p.begin(), p.end(), out.probabilities.begin());
    const auto best = std::max_element(p.begin(), p.end()) - p.begin();
    out.label = kClasses[static_cast<std::size_t>(best)];
    return out;
}

FeatureImportance Perceiver::feature_importance() const {
    if (!fitted_) throw TrainingError("feature_importance: perceiver is not fitted");
    FeatureImportance out;
    const auto cover = ensemble_.feature_cover();
    std::copy(cover.begin(), cover.end(), out.cover.begin());
    double total = 0.0;
    for (auto c : cover) total += static_cast<double>(c);
    if (total > 0.0) {
        for (std::size_t i = 0; i < kFeatureCount; ++i) out.share[i] = static_cast<double>(out.cover[i]) / total;
    }
    return out;
}

nlohmann::json Perceiver::to_json() const {
    if (!fitted_) throw DomainError("cannot serialize an unfitted perceiver");
    return {{"format", kPerceiverFormat},
            {"version", kPerceiverVersion},
            {"feature_names", feature_name_list()},
            {"classes", class_names()},
            {"ensemble", ensemble_.to_json()}};
}

std::string Perceiver::serialize() const { return to_json().dump() + "\n"; }

void Perceiver::save(const std::filesystem::path& path) const { write_text_file(path, serialize()); }

Perceiver Perceiver::from_json(const nlohmann::json& j) {
    expect_format(j, kPerceiverFormat, kPerceiverVersion);
    try {
        if (j.at("feature_names").get<std::vector<std::string>>() != feature_name_list()) {
            throw FormatError("perceiver feature order does not match this build");
        }
        if (j.at("classes").get<std::vector<std::string>>() != class_names()) {
            throw FormatError("perceiver class order does not match this build");
        }
        auto ensemble = gbdt::Ensemble::from_json(j.at("ensemble"));
        if (ensemble.n_classes() != kClassCount || ensemble.feature_count() != kFeatureCount) {
            throw FormatError("perceiver ensemble must have 3 classes and 11 features");
        }
        return Perceiver(std::move(ensemble));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed perceiver: ") + e.what());
    }
}

Perceiver Perceiver::deserialize(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("perceiver file is not JSON: ") + e.what());
    }
    return from_json(j);
}

Perceiver Perceiver::load(const std::filesystem::path& path) { return deserialize(read_text_file(path)); }

AggregatedAnswer aggregate_final_answer(const PredictionBundle& bundle, std::span<const KnowledgeClass> classes) {
    if (classes.size() != bundle.knowledge_answers.size()) {
        throw DomainError("aggregate_final_answer: classes and answers are not aligned");
    }
    struct Tally {
        std::size_t votes = 0;
        double confidence = 0.0;
        std::size_t first = 0;
    };
    std::map<AnswerKey, Tally> tallies;
    for (std::size_t i = 0; i < classes.size(); ++i) {
        if (classes[i] == KnowledgeClass::Harmful) continue;
        const auto& answer = bundle.knowledge_answers[i];
        auto [it, inserted] = tallies.try_emplace(answer.key(), Tally{0, 0.0, i});
        ++it->second.votes;
        it->second.confidence += answer.confidence;
    }
    if (tallies.empty()) return {bundle.original, 0, true};
    const AnswerKey original = bundle.original.key();
    const auto better = [&](const auto& a, const auto& b) {
        if (a.second.votes != b.second.votes) return a.second.votes > b.second.votes;
        if (a.second.confidence != b.second.confidence) return a.second.confidence > b.second.confidence;
        const bool a_orig = a.first == original;
        const bool b_orig = b.first == original;
        if (a_orig != b_orig) return a_orig;
        return a.second.first < b.second.first;
    };
    auto best = tallies.begin();
    for (auto it = std::next(tallies.begin()); it != tallies.end(); ++it) {
        if (better(*it, *best)) best = it;
    }
    return {bundle.knowledge_answers[best->second.first], best->second.votes, false};
}

ScoredAnswer highest_confidence_answer(const PredictionBundle& bundle) {
    if (bundle.knowledge_answers.empty()) return bundle.original;
    std::size_t best = 0;
    for (std::size_t i = 1; i < bundle.knowledge_answers.size(); ++i) {
        if (bundle.knowledge_answers[i].confidence > bundle.knowledge_answers[best].confidence) best = i;
    }
    return bundle.knowledge_answers[best];
}

}  // namespace kvqa
