#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "kvqa/backend.hpp"
#include "kvqa/domain.hpp"
#include "kvqa/gbdt.hpp"
#include "kvqa/knowledge_gen.hpp"
#include "kvqa/prediction.hpp"

namespace kvqa {

inline constexpr std::size_t kFeatureCount = 11;

// Feature indices, in the order they appear in a feature vector.
enum FeatureIndex : std::size_t {
    kOriginalConfident = 0,
    kKnowledgeConfident,
    kConfidentGain,
    kTextSimilarity,
    kCaptionSimilarity,
    kImageSimilarity,
    kEntailment,
    kContradiction,
    kKnowledgeConfidentImportant,
    kKnowledgeVisualImportant,
    kKnowledgeCaptionImportant,
};

const std::array<std::string_view, kFeatureCount>& feature_names() noexcept;

using KnowledgeFeatures = std::array<double, kFeatureCount>;

// Declaration order is the argmax tie-break order.
enum class KnowledgeClass { Useful = 0, Neutral = 1, Harmful = 2 };
inline constexpr std::size_t kClassCount = 3;

std::string_view to_string(KnowledgeClass c) noexcept;
KnowledgeClass parse_knowledge_class(std::string_view text);

/// One feature vector per knowledge piece, in ordinal order. The three
/// importance features are softmaxes over this problem's pieces. Backend
/// failures are rethrown as EvaluationError naming the problem.
std::vector<KnowledgeFeatures> extract_features(ModelGateway& gateway, const VqaProblem& problem,
                                                const PredictionBundle& bundle, const KnowledgeSet& knowledge,
                                                const std::string& caption);

/// Useful when the knowledge answer is right and the original wrong, Harmful
/// for the reverse, Neutral otherwise.
KnowledgeClass label_knowledge(const ScoredAnswer& original, const ScoredAnswer& knowledge_answer,
                               std::span<const std::string> references);

struct LabeledFeatures {
    KnowledgeFeatures features{};
    KnowledgeClass label = KnowledgeClass::Neutral;
};

struct Classification {
    KnowledgeClass label = KnowledgeClass::Neutral;
    std::array<double, kClassCount> probabilities{};
};

struct FeatureImportance {
    std::array<std::size_t, kFeatureCount> cover{};
    std::array<double, kFeatureCount> share{};
};

struct PerceiverParams {
    gbdt::BoostParams boost;
    // With no explicit class weights, weight classes by N / (K * n_c).
    bool balance_classes = true;
};

// Balanced weights over the classes present in labels; absent classes get 1.
std::vector<double> balanced_class_weights(std::span<const LabeledFeatures> samples);

class Perceiver {
public:
    Perceiver() = default;
    explicit Perceiver(gbdt::Ensemble ensemble);

    // Throws TrainingError on empty or single-class input.
    static Perceiver train(std::span<const LabeledFeatures> samples, const PerceiverParams& params);

    bool fitted() const noexcept { return fitted_; }
    const gbdt::Ensemble& ensemble() const noexcept { return ensemble_; }

    // Throws DomainError unless the input has kFeatureCount values.
    Classification classify(std::span<const double> features) const;

    // Throws TrainingError on an unfitted model.
    FeatureImportance feature_importance() const;

    nlohmann::json to_json() const;
    std::string serialize() const;
    void save(const std::filesystem::path& path) const;
    static Perceiver from_json(const nlohmann::json& j);
    static Perceiver deserialize(const std::string& text);
    static Perceiver load(const std::filesystem::path& path);

private:
    gbdt::Ensemble ensemble_;
    bool fitted_ = false;
};

struct AggregatedAnswer {
    ScoredAnswer answer;
    std::size_t votes = 0;
    // True when nothing survived filtering and the original answer was kept.
    bool fallback = false;
};

/// Plurality vote over the knowledge answers not classified Harmful. Ties go
/// to the higher summed confidence, then to the original answer's key, then
/// to the lowest ordinal.
AggregatedAnswer aggregate_final_answer(const PredictionBundle& bundle, std::span<const KnowledgeClass> classes);

/// The knowledge answer with the highest confidence (lowest ordinal on ties),
/// or the original answer when there is none.
ScoredAnswer highest_confidence_answer(const PredictionBundle& bundle);

}  // namespace kvqa
