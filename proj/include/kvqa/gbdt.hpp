#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace kvqa::gbdt {

struct BoostParams {
    int n_rounds = 100;
    int max_depth = 4;
    double learning_rate = 0.1;
    double l2_reg = 1.0;
    double min_child_weight = 1.0;
    // Per-class multipliers on gradients and hessians; empty means all 1.
    std::vector<double> class_weights;
    // Recorded for reproducibility. Training draws no random numbers because
    // no row or column subsampling is done.
    std::uint64_t seed = 0;

    // Throws TrainingError on out-of-range values.
    void validate(std::size_t n_classes) const;

    friend bool operator==(const BoostParams&, const BoostParams&) = default;
};

nlohmann::json to_json(const BoostParams& params);
BoostParams boost_params_from_json(const nlohmann::json& j);

// Dense row-major feature matrix.
class FeatureMatrix {
public:
    explicit FeatureMatrix(std::size_t n_features) : n_features_(n_features) {}

    void add_row(std::span<const double> row);
    std::span<const double> row(std::size_t i) const { return {values_.data() + i * n_features_, n_features_}; }
    double at(std::size_t i, std::size_t f) const { return values_[i * n_features_ + f]; }
    std::size_t rows() const noexcept { return n_features_ == 0 ? 0 : values_.size() / n_features_; }
    std::size_t cols() const noexcept { return n_features_; }

private:
    std::size_t n_features_;
    std::vector<double> values_;
};

struct Split {
    double threshold = 0.0;
    double gain = 0.0;
    std::size_t left_count = 0;
};

// Gains below this are treated as zero.
inline constexpr double kMinGain = 1e-12;

/// Exact greedy search over one feature column sorted ascending (ties grouped),
/// with gradients and hessians aligned to the column. Candidate thresholds lie
/// midway between consecutive distinct values; rows with value < threshold go
/// left. Gain is
///
///   0.5 * [G_L^2/(H_L+l2) + G_R^2/(H_R+l2) - G^2/(H+l2)]
///
/// Both children need hessian sum >= min_child_weight. Returns the maximal
/// gain split (smallest threshold on ties), or nullopt if no split reaches
/// kMinGain.
std::optional<Split> best_split(std::span<const double> sorted_values, std::span<const double> gradients,
                                std::span<const double> hessians, double l2_reg, double min_child_weight);

/// Threshold placed between two distinct sorted values; always > lo and <= hi.
double midpoint(double lo, double hi) noexcept;

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double weight = 0.0;    // leaf output, learning rate already applied
    std::size_t cover = 0;  // training rows routed through this node

    bool is_leaf() const noexcept { return feature < 0; }

    friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct Tree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    double predict(std::span<const double> x) const;

    friend bool operator==(const Tree&, const Tree&) = default;
};

class Ensemble {
public:
    Ensemble() = default;
    Ensemble(std::size_t n_classes, std::size_t feature_count, BoostParams params);

    std::size_t n_classes() const noexcept { return n_classes_; }
    std::size_t feature_count() const noexcept { return feature_count_; }
    const BoostParams& params() const noexcept { return params_; }
    // rounds()[r][c] is the round-r tree for class c.
    const std::vector<std::vector<Tree>>& rounds() const noexcept { return rounds_; }
    void add_round(std::vector<Tree> trees);

    /// Accumulated per-class leaf sums (base score 0).
    std::vector<double> margins(std::span<const double> x) const;
    /// Softmax of margins. Throws DomainError on a dimension mismatch.
    std::vector<double> predict_proba(std::span<const double> x) const;

    /// Per-feature sum of node covers over all internal nodes.
    std::vector<std::size_t> feature_cover() const;

    nlohmann::json to_json() const;
    std::string serialize() const;
    static Ensemble from_json(const nlohmann::json& j);

    friend bool operator==(const Ensemble&, const Ensemble&) = default;

private:
    std::size_t n_classes_ = 0;
    std::size_t feature_count_ = 0;
    BoostParams params_;
    std::vector<std::vector<Tree>> rounds_;
};

struct FitResult {
    Ensemble ensemble;
    // Weighted multiclass log-loss before training and after each round.
    std::vector<double> loss_history;
};

/// Second-order softmax boosting: each round fits one regression tree per
/// class to g = w*(p_c - [y = c]), h = w*p_c*(1 - p_c) where w is the class
/// weight of the row's label. Leaf value is -G/(H + l2) * learning_rate.
/// Throws TrainingError for fewer than two rows, fewer than two distinct
/// labels, labels out of range or non-finite features.
FitResult fit(const FeatureMatrix& x, std::span<const int> y, std::size_t n_classes, const BoostParams& params);

/// Weighted mean of -log p_label.
double weighted_log_loss(const Ensemble& ensemble, const FeatureMatrix& x, std::span<const int> y);

}  // namespace kvqa::gbdt
