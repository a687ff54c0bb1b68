#include "kvqa/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kvqa/errors.hpp"
#include "kvqa/vector_math.hpp"

namespace kvqa::gbdt {

namespace {

constexpr int kEnsembleVersion = 1;
constexpr const char* kEnsembleFormat = "kvqa-gbdt";

using RowList = std::vector<std::uint32_t>;

struct TreeBuilder {
    const FeatureMatrix& x;
    std::span<const double> grad;
    std::span<const double> hess;
    const BoostParams& params;
    Tree tree;

    // Scratch buffers reused across nodes.
    std::vector<double> values;
    std::vector<double> g;
    std::vector<double> h;

    int build(std::vector<RowList>& sorted, int depth) {
        const RowList& rows = sorted.front();
        double sum_g = 0.0;
        double sum_h = 0.0;
        for (std::uint32_t r : rows) {
            sum_g += grad[r];
            sum_h += hess[r];
        }
        const int index = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back(TreeNode{});
        tree.nodes[index].cover = rows.size();

        int best_feature = -1;
        Split best;
        if (depth < params.max_depth && rows.size() >= 2) {
            for (std::size_t f = 0; f < x.cols(); ++f) {
                values.clear();
                g.clear();
                h.clear();
                for (std::uint32_t r : sorted[f]) {
                    values.push_back(x.at(r, f));
                    g.push_back(grad[r]);
                    h.push_back(hess[r]);
                }
                const auto split = best_split(values, g, h, params.l2_reg, params.min_child_weight);
                if (split && (best_feature < 0 || split->gain > best.gain)) {
                    best = *split;
                    best_feature = static_cast<int>(f);
                }
            }
        }
        if (best_feature < 0) {
            const double denom = sum_h + params.l2_reg;
            tree.nodes[index].weight = denom > 0.0 ? -sum_g / denom * params.learning_rate : 0.0;
            return index;
        }

        std::vector<RowList> left(x.cols());
        std::vector<RowList> right(x.cols());
        for (std::size_t f = 0; f < x.cols(); ++f) {
            left[f].reserve(best.left_count);
            right[f].reserve(rows.size() - best.left_count);
            for (std::uint32_t r : sorted[f]) {
                (x.at(r, static_cast<std::size_t>(best_feature)) < best.threshold ? left[f] : right[f]).push_back(r);
            }
        }
        sorted.clear();
        sorted.shrink_to_fit();
        tree.nodes[index].feature = best_feature;
        tree.nodes[index].threshold = best.threshold;
        const int l = build(left, depth + 1);
        const int r = build(right, depth + 1);
        tree.nodes[index].left = l;
        tree.nodes[index].right = r;
        return index;
    }
};

nlohmann::json node_to_json(const Tree& tree, int index) {
    const TreeNode& n = tree.nodes[static_cast<std::size_t>(index)];
    if (n.is_leaf()) return {{"leaf", n.weight}, {"cover", n.cover}};
    return {{"split", n.feature},
            {"threshold", n.threshold},
            {"cover", n.cover},
            {"left", node_to_json(tree, n.left)},
            {"right", node_to_json(tree, n.right)}};
}

int node_from_json(const nlohmann::json& j, Tree& tree, std::size_t feature_count) {
    const int index = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(TreeNode{});
    TreeNode node;
    node.cover = j.at("cover").get<std::size_t>();
    if (j.contains("leaf")) {
        node.weight = j.at("leaf").get<double>();
        if (!std::isfinite(node.weight)) throw FormatError("non-finite leaf weight");
        tree.nodes[static_cast<std::size_t>(index)] = node;
        return index;
    }
    node.feature = j.at("split").get<int>();
    node.threshold = j.at("threshold").get<double>();
    if (node.feature < 0 || static_cast<std::size_t>(node.feature) >= feature_count) {
        throw FormatError("split feature " + std::to_string(node.feature) + " out of range");
    }
    if (!std::isfinite(node.threshold)) throw FormatError("non-finite split threshold");
    node.left = node_from_json(j.at("left"), tree, feature_count);
    node.right = node_from_json(j.at("right"), tree, feature_count);
    tree.nodes[static_cast<std::size_t>(index)] = node;
    return index;
}

double class_weight(const BoostParams& params, int label) {
    return params.class_weights.empty() ? 1.0 : params.class_weights[static_cast<std::size_t>(label)];
}

double loss_from_margins(const std::vector<double>& margins, std::size_t n_classes, std::span<const int> y,
                         const BoostParams& params) {
    double total = 0.0;
    double weight = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const auto p = softmax(std::span<const double>(margins.data() + i * n_classes, n_classes));
        const double w = class_weight(params, y[i]);
        total += w * -std::log(std::max(p[static_cast<std::size_t>(y[i])], 1e-300));
        weight += w;
    }
    return total / weight;
}

}  // namespace

void BoostParams::validate(std::size_t n_classes) const {
    if (n_rounds < 1) throw TrainingError("n_rounds must be at least 1");
    if (max_depth < 1) throw TrainingError("max_depth must be at least 1");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw TrainingError("learning_rate must lie in (0,1]");
    if (!(l2_reg >= 0.0)) throw TrainingError("l2_reg must be non-negative");
    if (!(min_child_weight >= 0.0)) throw TrainingError("min_child_weight must be non-negative");
    if (!class_weights.empty()) {
        if (class_weights.size() != n_classes) throw TrainingError("class_weights must have one entry per class");
        for (double w : class_weights) {
            if (!(w > 0.0) || !std::isfinite(w)) throw TrainingError("class weights must be positive and finite");
        }
    }
}

nlohmann::json to_json(const BoostParams& p) {
    return {{"n_rounds", p.n_rounds},       {"max_depth", p.max_depth},
            {"learning_rate", p.learning_rate}, {"l2_reg", p.l2_reg},
            {"min_child_weight", p.min_child_weight}, {"class_weights", p.class_weights},
            {"seed", p.seed}};
}

BoostParams boost_params_from_json(const nlohmann::json& j) {
    BoostParams p;
    p.n_rounds = j.value("n_rounds", p.n_rounds);
    p.max_depth = j.value("max_depth", p.max_depth);
    p.learning_rate = j.value("learning_rate", p.learning_rate);
    p.l2_reg = j.value("l2_reg", p.l2_reg);
    p.min_child_weight = j.value("min_child_weight", p.min_child_weight);
    p.class_weights = j.value("class_weights", std::vector<double>{});
    p.seed = j.value("seed", p.seed);
    return p;
}

void FeatureMatrix::add_row(std::span<const double> row) {
    if (row.size() != n_features_) {
        throw DomainError("feature row has " + std::to_string(row.size()) + " values, expected " +
                          std::to_string(n_features_));
    }
    values_.insert(values_.end(), row.begin(), row.end());
}

double midpoint(double lo, double hi) noexcept {
    const double mid = lo + (hi - lo) / 2.0;
    return mid > lo ? mid : hi;
}

std::optional<Split> best_split(std::span<const double> sorted_values, std::span<const double> gradients,
                                std::span<const double> hessians, double l2_reg, double min_child_weight) {
    const std::size_t n = sorted_values.size();
    if (n < 2 || gradients.size() != n || hessians.size() != n) return std::nullopt;
    double sum_g = 0.0;
    double sum_h = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sum_g += gradients[i];
        sum_h += hessians[i];
    }
    if (sum_h + l2_reg <= 0.0) return std::nullopt;
    const double parent = sum_g * sum_g / (sum_h + l2_reg);

    std::optional<Split> best;
    double left_g = 0.0;
    double left_h = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        left_g += gradients[i];
        left_h += hessians[i];
        if (!(sorted_values[i] < sorted_values[i + 1])) continue;
        const double right_g = sum_g - left_g;
        const double right_h = sum_h - left_h;
        if (left_h < min_child_weight || right_h < min_child_weight) continue;
        if (left_h + l2_reg <= 0.0 || right_h + l2_reg <= 0.0) continue;
        const double gain =
            0.5 * (left_g * left_g / (left_h + l2_reg) + right_g * right_g / (right_h + l2_reg) - parent);
        if (gain < kMinGain) continue;
        if (!best || gain > best->gain) best = Split{midpoint(sorted_values[i], sorted_values[i + 1]), gain, i + 1};
    }
    return best;
}

double Tree::predict(std::span<const double> x) const {
    std::size_t i = 0;
    while (!nodes[i].is_leaf()) {
        const TreeNode& n = nodes[i];
        i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right);
    }
    return nodes[i].weight;
}

Ensemble::Ensemble(std::size_t n_classes, std::size_t feature_count, BoostParams params)
    : n_classes_(n_classes), feature_count_(feature_count), params_(std::move(params)) {}

void Ensemble::add_round(std::vector<Tree> trees) {
    if (trees.size() != n_classes_) throw DomainError("a boosting round needs one tree per class");
    rounds_.push_back(std::move(trees));
}

std::vector<double> Ensemble::margins(std::span<const double> x) const {
    if (x.size() != feature_count_) {
        throw DomainError("expected " + std::to_string(feature_count_) + " features, got " + std::to_string(x.size()));
    }
    std::vector<double> m(n_classes_, 0.0);
    for (const auto& round : rounds_) {
        for (std::size_t c = 0; c < n_classes_; ++c) m[c] += round[c].predict(x);
    }
    return m;
}

std::vector<double> Ensemble::predict_proba(std::span<const double> x) const { return softmax(margins(x)); }

std::vector<std::size_t> Ensemble::feature_cover() const {
    std::vector<std::size_t> cover(feature_count_, 0);
    for (const auto& round : rounds_) {
        for (const auto& tree : round) {
            for (const auto& node : tree.nodes) {
                if (!node.is_leaf()) cover[static_cast<std::size_t>(node.feature)] += node.cover;
            }
        }
    }
    return cover;
}

nlohmann::json Ensemble::to_json() const {
    nlohmann::json j;
    j["format"] = kEnsembleFormat;
    j["version"] = kEnsembleVersion;
    j["n_classes"] = n_classes_;
    j["feature_count"] = feature_count_;
    j["params"] = gbdt::to_json(params_);
    auto& trees = j["trees"] = nlohmann::json::array();
    for (const auto& round : rounds_) {
        auto r = nlohmann::json::array();
        for (const auto& tree : round) r.push_back(node_to_json(tree, 0));
        trees.push_back(std::move(r));
    }
    return j;
}

std::string Ensemble::serialize() const { return to_json().dump(); }

Ensemble Ensemble::from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("format", std::string()) != kEnsembleFormat) {
        throw FormatError("expected a kvqa-gbdt ensemble");
    }
    if (!j.contains("version") || !j["version"].is_number_integer() || j["version"].get<int>() != kEnsembleVersion) {
        throw FormatError("unsupported ensemble version " + (j.contains("version") ? j["version"].dump() : "none"));
    }
    try {
        Ensemble e(j.at("n_classes").get<std::size_t>(), j.at("feature_count").get<std::size_t>(),
                   boost_params_from_json(j.at("params")));
        if (e.n_classes_ < 2) throw FormatError("ensemble needs at least two classes");
        for (const auto& round : j.at("trees")) {
            std::vector<Tree> trees;
            for (const auto& node : round) {
                Tree t;
                node_from_json(node, t, e.feature_count_);
                trees.push_back(std::move(t));
            }
            if (trees.size() != e.n_classes_) throw FormatError("round does not hold one tree per class");
            e.rounds_.push_back(std::move(trees));
        }
        return e;
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError(std::string("malformed ensemble: ") + ex.what());
    }
}

FitResult fit(const FeatureMatrix& x, std::span<const int> y, std::size_t n_classes, const BoostParams& params) {
    if (n_classes < 2) throw TrainingError("fit: need at least two classes");
    params.validate(n_classes);
    const std::size_t n = x.rows();
    if (n < 2) throw TrainingError("fit: need at least two rows");
    if (y.size() != n) throw TrainingError("fit: label count does not match row count");
    if (n > std::numeric_limits<std::uint32_t>::max()) throw TrainingError("fit: too many rows");
    std::vector<bool> present(n_classes, false);
    for (int label : y) {
        if (label < 0 || static_cast<std::size_t>(label) >= n_classes) throw TrainingError("fit: label out of range");
        present[static_cast<std::size_t>(label)] = true;
    }
    if (std::count(present.begin(), present.end(), true) < 2) {
        throw TrainingError("fit: training labels contain a single class");
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (double v : x.row(i)) {
            if (!std::isfinite(v)) throw TrainingError("fit: non-finite feature value in row " + std::to_string(i));
        }
    }

    // Sorted by (value, row index) so the order is total.
    std::vector<RowList> presorted(x.cols(), RowList(n));
    for (std::size_t f = 0; f < x.cols(); ++f) {
        std::iota(presorted[f].begin(), presorted[f].end(), 0u);
        std::sort(presorted[f].begin(), presorted[f].end(), [&](std::uint32_t a, std::uint32_t b) {
            const double va = x.at(a, f);
            const double vb = x.at(b, f);
            return va < vb || (va == vb && a < b);
        });
    }

    FitResult result{Ensemble(n_classes, x.cols(), params), {}};
    std::vector<double> margins(n * n_classes, 0.0);
    result.loss_history.push_back(loss_from_margins(margins, n_classes, y, params));

    std::vector<double> probs(n * n_classes);
    std::vector<double> grad(n);
    std::vector<double> hess(n);
    for (int round = 0; round < params.n_rounds; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            const auto p = softmax(std::span<const double>(margins.data() + i * n_classes, n_classes));
            std::copy(p.begin(), p.end(), probs.begin() + static_cast<std::ptrdiff_t>(i * n_classes));
        }
        std::vector<Tree> trees;
        trees.reserve(n_classes);
        for (std::size_t c = 0; c < n_classes; ++c) {
            for (std::size_t i = 0; i < n; ++i) {
                const double p = probs[i * n_classes + c];
                const double w = class_weight(params, y[i]);
                grad[i] = w * (p - (static_cast<std::size_t>(y[i]) == c ? 1.0 : 0.0));
                hess[i] = w * p * (1.0 - p);
            }
            TreeBuilder builder{x, grad, hess, params, {}, {}, {}, {}};
            std::vector<RowList> sorted = presorted;
            builder.build(sorted, 0);
            trees.push_back(std::move(builder.tree));
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < n_classes; ++c) margins[i * n_classes + c] += trees[c].predict(x.row(i));
        }
        result.ensemble.add_round(std::move(trees));
        result.loss_history.push_back(loss_from_margins(margins, n_classes, y, params));
    }
    return result;
}

double weighted_log_loss(const Ensemble& ensemble, const FeatureMatrix& x, std::span<const int> y) {
    std::vector<double> margins;
    margins.reserve(x.rows() * ensemble.n_classes());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto m = ensemble.margins(x.row(i));
        margins.insert(margins.end(), m.begin(), m.end());
    }
    return loss_from_margins(margins, ensemble.n_classes(), y, ensemble.params());
}

}  // namespace kvqa::gbdt
