#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kvqa/errors.hpp"
#include "kvqa/gbdt.hpp"
#include "kvqa/hashing.hpp"
#include "oracles.hpp"

using namespace kvqa;
using namespace kvqa::gbdt;

namespace {

struct Dataset {
    FeatureMatrix x{0};
    std::vector<int> y;
};

// Three blobs, one per class, in `f` dimensions; `spread` controls overlap.
Dataset blobs(std::uint64_t seed, std::size_t n, std::size_t f, double spread, std::vector<double> class_share = {}) {
    SeededRng rng(seed);
    Dataset d{FeatureMatrix(f), {}};
    if (class_share.empty()) class_share = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    for (std::size_t i = 0; i < n; ++i) {
        const double r = rng.uniform();
        const int c = r < class_share[0] ? 0 : (r < class_share[0] + class_share[1] ? 1 : 2);
        std::vector<double> row(f);
        for (std::size_t j = 0; j < f; ++j) {
            const double center = j % 3 == static_cast<std::size_t>(c) ? 1.0 : 0.0;
            row[j] = center + spread * (2.0 * rng.uniform() - 1.0);
        }
        d.x.add_row(row);
        d.y.push_back(c);
    }
    return d;
}

int argmax(const std::vector<double>& p) {
    return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

double train_accuracy(const Ensemble& e, const Dataset& d) {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < d.x.rows(); ++i) hit += argmax(e.predict_proba(d.x.row(i))) == d.y[i];
    return static_cast<double>(hit) / static_cast<double>(d.x.rows());
}

BoostParams params(int rounds) {
    BoostParams p;
    p.n_rounds = rounds;
    return p;
}

}  // namespace

TEST(BestSplit, Examples) {
    const std::vector<double> ones{1, 1, 1, 1};
    EXPECT_FALSE(best_split(std::vector<double>{2, 2, 2, 2}, std::vector<double>{-1, -1, 1, 1}, ones, 0.0, 0.0));

    const auto s = best_split(std::vector<double>{0, 1, 2, 3}, std::vector<double>{-1, -1, 1, 1}, ones, 0.0, 0.0);
    ASSERT_TRUE(s);
    EXPECT_EQ(s->left_count, 2u);
    EXPECT_DOUBLE_EQ(s->threshold, 1.5);
    // 0.5 * (4/2 + 4/2 - 0)
    EXPECT_DOUBLE_EQ(s->gain, 2.0);

    // Both children need hessian >= min_child_weight.
    EXPECT_FALSE(best_split(std::vector<double>{0, 1}, std::vector<double>{-1, 1}, std::vector<double>{1, 1}, 0.0, 1.5));
    // Zero gradients give no gain.
    EXPECT_FALSE(best_split(std::vector<double>{0, 1, 2}, std::vector<double>{0, 0, 0}, std::vector<double>{1, 1, 1},
                            1.0, 0.0));
}

TEST(BestSplit, EqualGainsPickSmallestThreshold) {
    const auto s = best_split(std::vector<double>{0, 1, 2}, std::vector<double>{1, 0, 1}, std::vector<double>{1, 1, 1},
                              0.0, 0.0);
    ASSERT_TRUE(s);
    EXPECT_EQ(s->left_count, 1u);
}

TEST(BestSplit, Midpoint) {
    EXPECT_DOUBLE_EQ(midpoint(1.0, 2.0), 1.5);
    const double lo = 1.0;
    const double hi = std::nextafter(1.0, 2.0);
    EXPECT_GT(midpoint(lo, hi), lo);
    EXPECT_LE(midpoint(lo, hi), hi);
}

TEST(BestSplit, MatchesExhaustiveOracle) {
    SeededRng rng(17);
    for (int col = 0; col < 200; ++col) {
        const std::size_t n = 2 + rng.index(40);
        std::vector<double> v(n), g(n), h(n);
        // Few distinct values so ties are common; dyadic gradients keep sums exact.
        for (auto& x : v) x = static_cast<double>(rng.index(8));
        std::sort(v.begin(), v.end());
        for (auto& x : g) x = (static_cast<double>(rng.index(17)) - 8.0) / 8.0;
        for (auto& x : h) x = static_cast<double>(1 + rng.index(8)) / 8.0;
        const double l2 = rng.index(3) * 0.5;
        const double mcw = rng.index(3) * 0.25;
        const auto got = best_split(v, g, h, l2, mcw);
        const auto want = oracle::best_split(v, g, h, l2, mcw);
        ASSERT_EQ(got.has_value(), want.has_value()) << "column " << col;
        if (got) {
            EXPECT_EQ(got->left_count, want->left_count) << "column " << col;
            EXPECT_EQ(got->threshold, want->threshold) << "column " << col;
            EXPECT_NEAR(got->gain, want->gain, 1e-12) << "column " << col;
        }
    }
}

TEST(Fit, RejectsBadInput) {
    FeatureMatrix x(1);
    x.add_row(std::vector<double>{0.0});
    EXPECT_THROW(fit(x, std::vector<int>{0}, 3, params(5)), TrainingError);
    x.add_row(std::vector<double>{1.0});
    EXPECT_THROW(fit(x, std::vector<int>{0, 0}, 3, params(5)), TrainingError);
    EXPECT_THROW(fit(x, std::vector<int>{0, 3}, 3, params(5)), TrainingError);
    EXPECT_THROW(fit(x, std::vector<int>{0}, 3, params(5)), TrainingError);
    EXPECT_THROW(fit(x, std::vector<int>{0, 1}, 3, params(0)), TrainingError);
    auto bad_weights = params(5);
    bad_weights.class_weights = {1.0, -1.0, 1.0};
    EXPECT_THROW(fit(x, std::vector<int>{0, 1}, 3, bad_weights), TrainingError);
    FeatureMatrix nan(1);
    nan.add_row(std::vector<double>{0.0});
    nan.add_row(std::vector<double>{std::nan("")});
    EXPECT_THROW(fit(nan, std::vector<int>{0, 1}, 3, params(5)), TrainingError);
}

TEST(Fit, UntrainedEnsembleIsUniform) {
    const Ensemble e(3, 2, params(1));
    const auto p = e.predict_proba(std::vector<double>{0.3, 0.7});
    for (double v : p) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
    EXPECT_THROW(e.predict_proba(std::vector<double>{0.3}), DomainError);
}

TEST(Fit, RootSplitsOnTheInformativeFeature) {
    FeatureMatrix x(2);
    std::vector<int> y;
    SeededRng rng(5);
    for (int i = 0; i < 60; ++i) {
        const int c = i % 2;
        x.add_row(std::vector<double>{rng.uniform(), c + 0.1 * rng.uniform()});
        y.push_back(c);
    }
    const auto r = fit(x, y, 3, params(1));
    const auto& tree = r.ensemble.rounds()[0][0];
    EXPECT_EQ(tree.nodes[0].feature, 1);
    EXPECT_GT(tree.nodes[0].threshold, 0.1);
    EXPECT_LT(tree.nodes[0].threshold, 1.0);
    EXPECT_EQ(tree.nodes[0].cover, 60u);
}

TEST(Fit, LossIsMonotone) {
    const std::vector<Dataset> fixtures{blobs(1, 300, 3, 0.3), blobs(2, 300, 4, 1.2),
                                        blobs(3, 300, 3, 0.8, {0.7, 0.2, 0.1})};
    for (std::size_t f = 0; f < fixtures.size(); ++f) {
        auto p = params(100);
        if (f == 2) p.class_weights = {0.5, 1.5, 3.0};
        const auto r = fit(fixtures[f].x, fixtures[f].y, 3, p);
        ASSERT_EQ(r.loss_history.size(), 101u);
        EXPECT_NEAR(r.loss_history.front(), std::log(3.0), 1e-12);
        for (std::size_t i = 1; i < r.loss_history.size(); ++i) {
            EXPECT_LE(r.loss_history[i], r.loss_history[i - 1] + 1e-12) << "fixture " << f << " round " << i;
        }
        EXPECT_NEAR(r.loss_history.back(), weighted_log_loss(r.ensemble, fixtures[f].x, fixtures[f].y), 1e-9);
    }
}

TEST(Fit, SeparableClassesAreLearned) {
    const auto d = blobs(9, 300, 3, 0.3);
    const auto r = fit(d.x, d.y, 3, params(50));
    EXPECT_GE(train_accuracy(r.ensemble, d), 0.95);
}

TEST(Predict, ProbabilitiesMatchTreeWalkAndSumToOne) {
    const auto d = blobs(4, 200, 4, 1.0);
    auto p = params(20);
    p.max_depth = 3;
    const auto r = fit(d.x, d.y, 3, p);
    SeededRng rng(8);
    for (int i = 0; i < 200; ++i) {
        std::vector<double> q(4);
        for (auto& v : q) v = 3.0 * rng.uniform() - 1.0;
        const auto got = r.ensemble.predict_proba(q);
        const auto want = oracle::proba_by_walking(r.ensemble, q);
        double sum = 0;
        for (std::size_t c = 0; c < 3; ++c) {
            EXPECT_NEAR(got[c], want[c], 1e-12);
            EXPECT_GE(got[c], 0.0);
            sum += got[c];
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}

TEST(Predict, TreesRespectDepthAndCover) {
    const auto d = blobs(6, 150, 3, 1.0);
    auto p = params(10);
    p.max_depth = 2;
    const auto r = fit(d.x, d.y, 3, p);
    for (const auto& round : r.ensemble.rounds()) {
        for (const auto& tree : round) {
            EXPECT_LE(tree.nodes.size(), 7u);
            for (const auto& n : tree.nodes) {
                if (n.is_leaf()) continue;
                EXPECT_EQ(n.cover, tree.nodes[n.left].cover + tree.nodes[n.right].cover);
            }
        }
    }
    const auto cover = r.ensemble.feature_cover();
    EXPECT_EQ(cover.size(), 3u);
    EXPECT_GT(std::accumulate(cover.begin(), cover.end(), std::size_t{0}), 0u);
}

TEST(Determinism, SameInputSameBytes) {
    const auto d = blobs(12, 200, 3, 0.9);
    auto p = params(30);
    p.seed = 42;
    const auto a = fit(d.x, d.y, 3, p);
    const auto b = fit(d.x, d.y, 3, p);
    EXPECT_EQ(a.ensemble.serialize(), b.ensemble.serialize());
    EXPECT_EQ(a.loss_history, b.loss_history);
}

TEST(Determinism, RowOrderDoesNotChangePredictions) {
    const auto d = blobs(13, 120, 3, 0.9);
    std::vector<std::size_t> order(d.x.rows());
    std::iota(order.begin(), order.end(), 0);
    SeededRng rng(1);
    rng.shuffle(order);
    Dataset s{FeatureMatrix(3), {}};
    for (auto i : order) {
        s.x.add_row(d.x.row(i));
        s.y.push_back(d.y[i]);
    }
    const auto a = fit(d.x, d.y, 3, params(15));
    const auto b = fit(s.x, s.y, 3, params(15));
    for (std::size_t i = 0; i < d.x.rows(); ++i) {
        const auto pa = a.ensemble.predict_proba(d.x.row(i));
        const auto pb = b.ensemble.predict_proba(d.x.row(i));
        for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(pa[c], pb[c], 1e-9);
    }
}

TEST(Serialization, RoundTripAndTamper) {
    const auto d = blobs(14, 100, 3, 0.9);
    const auto r = fit(d.x, d.y, 3, params(5));
    const auto j = r.ensemble.to_json();
    const auto back = Ensemble::from_json(j);
    EXPECT_EQ(back, r.ensemble);
    EXPECT_EQ(back.serialize(), r.ensemble.serialize());

    auto version = j;
    version["version"] = 2;
    EXPECT_THROW(Ensemble::from_json(version), FormatError);
    auto format = j;
    format["format"] = "something-else";
    EXPECT_THROW(Ensemble::from_json(format), FormatError);
    auto short_round = j;
    short_round["trees"][0].erase(0);
    EXPECT_THROW(Ensemble::from_json(short_round), FormatError);
}
