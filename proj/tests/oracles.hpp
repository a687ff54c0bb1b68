#pragma once

// Slow reference implementations the library is checked against.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "kvqa/demo_bank.hpp"
#include "kvqa/gbdt.hpp"
#include "kvqa/hashing.hpp"
#include "kvqa/vector_math.hpp"

namespace kvqa::oracle {

// Scores every entry, sorts the whole list and cuts it.
inline std::vector<std::string> top_k_ids(const std::vector<DemoBankEntry>& entries, const Embedding& query,
                                          std::size_t k, const std::string& exclude = {}) {
    struct Scored {
        double sim;
        std::size_t index;
    };
    std::vector<Scored> all;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (!exclude.empty() && entries[i].id() == exclude) continue;
        all.push_back({cosine_similarity(query, entries[i].embedding), i});
    }
    std::stable_sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) { return a.sim > b.sim; });
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < std::min(k, all.size()); ++i) ids.push_back(entries[all[i].index].id());
    return ids;
}

// The bank update rule restated over a plain list: a candidate is compared
// with every entry that shares its id or exceeds lambda in similarity. If
// none does it is appended. Otherwise every compared entry it beats
// (fewer harmful, or as many harmful and more useful) is dropped and the
// candidate appended once; if it beats none, nothing changes. A candidate
// that fails to beat its own earlier record is dropped.
struct ReplayItem {
    std::string id;
    Embedding embedding;
    std::size_t h;
    std::size_t u;
};

inline bool beats(const ReplayItem& a, const ReplayItem& b) { return a.h < b.h || (a.h == b.h && a.u > b.u); }

inline std::vector<ReplayItem> replay(const std::vector<ReplayItem>& initial, const std::vector<ReplayItem>& candidates,
                                      double lambda) {
    std::vector<ReplayItem> state = initial;
    for (const auto& c : candidates) {
        const auto compared = [&](const ReplayItem& e) {
            return e.id == c.id || cosine_similarity(c.embedding, e.embedding) > lambda;
        };
        const bool own_record_kept =
            std::any_of(state.begin(), state.end(), [&](const ReplayItem& e) { return e.id == c.id && !beats(c, e); });
        if (own_record_kept) continue;
        const bool any_compared = std::any_of(state.begin(), state.end(), compared);
        const bool any_beaten =
            std::any_of(state.begin(), state.end(), [&](const ReplayItem& e) { return compared(e) && beats(c, e); });
        if (any_compared && !any_beaten) continue;
        std::vector<ReplayItem> next;
        for (const auto& e : state) {
            if (!(compared(e) && beats(c, e))) next.push_back(e);
        }
        next.push_back(c);
        state = std::move(next);
    }
    return state;
}

// Tries every cut between distinct neighbours and evaluates the gain from
// scratch sums on both sides.
inline std::optional<gbdt::Split> best_split(const std::vector<double>& values, const std::vector<double>& g,
                                             const std::vector<double>& h, double l2, double min_child) {
    const std::size_t n = values.size();
    const auto score = [&](std::size_t lo, std::size_t hi) {
        double sg = 0, sh = 0;
        for (std::size_t i = lo; i < hi; ++i) {
            sg += g[i];
            sh += h[i];
        }
        return std::pair{sg, sh};
    };
    const auto [G, H] = score(0, n);
    std::optional<gbdt::Split> best;
    for (std::size_t cut = 1; cut < n; ++cut) {
        if (!(values[cut - 1] < values[cut])) continue;
        const auto [gl, hl] = score(0, cut);
        const auto [gr, hr] = score(cut, n);
        if (hl < min_child || hr < min_child) continue;
        const double gain = 0.5 * (gl * gl / (hl + l2) + gr * gr / (hr + l2) - G * G / (H + l2));
        if (gain < gbdt::kMinGain) continue;
        if (!best || gain > best->gain) best = gbdt::Split{gbdt::midpoint(values[cut - 1], values[cut]), gain, cut};
    }
    return best;
}

// Walks a tree from the root without using Tree::predict.
inline double walk(const gbdt::Tree& tree, const std::vector<double>& x) {
    int node = 0;
    for (;;) {
        const auto& n = tree.nodes.at(static_cast<std::size_t>(node));
        if (n.feature < 0) return n.weight;
        node = x.at(static_cast<std::size_t>(n.feature)) < n.threshold ? n.left : n.right;
    }
}

inline std::vector<double> proba_by_walking(const gbdt::Ensemble& e, const std::vector<double>& x) {
    std::vector<double> m(e.n_classes(), 0.0);
    for (const auto& round : e.rounds()) {
        for (std::size_t c = 0; c < e.n_classes(); ++c) m[c] += walk(round[c], x);
    }
    const double mx = *std::max_element(m.begin(), m.end());
    double z = 0;
    for (auto& v : m) z += (v = std::exp(v - mx));
    for (auto& v : m) v /= z;
    return m;
}

// Random helpers shared by tests.
inline Embedding random_unit(SeededRng& rng, std::size_t d) {
    Embedding v(d);
    for (auto& x : v) x = 2.0 * rng.uniform() - 1.0;
    normalize_in_place(v);
    return v;
}

inline Embedding jitter(SeededRng& rng, const Embedding& center, double scale) {
    Embedding v = center;
    for (auto& x : v) x += scale * (2.0 * rng.uniform() - 1.0);
    normalize_in_place(v);
    return v;
}

// A bank entry with the given counts and one dummy knowledge piece per
// counted answer; (u, h) are taken as given.
inline DemoBankEntry synthetic_entry(const std::string& id, Embedding e, std::size_t h, std::size_t u) {
    DemoBankEntry entry;
    entry.embedding = std::move(e);
    entry.problem = VqaProblem{id, "img:" + id, "What is it?", {"x"}, std::nullopt, std::nullopt, Split::Train};
    entry.caption = "scene " + id;
    entry.knowledge_questions = {"What is it?"};
    const std::size_t n = std::max<std::size_t>(1, h + u);
    for (std::size_t i = 0; i < n; ++i) {
        entry.knowledge.push_back({"fact " + std::to_string(i), "What is it?", i});
        entry.knowledge_answers.push_back(ScoredAnswer::with_confidence("x", 0.5));
    }
    entry.original_answer = ScoredAnswer::with_confidence("x", 0.5);
    entry.harmful = h;
    entry.useful = u;
    return entry;
}

}  // namespace kvqa::oracle
