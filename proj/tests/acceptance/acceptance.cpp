// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. Usage: kvqa_acceptance [scratch-dir] [criterion]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "kvqa/config.hpp"
#include "kvqa/dataset.hpp"
#include "kvqa/errors.hpp"
#include "kvqa/pipeline.hpp"
#include "kvqa/serialization.hpp"
#include "../oracles.hpp"

using namespace kvqa;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

fs::path g_scratch;

// Default mock workspace: seed 7, 500 problems, known 0.5, noise 0.2.
struct DefaultRun {
    RunConfig config;
    MetricsReport report;
    double seconds = 0.0;
};

const DefaultRun& default_run() {
    static const DefaultRun run = [] {
        const auto t0 = Clock::now();
        const fs::path dir = g_scratch / "default";
        fs::remove_all(dir);
        MockWorldParams p;
        p.seed = 7;
        p.n_problems = 500;
        p.vlm_known_fraction = 0.5;
        p.noise = 0.2;
        write_mock_workspace(p, dir, AnswerMode::Direct);
        DefaultRun r{load_config(dir / "config.json"), {}, 0.0};
        Session s(r.config);
        run_build_bank(s);
        run_train_perceiver(s);
        r.report = run_evaluate(s, true);
        r.seconds = seconds_since(t0);
        return r;
    }();
    return run;
}

Verdict retrieval_matches_brute_force() {
    const auto t0 = Clock::now();
    SeededRng rng(1001);
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t d = 64;
        const std::size_t n = 1 + rng.index(500);
        DemoBank bank(d, 0.85);
        std::vector<Embedding> pool;
        for (std::size_t i = 0; i < n; ++i) {
            Embedding e = (!pool.empty() && rng.bernoulli(0.1)) ? pool[rng.index(pool.size())] : oracle::random_unit(rng, d);
            pool.push_back(e);
            bank.add_seed(oracle::synthetic_entry("e" + std::to_string(i), e, 0, 1));
        }
        for (int q = 0; q < 5; ++q) {
            const Embedding query = rng.bernoulli(0.3) ? pool[rng.index(pool.size())] : oracle::random_unit(rng, d);
            const std::size_t k = 1 + rng.index(20);
            std::vector<std::string> got;
            for (const auto* e : bank.retrieve_top_k(query, k)) got.push_back(e->id());
            mismatches += got != oracle::top_k_ids(bank.entries(), query, k);
        }
    }
    const double t = seconds_since(t0);
    return {mismatches == 0 && t < 5.0, fmt::format("100 banks x 5 queries, {} mismatches, {:.2f} s", mismatches, t)};
}

Verdict update_replay_equivalence() {
    const auto t0 = Clock::now();
    SeededRng rng(2002);
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t d = 16;
        const double lambda = 0.7 + 0.25 * rng.uniform();
        std::vector<Embedding> centers;
        for (int c = 0; c < 6; ++c) centers.push_back(oracle::random_unit(rng, d));
        DemoBank bank(d, lambda);
        for (int s = 0; s < 3; ++s) bank.add_seed(oracle::synthetic_entry("seed" + std::to_string(s), centers[s], 1, 1));
        std::vector<oracle::ReplayItem> initial;
        for (const auto& e : bank.entries()) initial.push_back({e.id(), e.embedding, e.harmful, e.useful});

        std::vector<oracle::ReplayItem> seq;
        const std::size_t len = 1 + rng.index(200);
        for (std::size_t i = 0; i < len; ++i) {
            oracle::ReplayItem c{"p" + std::to_string(rng.index(60)),
                                 oracle::jitter(rng, centers[rng.index(centers.size())], 0.4 * rng.uniform()),
                                 rng.index(4), rng.index(5)};
            bank.update(oracle::synthetic_entry(c.id, c.embedding, c.h, c.u));
            seq.push_back(std::move(c));
        }
        const auto expected = oracle::replay(initial, seq, lambda);
        bool same = expected.size() == bank.size();
        for (std::size_t i = 0; same && i < expected.size(); ++i) {
            const auto& e = bank.entries()[i];
            same = e.id() == expected[i].id && e.harmful == expected[i].h && e.useful == expected[i].u &&
                   e.embedding == expected[i].embedding;
        }
        mismatches += !same;
    }
    const double t = seconds_since(t0);
    return {mismatches == 0 && t < 10.0, fmt::format("100 sequences, {} mismatches, {:.2f} s", mismatches, t)};
}

Verdict useful_harmful_consistency() {
    const auto& run = default_run();
    Session s(run.config);
    const DemoBank bank = DemoBank::load(bank_path(run.config));
    bank.audit();
    const auto subset = select_train_subset(
        problems_with_split(ingest_dataset(run.config.dataset.path, run.config.dataset.format).problems,
                            run.config.train_split),
        run.config.train_subset_size, run.config.seed);
    const auto outcomes = collect_outcomes(s, &bank, subset);
    std::size_t checked = 0;
    std::size_t bad = 0;
    for (const auto& o : outcomes) {
        if (!o.ok()) continue;
        const auto entry = s.runner().make_entry(o.problem, o.run, s.runner().encode(o.problem));
        std::size_t useful = 0;
        std::size_t harmful = 0;
        for (auto l : o.labels) {
            useful += l == KnowledgeClass::Useful;
            harmful += l == KnowledgeClass::Harmful;
        }
        ++checked;
        bad += entry.useful != useful || entry.harmful != harmful;
    }
    return {bad == 0 && checked > 0,
            fmt::format("{} training problems, {} disagreements, {} bank entries audited", checked, bad, bank.size())};
}

struct Blobs {
    gbdt::FeatureMatrix x{4};
    std::vector<int> y;
};

Blobs blobs(std::uint64_t seed, std::size_t n, double spread) {
    SeededRng rng(seed);
    Blobs b;
    for (std::size_t i = 0; i < n; ++i) {
        const int c = static_cast<int>(rng.index(3));
        std::vector<double> row(4);
        for (std::size_t j = 0; j < 4; ++j) row[j] = (j == static_cast<std::size_t>(c) ? 1.0 : 0.0) + spread * (2 * rng.uniform() - 1);
        b.x.add_row(row);
        b.y.push_back(c);
    }
    return b;
}

Verdict gbdt_checks() {
    SeededRng rng(4004);
    std::size_t split_mismatch = 0;
    for (int col = 0; col < 200; ++col) {
        const std::size_t n = 2 + rng.index(64);
        std::vector<double> v(n), g(n), h(n);
        for (auto& x : v) x = static_cast<double>(rng.index(12));
        std::sort(v.begin(), v.end());
        for (auto& x : g) x = (static_cast<double>(rng.index(33)) - 16.0) / 16.0;
        for (auto& x : h) x = static_cast<double>(1 + rng.index(16)) / 16.0;
        const double l2 = static_cast<double>(rng.index(3));
        const double mcw = static_cast<double>(rng.index(3)) * 0.5;
        const auto a = gbdt::best_split(v, g, h, l2, mcw);
        const auto b = oracle::best_split(v, g, h, l2, mcw);
        const bool same = a.has_value() == b.has_value() &&
                          (!a || (a->left_count == b->left_count && a->threshold == b->threshold &&
                                  std::abs(a->gain - b->gain) <= 1e-12));
        split_mismatch += !same;
    }

    std::size_t loss_violations = 0;
    const std::vector<Blobs> fixtures{blobs(1, 300, 0.3), blobs(2, 300, 1.0), blobs(3, 300, 2.0)};
    for (const auto& f : fixtures) {
        gbdt::BoostParams p;
        p.n_rounds = 100;
        const auto r = gbdt::fit(f.x, f.y, 3, p);
        for (std::size_t i = 1; i < r.loss_history.size(); ++i) loss_violations += r.loss_history[i] > r.loss_history[i - 1] + 1e-12;
    }

    const auto sep = blobs(9, 300, 0.3);
    gbdt::BoostParams p;
    p.n_rounds = 50;
    p.seed = 5;
    const auto r = gbdt::fit(sep.x, sep.y, 3, p);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < sep.x.rows(); ++i) {
        const auto pr = r.ensemble.predict_proba(sep.x.row(i));
        hits += static_cast<int>(std::max_element(pr.begin(), pr.end()) - pr.begin()) == sep.y[i];
    }
    const double acc = static_cast<double>(hits) / static_cast<double>(sep.x.rows());
    const bool identical = gbdt::fit(sep.x, sep.y, 3, p).ensemble.serialize() == r.ensemble.serialize();

    return {split_mismatch == 0 && loss_violations == 0 && acc >= 0.95 && identical,
            fmt::format("split mismatches {}/200, loss increases {}, separable accuracy {:.3f}, same-seed identical {}",
                        split_mismatch, loss_violations, acc, identical)};
}

Verdict softmax_features_sum_to_one() {
    const fs::path dir = g_scratch / "thousand";
    fs::remove_all(dir);
    MockWorldParams p;
    p.n_problems = 1000;
    write_mock_workspace(p, dir, AnswerMode::Direct);
    const RunConfig c = load_config(dir / "config.json", {"passes=1"});
    Session s(c);
    const auto bank = run_build_bank(s).bank;
    const auto problems = ingest_dataset(c.dataset.path, c.dataset.format).problems;
    const auto outcomes = collect_outcomes(s, &bank, problems);
    double worst = 0.0;
    std::size_t with_knowledge = 0;
    for (const auto& o : outcomes) {
        if (!o.ok() || o.features.empty()) continue;
        ++with_knowledge;
        for (auto idx : {kKnowledgeConfidentImportant, kKnowledgeVisualImportant, kKnowledgeCaptionImportant}) {
            double sum = 0.0;
            for (const auto& f : o.features) sum += f[idx];
            worst = std::max(worst, std::abs(sum - 1.0));
        }
    }
    return {worst <= 1e-9 && with_knowledge > 0,
            fmt::format("{} problems with knowledge out of {}, max |sum - 1| = {:.2e}", with_knowledge,
                        outcomes.size(), worst)};
}

Verdict ablation_margins() {
    const auto& run = default_run();
    const double full = run.report.row(kModeFull)->accuracy;
    const double no_k = run.report.row(kModeNoKnowledge)->accuracy;
    const double no_p = run.report.row(kModeNoPerceiver)->accuracy;
    const bool ok = full - no_k >= 0.20 && full - no_p >= 0.03 && run.seconds < 300.0;
    return {ok, fmt::format("full {:.4f}, without_knowledge {:.4f} (+{:.1f} pts), without_perceiver {:.4f} (+{:.1f} pts), "
                            "without_demo_bank {:.4f}, {:.1f} s",
                            full, no_k, 100 * (full - no_k), no_p, 100 * (full - no_p),
                            run.report.row(kModeNoDemoBank)->accuracy, run.seconds)};
}

Verdict more_data_does_not_hurt() {
    const fs::path dir = g_scratch / "perceiver-data";
    fs::remove_all(dir);
    MockWorldParams p;
    p.seed = 21;
    p.n_problems = 1200;
    p.n_facts = 2000;
    write_mock_workspace(p, dir, AnswerMode::Direct);
    const RunConfig c = load_config(dir / "config.json", {"passes=1"});
    Session s(c);
    const auto bank = run_build_bank(s).bank;
    const auto all = ingest_dataset(c.dataset.path, c.dataset.format).problems;
    const auto train = labeled_features(collect_outcomes(s, &bank, problems_with_split(all, Split::Train)));
    const auto held = labeled_features(collect_outcomes(s, &bank, problems_with_split(all, Split::Val)));
    if (train.size() < 1000 || held.empty()) {
        return {false, fmt::format("not enough vectors: {} train, {} held-out", train.size(), held.size())};
    }
    const auto accuracy = [&](const Perceiver& model) {
        std::size_t hits = 0;
        for (const auto& v : held) hits += model.classify(v.features).label == v.label;
        return static_cast<double>(hits) / static_cast<double>(held.size());
    };
    bool ok = true;
    std::string detail = fmt::format("{} train / {} held-out vectors;", train.size(), held.size());
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        auto shuffled = train;
        SeededRng rng(seed);
        rng.shuffle(shuffled);
        const std::vector<LabeledFeatures> small(shuffled.begin(), shuffled.begin() + 100);
        const std::vector<LabeledFeatures> large(shuffled.begin(), shuffled.begin() + 1000);
        PerceiverParams params = c.perceiver;
        params.boost.seed = seed;
        const double a100 = accuracy(Perceiver::train(small, params));
        const double a1000 = accuracy(Perceiver::train(large, params));
        ok = ok && a1000 >= a100;
        detail += fmt::format(" seed {}: {:.4f} (100) vs {:.4f} (1000);", seed, a100, a1000);
    }
    detail.pop_back();
    return {ok, detail};
}

Verdict manifest_rerun_identical() {
    const auto& run = default_run();
    std::vector<std::string> reports;
    for (std::size_t workers : {1u, 4u}) {
        RunConfig c = config_from_manifest(manifest_path(run.config));
        c.workers = workers;
        Session s(c);
        run_evaluate(s, false);
        reports.push_back(read_text_file(report_path(c)));
    }
    const bool same = reports[0] == reports[1];
    return {same, fmt::format("two evaluate runs (1 and 4 workers), {} bytes, identical {}", reports[0].size(), same)};
}

Verdict artifacts_round_trip() {
    const auto& run = default_run();
    const auto bank_file = bank_path(run.config);
    const auto perceiver_file = perceiver_path(run.config);
    const fs::path dir = g_scratch / "roundtrip";
    fs::remove_all(dir);
    fs::create_directories(dir);

    DemoBank::load(bank_file).save(dir / "bank.jsonl");
    Perceiver::load(perceiver_file).save(dir / "perceiver.json");
    const bool bank_same = read_text_file(bank_file) == read_text_file(dir / "bank.jsonl");
    const bool perceiver_same = read_text_file(perceiver_file) == read_text_file(dir / "perceiver.json");

    const auto rejects = [](const std::function<void()>& f) {
        try {
            f();
        } catch (const FormatError&) {
            return true;
        }
        return false;
    };
    std::string bank_text = read_text_file(bank_file);
    const auto nl = bank_text.find('\n');
    auto header = nlohmann::json::parse(bank_text.substr(0, nl));
    header["version"] = header["version"].get<int>() + 1;
    const bool bank_rejected = rejects([&] { DemoBank::deserialize(header.dump() + bank_text.substr(nl)); });
    auto pj = nlohmann::json::parse(read_text_file(perceiver_file));
    pj["version"] = pj["version"].get<int>() + 1;
    const bool perceiver_rejected = rejects([&] { Perceiver::deserialize(pj.dump()); });

    return {bank_same && perceiver_same && bank_rejected && perceiver_rejected,
            fmt::format("bank identical {}, perceiver identical {}, tampered bank rejected {}, tampered perceiver "
                        "rejected {}",
                        bank_same, perceiver_same, bank_rejected, perceiver_rejected)};
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_level(spdlog::level::warn);
    g_scratch = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "kvqa-acceptance";
    const std::size_t only = argc > 2 ? std::stoul(argv[2]) : 0;
    if (only > 0) g_scratch /= std::to_string(only);
    fs::create_directories(g_scratch);

    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"top-k retrieval equals brute force", retrieval_matches_brute_force},
        {"bank update equals reference replay", update_replay_equivalence},
        {"u/h agree with knowledge labels", useful_harmful_consistency},
        {"gbdt split oracle, monotone loss, separable fit, determinism", gbdt_checks},
        {"importance features sum to one", softmax_features_sum_to_one},
        {"full pipeline beats ablations", ablation_margins},
        {"perceiver does not lose accuracy with more data", more_data_does_not_hurt},
        {"manifest re-run gives identical report", manifest_rerun_identical},
        {"artifact round trip and version check", artifacts_round_trip},
    };
    int failed = 0;
    if (only > criteria.size()) {
        std::fprintf(stderr, "no criterion %zu\n", only);
        return 2;
    }
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (only > 0 && i + 1 != only) continue;
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        failed += !v.pass;
        std::printf("%s %zu %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), v.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
