#include "kvqa/runner.hpp"

#include <spdlog/spdlog.h>

#include "kvqa/errors.hpp"
#include "kvqa/hashing.hpp"
#include "kvqa/serialization.hpp"

namespace kvqa {

namespace {

constexpr int kCheckpointVersion = 1;
constexpr const char* kCheckpointFormat = "kvqa-build-checkpoint";

nlohmann::json stats_to_json(const BuildStats& s) {
    return {{"visited", s.visited}, {"appended", s.appended}, {"replaced", s.replaced},
            {"rejected", s.rejected}, {"skipped", s.skipped}};
}

BuildStats stats_from_json(const nlohmann::json& j) {
    return {j.at("visited").get<std::size_t>(), j.at("appended").get<std::size_t>(),
            j.at("replaced").get<std::size_t>(), j.at("rejected").get<std::size_t>(),
            j.at("skipped").get<std::size_t>()};
}

}  // namespace

ProblemRunner::ProblemRunner(ModelGateway& gateway, const PromptTemplates& templates, RunnerOptions options)
    : gateway_(gateway),
      templates_(templates),
      options_(options),
      generator_(gateway, templates, options.limits),
      predictor_(gateway, templates, options.mode) {
    if (options_.k == 0) throw ConfigError("k must be at least 1");
}

Embedding ProblemRunner::encode(const VqaProblem& problem) const {
    return gateway_.vlm_encode(problem.image_ref, problem.question);
}

std::vector<Demo> ProblemRunner::retrieve_demos(const DemoBank& bank, std::span<const double> embedding,
                                                const VqaProblem& problem) const {
    std::vector<Demo> demos;
    for (const DemoBankEntry* e : bank.retrieve_top_k(embedding, options_.k, problem.id)) demos.push_back(e->as_demo());
    if (demos.empty()) throw RetrievalError("no demos available for " + problem.id);
    return demos;
}

ProblemRun ProblemRunner::finish(const VqaProblem& problem, std::string caption, QuestionSet questions) const {
    ProblemRun run;
    run.caption = std::move(caption);
    run.demo_ids = questions.demo_ids;
    run.knowledge = generator_.generate_knowledge(questions);
    run.questions = std::move(questions);
    run.bundle = predictor_.predict_all(problem, run.knowledge.pieces);
    return run;
}

ProblemRun ProblemRunner::run(const VqaProblem& problem, const std::vector<Demo>& demos) const {
    std::string caption = gateway_.vlm_caption(problem.image_ref);
    QuestionSet questions = generator_.generate_questions(caption, problem.question, demos);
    return finish(problem, std::move(caption), std::move(questions));
}

ProblemRun ProblemRunner::run_with_questions(const VqaProblem& problem,
                                             std::vector<std::string> knowledge_questions) const {
    QuestionSet questions;
    questions.questions = std::move(knowledge_questions);
    return finish(problem, gateway_.vlm_caption(problem.image_ref), std::move(questions));
}

DemoBankEntry ProblemRunner::make_entry(const VqaProblem& problem, const ProblemRun& run, Embedding embedding) const {
    DemoBankEntry e;
    e.embedding = std::move(embedding);
    e.problem = problem;
    e.caption = run.caption;
    e.knowledge_questions = run.questions.questions;
    e.knowledge = run.knowledge.pieces;
    e.original_answer = run.bundle.original;
    e.knowledge_answers = run.bundle.knowledge_answers;
    const auto counts = count_useful_harmful(e.original_answer, e.knowledge_answers,
                                             reference_answers(problem, options_.mode));
    e.useful = counts.useful;
    e.harmful = counts.harmful;
    return e;
}

std::vector<Demo> demos_from_samples(ModelGateway& gateway, std::span<const SeedSample> samples) {
    std::vector<Demo> demos;
    for (const auto& s : samples) {
        if (s.knowledge_questions.empty()) throw ConfigError("manual demo " + s.problem.id + " has no questions");
        demos.push_back(Demo{s.problem.id, gateway.vlm_caption(s.problem.image_ref), s.problem.question,
                             s.knowledge_questions});
    }
    return demos;
}

DemoBank seed_bank(const ProblemRunner& runner, std::span<const SeedSample> seeds, std::size_t dim, double lambda) {
    if (seeds.empty()) throw ConfigError("seed_bank: at least one seed sample is required");
    DemoBank bank(dim, lambda, runner.options().mode);
    for (const auto& seed : seeds) {
        if (seed.knowledge_questions.empty()) throw ConfigError("seed " + seed.problem.id + " has no questions");
        ProblemRun run = runner.run_with_questions(seed.problem, seed.knowledge_questions);
        bank.add_seed(runner.make_entry(seed.problem, run, runner.encode(seed.problem)));
    }
    return bank;
}

void save_checkpoint(const BuildCheckpoint& c, const std::filesystem::path& path) {
    const nlohmann::json j{{"format", kCheckpointFormat}, {"version", kCheckpointVersion},
                           {"pass", c.pass},              {"next_index", c.next_index},
                           {"subset_digest", c.subset_digest}, {"stats", stats_to_json(c.stats)},
                           {"bank", c.bank}};
    write_text_file(path, j.dump() + "\n");
}

BuildCheckpoint load_checkpoint(const std::filesystem::path& path) {
    try {
        const auto j = nlohmann::json::parse(read_text_file(path));
        expect_format(j, kCheckpointFormat, kCheckpointVersion);
        return {j.at("pass").get<std::size_t>(), j.at("next_index").get<std::size_t>(),
                j.at("subset_digest").get<std::string>(), stats_from_json(j.at("stats")),
                j.at("bank").get<std::string>()};
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed checkpoint: ") + e.what());
    }
}

std::string subset_digest(std::span<const VqaProblem> subset) {
    std::uint64_t h = fnv1a64("subset");
    for (const auto& p : subset) h = hash_combine(h, p.id);
    return hex64(h);
}

BuildStats build_bank(const ProblemRunner& runner, DemoBank& bank, std::span<const VqaProblem> subset,
                      const BuildOptions& options, const BuildCheckpoint* resume) {
    if (options.passes > 0 && subset.empty()) throw ConfigError("build_bank: empty training subset");
    if (bank.empty()) throw RetrievalError("build_bank: the demo bank must be seeded first");
    BuildStats stats;
    std::size_t start_pass = 0;
    std::size_t start_index = 0;
    const std::string digest = subset_digest(subset);
    if (resume) {
        if (resume->subset_digest != digest) throw ConfigError("checkpoint belongs to a different training subset");
        bank = DemoBank::deserialize(resume->bank);
        stats = resume->stats;
        start_pass = resume->pass;
        start_index = resume->next_index;
        spdlog::info("resuming bank build at pass {} sample {}", start_pass + 1, start_index);
    }
    for (std::size_t pass = start_pass; pass < options.passes; ++pass) {
        for (std::size_t i = pass == start_pass ? start_index : 0; i < subset.size(); ++i) {
            const VqaProblem& problem = subset[i];
            try {
                Embedding embedding = runner.encode(problem);
                ProblemRun run = runner.run(problem, runner.retrieve_demos(bank, embedding, problem));
                ++stats.visited;
                if (run.knowledge.pieces.empty()) {
                    ++stats.skipped;
                    continue;
                }
                const auto outcome = bank.update(runner.make_entry(problem, run, std::move(embedding)));
                switch (outcome.result) {
                    case UpdateResult::Appended: ++stats.appended; break;
                    case UpdateResult::Replaced: ++stats.replaced; break;
                    case UpdateResult::Rejected: ++stats.rejected; break;
                }
            } catch (const BackendError& e) {
                if (options.checkpoint) {
                    save_checkpoint(BuildCheckpoint{pass, i, digest, stats, bank.serialize()}, *options.checkpoint);
                    spdlog::error("bank build stopped at pass {} sample {} ({}); checkpoint written to {}", pass + 1,
                                  problem.id, e.what(), options.checkpoint->string());
                }
                throw;
            }
        }
        spdlog::info("bank pass {}: size {}", pass + 1, bank.size());
    }
    return stats;
}

}  // namespace kvqa
