#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kvqa/backend.hpp"
#include "kvqa/demo_bank.hpp"
#include "kvqa/knowledge_gen.hpp"
#include "kvqa/mock_world.hpp"
#include "kvqa/prediction.hpp"
#include "kvqa/templates.hpp"

namespace kvqa {

// Everything produced for one problem before the knowledge filter runs.
struct ProblemRun {
    std::string caption;
    std::vector<std::string> demo_ids;
    QuestionSet questions;
    KnowledgeSet knowledge;
    PredictionBundle bundle;
};

struct RunnerOptions {
    AnswerMode mode = AnswerMode::Direct;
    GenerationLimits limits;
    std::size_t k = 3;
};

// Drives the model calls for a single problem: retrieval, question and
// knowledge generation and answer prediction. Safe to share across threads
// as long as the bank is not being modified.
class ProblemRunner {
public:
    ProblemRunner(ModelGateway& gateway, const PromptTemplates& templates, RunnerOptions options);

    Embedding encode(const VqaProblem& problem) const;

    // The k demos most similar to the problem, never the problem itself.
    std::vector<Demo> retrieve_demos(const DemoBank& bank, std::span<const double> embedding,
                                     const VqaProblem& problem) const;

    ProblemRun run(const VqaProblem& problem, const std::vector<Demo>& demos) const;

    // A run whose knowledge questions are given instead of generated.
    ProblemRun run_with_questions(const VqaProblem& problem, std::vector<std::string> knowledge_questions) const;

    DemoBankEntry make_entry(const VqaProblem& problem, const ProblemRun& run, Embedding embedding) const;

    const RunnerOptions& options() const noexcept { return options_; }
    ModelGateway& gateway() const noexcept { return gateway_; }

private:
    ProblemRun finish(const VqaProblem& problem, std::string caption, QuestionSet questions) const;

    ModelGateway& gateway_;
    const PromptTemplates& templates_;
    RunnerOptions options_;
    KnowledgeGenerator generator_;
    AnswerPredictor predictor_;
};

// Hand-made demos with their knowledge questions, turned into plain demos by
// captioning the image.
std::vector<Demo> demos_from_samples(ModelGateway& gateway, std::span<const SeedSample> samples);

/// One bank entry per seed, with knowledge and answers computed by the
/// models. Throws ConfigError on an empty seed list, duplicate ids or a seed
/// that yields no knowledge.
DemoBank seed_bank(const ProblemRunner& runner, std::span<const SeedSample> seeds, std::size_t dim, double lambda);

struct BuildOptions {
    std::size_t passes = 2;
    // Written when a backend failure aborts the traversal.
    std::optional<std::filesystem::path> checkpoint;
};

struct BuildStats {
    std::size_t visited = 0;
    std::size_t appended = 0;
    std::size_t replaced = 0;
    std::size_t rejected = 0;
    // Samples that produced no knowledge and were not offered to the bank.
    std::size_t skipped = 0;
};

// Position of an interrupted traversal.
struct BuildCheckpoint {
    std::size_t pass = 0;
    std::size_t next_index = 0;
    std::string subset_digest;
    BuildStats stats;
    std::string bank;  // serialized DemoBank
};

void save_checkpoint(const BuildCheckpoint& checkpoint, const std::filesystem::path& path);
BuildCheckpoint load_checkpoint(const std::filesystem::path& path);

// Digest of the ordered subset ids, used to match a checkpoint to its run.
std::string subset_digest(std::span<const VqaProblem> subset);

/// Traverses `subset` `passes` times in order: retrieve k demos, generate,
/// answer, count (u, h) and offer the entry to the bank. On a backend error
/// the checkpoint is written (if configured) and the error rethrown.
BuildStats build_bank(const ProblemRunner& runner, DemoBank& bank, std::span<const VqaProblem> subset,
                      const BuildOptions& options, const BuildCheckpoint* resume = nullptr);

}  // namespace kvqa
