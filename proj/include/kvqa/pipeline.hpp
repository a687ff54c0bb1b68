#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kvqa/backend.hpp"
#include "kvqa/config.hpp"
#include "kvqa/demo_bank.hpp"
#include "kvqa/knowledge_filter.hpp"
#include "kvqa/runner.hpp"
#include "kvqa/templates.hpp"

namespace kvqa {

std::shared_ptr<ModelBackend> make_backend(const BackendConfig& config);

// Models, templates and runner for one run. Not movable: the runner refers
// to the gateway and templates held here.
class Session {
public:
    explicit Session(RunConfig config);
    // For tests: use a backend built elsewhere.
    Session(RunConfig config, std::shared_ptr<ModelBackend> backend, bool validate = true);
    Session(const Session&) = delete;
    Session& operator=(const Session&) = delete;

    const RunConfig& config() const noexcept { return config_; }
    const PromptTemplates& templates() const noexcept { return *templates_; }
    ModelGateway& gateway() const noexcept { return *gateway_; }
    const ProblemRunner& runner() const noexcept { return *runner_; }

private:
    RunConfig config_;
    std::unique_ptr<PromptTemplates> templates_;
    std::unique_ptr<ModelGateway> gateway_;
    std::unique_ptr<ProblemRunner> runner_;
};

/// Seeded uniform draw of min(size, n) problems, in draw order.
std::vector<VqaProblem> select_train_subset(std::span<const VqaProblem> problems, std::size_t size,
                                            std::uint64_t seed);

// A problem taken through retrieval, generation, answering and feature
// extraction. `labels` are the reference classes from the ground truth.
struct ProblemOutcome {
    VqaProblem problem;
    ProblemRun run;
    std::vector<KnowledgeFeatures> features;
    std::vector<KnowledgeClass> labels;
    std::optional<std::string> error;  // set when the problem was skipped

    bool ok() const noexcept { return !error.has_value(); }
};

/// Runs every problem with demos retrieved from `bank`, or with `fixed_demos`
/// when given. Problems run on config().workers threads; results keep input
/// order. Backend and feature failures mark the problem skipped.
std::vector<ProblemOutcome> collect_outcomes(const Session& session, const DemoBank* bank,
                                             std::span<const VqaProblem> problems,
                                             const std::vector<Demo>* fixed_demos = nullptr);

std::vector<LabeledFeatures> labeled_features(std::span<const ProblemOutcome> outcomes);

struct BankBuildResult {
    DemoBank bank;
    BuildStats stats;
    std::vector<std::string> subset_ids;
};

struct PerceiverTrainResult {
    Perceiver perceiver;
    std::vector<ProblemOutcome> outcomes;
    std::size_t n_vectors = 0;
    std::array<std::size_t, kClassCount> class_counts{};
    double train_accuracy = 0.0;
};

struct ModeRow {
    std::string mode;
    double accuracy = 0.0;
    std::size_t n = 0;
};

struct MetricsReport {
    std::string phase;
    AnswerMode answer_mode = AnswerMode::Direct;
    std::vector<ModeRow> rows;
    // confusion[true][predicted], in class order useful, neutral, harmful.
    std::array<std::array<std::size_t, kClassCount>, kClassCount> confusion{};
    FeatureImportance importance;
    std::size_t bank_size = 0;
    std::size_t n_problems = 0;
    std::vector<std::string> skipped_ids;
    std::size_t malformed = 0;
    nlohmann::json traces = nlohmann::json::array();

    const ModeRow* row(const std::string& mode) const;
    nlohmann::json to_json() const;
    std::string to_text() const;
};

// Mode names used in reports.
inline constexpr const char* kModeFull = "full";
inline constexpr const char* kModeNoDemoBank = "without_demo_bank";
inline constexpr const char* kModeNoPerceiver = "without_perceiver";
inline constexpr const char* kModeNoKnowledge = "without_knowledge";

// Phase entry points. Each writes its artifacts to config.output_dir and
// updates manifest.json there.
BankBuildResult run_build_bank(const Session& session, bool resume = false);
PerceiverTrainResult run_train_perceiver(const Session& session);
MetricsReport run_evaluate(const Session& session, bool ablate);

/// Generates a mock world and writes world.json, problems.jsonl, seeds.jsonl,
/// manual_demos.jsonl and a config.json (paths relative to `dir`, output in
/// dir/out) into `dir`.
MockCorpus write_mock_workspace(const MockWorldParams& params, const std::filesystem::path& dir, AnswerMode mode);

std::filesystem::path bank_path(const RunConfig& config);
std::filesystem::path perceiver_path(const RunConfig& config);
std::filesystem::path manifest_path(const RunConfig& config);
std::filesystem::path report_path(const RunConfig& config);

/// Config stored in a manifest, after checking that templates, inputs and
/// artifacts still match the recorded digests. Throws ConfigError otherwise.
RunConfig config_from_manifest(const std::filesystem::path& path);

}  // namespace kvqa
