#include "kvqa/pipeline.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "kvqa/dataset.hpp"
#include "kvqa/errors.hpp"
#include "kvqa/hashing.hpp"
#include "kvqa/mock_world.hpp"
#include "kvqa/serialization.hpp"

namespace kvqa {

namespace {

using nlohmann::json;

constexpr int kManifestVersion = 1;
constexpr const char* kManifestFormat = "kvqa-manifest";
constexpr int kReportVersion = 1;
constexpr const char* kReportFormat = "kvqa-report";

// Runs fn(i) for i in [0, n) on up to `workers` threads. The first exception
// thrown by any call is rethrown after all threads finish.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    next = n;
                }
            }
        });
    }
    for (auto& t : threads) t.join();
    if (failure) std::rethrow_exception(failure);
}

std::vector<VqaProblem> load_split(const DatasetConfig& dataset, Split split) {
    auto problems = problems_with_split(ingest_dataset(dataset.path, dataset.format).problems, split);
    if (problems.empty()) {
        throw ConfigError(dataset.path.string() + " holds no problems in split " + std::string(to_string(split)));
    }
    return problems;
}

json input_entry(const std::filesystem::path& p) { return {{"path", p.string()}, {"checksum", file_checksum(p)}}; }

json manifest_inputs(const RunConfig& c) {
    json inputs = json::object();
    if (c.backend.kind == BackendKind::Mock) inputs["world"] = input_entry(c.backend.world);
    inputs["dataset"] = input_entry(c.dataset.path);
    if (c.eval_dataset) inputs["eval_dataset"] = input_entry(c.eval_dataset->path);
    inputs["seeds"] = input_entry(c.seeds);
    if (!c.manual_demos.empty()) inputs["manual_demos"] = input_entry(c.manual_demos);
    if (c.templates) inputs["templates"] = input_entry(*c.templates);
    return inputs;
}

// Worker count does not change results, so it does not separate runs.
json run_identity(const RunConfig& c) {
    json j = to_json(c);
    j.erase("workers");
    return j;
}

// Loads the manifest in the output directory (when it belongs to the same
// config), refreshes the run description and lets `fill` add a phase section.
template <typename Fill>
void update_manifest(const Session& session, Fill&& fill) {
    const RunConfig& c = session.config();
    const auto path = manifest_path(c);
    json m;
    if (std::filesystem::exists(path)) {
        try {
            m = json::parse(read_text_file(path));
            if (!m.contains("config") || run_identity(config_from_json(m["config"])) != run_identity(c)) m = json();
        } catch (const std::exception&) {
            m = json();
        }
    }
    m["format"] = kManifestFormat;
    m["version"] = kManifestVersion;
    m["config"] = to_json(c);
    m["seed"] = c.seed;
    m["template_digest"] = session.templates().digest();
    m["inputs"] = manifest_inputs(c);
    fill(m);
    write_text_file(path, m.dump(2) + "\n");
}

std::vector<VqaProblem> train_subset(const RunConfig& c) {
    return select_train_subset(load_split(c.dataset, c.train_split), c.train_subset_size, c.seed);
}

double answer_score(const VqaProblem& p, AnswerMode mode, const ScoredAnswer& answer, bool& malformed) {
    if (mode == AnswerMode::MultipleChoice) {
        const auto s = exact_choice_match(answer.text, correct_letter(p), p.choices->size());
        malformed = malformed || s.malformed;
        return s.score;
    }
    return direct_answer_score(answer.key(), p.ground_truth);
}

std::vector<KnowledgeClass> classify_all(const Perceiver& perceiver, const ProblemOutcome& o,
                                         std::vector<Classification>* details = nullptr) {
    std::vector<KnowledgeClass> out;
    for (const auto& f : o.features) {
        const auto c = perceiver.classify(f);
        out.push_back(c.label);
        if (details) details->push_back(c);
    }
    return out;
}

ScoredAnswer full_answer(const Perceiver& perceiver, const ProblemOutcome& o) {
    if (o.features.empty()) return o.run.bundle.original;
    return aggregate_final_answer(o.run.bundle, classify_all(perceiver, o)).answer;
}

json answer_json(const ScoredAnswer& a) { return {{"text", a.text}, {"confidence", a.confidence}}; }

}  // namespace

std::shared_ptr<ModelBackend> make_backend(const BackendConfig& config) {
    if (config.kind == BackendKind::Mock) return std::make_shared<MockBackend>(load_mock_world(config.world));
    return std::make_shared<HttpBackend>(config.url, config.retry, config.timeout);
}

Session::Session(RunConfig config) : Session(config, nullptr) {}

Session::Session(RunConfig config, std::shared_ptr<ModelBackend> backend, bool validate) : config_(std::move(config)) {
    if (validate) config_.validate();
    templates_ = std::make_unique<PromptTemplates>(config_.templates ? load_templates(*config_.templates)
                                                                     : PromptTemplates{});
    if (!backend) backend = make_backend(config_.backend);
    gateway_ = std::make_unique<ModelGateway>(std::move(backend));
    RunnerOptions options;
    options.mode = config_.answer_mode;
    options.limits = GenerationLimits{config_.m_max, config_.n_max};
    options.k = config_.k;
    runner_ = std::make_unique<ProblemRunner>(*gateway_, *templates_, options);
}

std::vector<VqaProblem> select_train_subset(std::span<const VqaProblem> problems, std::size_t size,
                                            std::uint64_t seed) {
    std::vector<std::size_t> order(problems.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    SeededRng rng(hash_combine(seed, "train-subset"));
    rng.shuffle(order);
    order.resize(std::min(size, order.size()));
    std::vector<VqaProblem> out;
    out.reserve(order.size());
    for (auto i : order) out.push_back(problems[i]);
    return out;
}

std::vector<ProblemOutcome> collect_outcomes(const Session& session, const DemoBank* bank,
                                             std::span<const VqaProblem> problems,
                                             const std::vector<Demo>* fixed_demos) {
    if (!bank && !fixed_demos) throw ConfigError("collect_outcomes: need a bank or fixed demos");
    std::vector<ProblemOutcome> out(problems.size());
    const ProblemRunner& runner = session.runner();
    const AnswerMode mode = session.config().answer_mode;
    parallel_for(problems.size(), session.config().workers, [&](std::size_t i) {
        ProblemOutcome& o = out[i];
        o.problem = problems[i];
        try {
            std::vector<Demo> demos;
            if (fixed_demos) {
                demos = *fixed_demos;
            } else {
                demos = runner.retrieve_demos(*bank, runner.encode(o.problem), o.problem);
            }
            o.run = runner.run(o.problem, demos);
            if (!o.run.knowledge.pieces.empty()) {
                o.features = extract_features(session.gateway(), o.problem, o.run.bundle, o.run.knowledge, o.run.caption);
                const auto refs = reference_answers(o.problem, mode);
                for (const auto& a : o.run.bundle.knowledge_answers) {
                    o.labels.push_back(label_knowledge(o.run.bundle.original, a, refs));
                }
            }
        } catch (const BackendError& e) {
            o.error = e.what();
        } catch (const EvaluationError& e) {
            o.error = e.what();
        }
        if (o.error) spdlog::warn("skipping {}: {}", o.problem.id, *o.error);
    });
    return out;
}

std::vector<LabeledFeatures> labeled_features(std::span<const ProblemOutcome> outcomes) {
    std::vector<LabeledFeatures> out;
    for (const auto& o : outcomes) {
        if (!o.ok()) continue;
        for (std::size_t i = 0; i < o.features.size(); ++i) out.push_back({o.features[i], o.labels[i]});
    }
    return out;
}

MockCorpus write_mock_workspace(const MockWorldParams& params, const std::filesystem::path& dir, AnswerMode mode) {
    MockCorpus corpus = generate_mock_world(params);
    std::filesystem::create_directories(dir);
    save_mock_world(corpus.world, dir / "world.json");
    save_problems_jsonl(corpus.problems, dir / "problems.jsonl");
    save_samples_jsonl(corpus.seeds, dir / "seeds.jsonl");
    save_samples_jsonl(corpus.manual_demos, dir / "manual_demos.jsonl");
    const nlohmann::json config{{"backend", {{"kind", "mock"}, {"world", "world.json"}}},
                                {"dataset", {{"path", "problems.jsonl"}, {"format", "mockworld_jsonl"}}},
                                {"seeds", "seeds.jsonl"},
                                {"manual_demos", "manual_demos.jsonl"},
                                {"answer_mode", std::string(to_string(mode))},
                                {"output_dir", "out"},
                                {"seed", params.seed}};
    write_text_file(dir / "config.json", config.dump(2) + "\n");
    return corpus;
}

std::filesystem::path bank_path(const RunConfig& c) { return c.output_dir / "bank.jsonl"; }
std::filesystem::path perceiver_path(const RunConfig& c) { return c.output_dir / "perceiver.json"; }
std::filesystem::path manifest_path(const RunConfig& c) { return c.output_dir / "manifest.json"; }
std::filesystem::path report_path(const RunConfig& c) { return c.output_dir / "report.json"; }

BankBuildResult run_build_bank(const Session& session, bool resume) {
    const RunConfig& c = session.config();
    std::filesystem::create_directories(c.output_dir);
    const auto subset = train_subset(c);
    const auto seeds = load_samples_jsonl(c.seeds);
    if (seeds.empty()) throw ConfigError("seed file " + c.seeds.string() + " is empty");
    const auto dim = session.runner().encode(seeds.front().problem).size();
    BankBuildResult result{seed_bank(session.runner(), seeds, dim, c.lambda), {}, {}};
    spdlog::info("seeded demo bank with {} entries; traversing {} training problems {} times", result.bank.size(),
                 subset.size(), c.passes);

    const auto checkpoint_file = c.output_dir / "bank.checkpoint.json";
    std::optional<BuildCheckpoint> checkpoint;
    if (resume && std::filesystem::exists(checkpoint_file)) checkpoint = load_checkpoint(checkpoint_file);
    result.stats = build_bank(session.runner(), result.bank, subset, BuildOptions{c.passes, checkpoint_file},
                              checkpoint ? &*checkpoint : nullptr);
    if (std::filesystem::exists(checkpoint_file)) std::filesystem::remove(checkpoint_file);
    result.bank.save(bank_path(c));
    for (const auto& p : subset) result.subset_ids.push_back(p.id);

    update_manifest(session, [&](json& m) {
        m["train_subset_ids"] = result.subset_ids;
        m["bank"] = {{"file", bank_path(c).filename().string()},
                     {"checksum", file_checksum(bank_path(c))},
                     {"size", result.bank.size()},
                     {"visited", result.stats.visited},
                     {"appended", result.stats.appended},
                     {"replaced", result.stats.replaced},
                     {"rejected", result.stats.rejected},
                     {"skipped", result.stats.skipped}};
        m.erase("perceiver");
        m.erase("report");
    });
    spdlog::info("demo bank: {} entries ({} appended, {} replaced, {} rejected)", result.bank.size(),
                 result.stats.appended, result.stats.replaced, result.stats.rejected);
    return result;
}

PerceiverTrainResult run_train_perceiver(const Session& session) {
    const RunConfig& c = session.config();
    if (!std::filesystem::exists(bank_path(c))) {
        throw ConfigError("no demo bank at " + bank_path(c).string() + "; run build-bank first");
    }
    const DemoBank bank = DemoBank::load(bank_path(c));
    const auto subset = train_subset(c);
    PerceiverTrainResult result;
    result.outcomes = collect_outcomes(session, &bank, subset);
    const auto samples = labeled_features(result.outcomes);
    result.n_vectors = samples.size();
    for (const auto& s : samples) ++result.class_counts[static_cast<std::size_t>(s.label)];
    result.perceiver = Perceiver::train(samples, c.perceiver);
    std::size_t hits = 0;
    for (const auto& s : samples) hits += result.perceiver.classify(s.features).label == s.label;
    result.train_accuracy = static_cast<double>(hits) / static_cast<double>(samples.size());
    result.perceiver.save(perceiver_path(c));

    update_manifest(session, [&](json& m) {
        m["perceiver"] = {{"file", perceiver_path(c).filename().string()},
                          {"checksum", file_checksum(perceiver_path(c))},
                          {"vectors", result.n_vectors},
                          {"class_counts", result.class_counts},
                          {"train_accuracy", result.train_accuracy}};
        m.erase("report");
    });
    spdlog::info("perceiver trained on {} vectors (useful {}, neutral {}, harmful {}); train accuracy {:.4f}",
                 result.n_vectors, result.class_counts[0], result.class_counts[1], result.class_counts[2],
                 result.train_accuracy);
    return result;
}

MetricsReport run_evaluate(const Session& session, bool ablate) {
    const RunConfig& c = session.config();
    for (const auto& p : {bank_path(c), perceiver_path(c)}) {
        if (!std::filesystem::exists(p)) throw ConfigError("missing artifact " + p.string());
    }
    const DemoBank bank = DemoBank::load(bank_path(c));
    const Perceiver perceiver = Perceiver::load(perceiver_path(c));
    const auto problems = load_split(c.eval_dataset.value_or(c.dataset), c.eval_split);

    const auto outcomes = collect_outcomes(session, &bank, problems);
    std::vector<ProblemOutcome> manual_outcomes;
    if (ablate) {
        if (c.manual_demos.empty()) throw ConfigError("ablation needs manual_demos in the config");
        const auto samples = load_samples_jsonl(c.manual_demos);
        if (samples.empty()) throw ConfigError("manual demo file is empty");
        const auto demos = demos_from_samples(session.gateway(), samples);
        manual_outcomes = collect_outcomes(session, nullptr, problems, &demos);
    }

    MetricsReport report;
    report.phase = ablate ? "ablate" : "evaluate";
    report.answer_mode = c.answer_mode;
    report.importance = perceiver.feature_importance();
    report.bank_size = bank.size();
    report.n_problems = problems.size();

    std::vector<std::string> modes{kModeFull};
    if (ablate) modes = {kModeFull, kModeNoDemoBank, kModeNoPerceiver, kModeNoKnowledge};
    std::vector<double> totals(modes.size(), 0.0);
    std::size_t evaluated = 0;

    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        const ProblemOutcome& o = outcomes[i];
        const bool manual_ok = !ablate || manual_outcomes[i].ok();
        if (!o.ok() || !manual_ok) {
            report.skipped_ids.push_back(o.problem.id);
            continue;
        }
        ++evaluated;
        std::vector<Classification> details;
        const auto classes = classify_all(perceiver, o, &details);
        for (std::size_t j = 0; j < classes.size(); ++j) {
            ++report.confusion[static_cast<std::size_t>(o.labels[j])][static_cast<std::size_t>(classes[j])];
        }

        std::vector<ScoredAnswer> answers;
        answers.push_back(o.features.empty() ? o.run.bundle.original
                                             : aggregate_final_answer(o.run.bundle, classes).answer);
        if (ablate) {
            answers.push_back(full_answer(perceiver, manual_outcomes[i]));
            answers.push_back(highest_confidence_answer(o.run.bundle));
            answers.push_back(o.run.bundle.original);
        }

        json trace{{"id", o.problem.id},
                   {"question", o.problem.question},
                   {"caption", o.run.caption},
                   {"demo_ids", o.run.demo_ids},
                   {"knowledge_questions", o.run.questions.questions},
                   {"degraded", o.run.questions.degraded},
                   {"original", answer_json(o.run.bundle.original)}};
        auto& pieces = trace["knowledge"] = json::array();
        for (std::size_t j = 0; j < o.run.knowledge.pieces.size(); ++j) {
            const auto& piece = o.run.knowledge.pieces[j];
            pieces.push_back({{"ordinal", piece.ordinal},
                              {"text", piece.text},
                              {"source_question", piece.source_question},
                              {"answer", answer_json(o.run.bundle.knowledge_answers[j])},
                              {"label", std::string(to_string(o.labels[j]))},
                              {"class", std::string(to_string(classes[j]))},
                              {"probabilities", details[j].probabilities}});
        }
        bool malformed = false;
        json trace_answers = json::object();
        json trace_scores = json::object();
        for (std::size_t m = 0; m < modes.size(); ++m) {
            const double s = answer_score(o.problem, c.answer_mode, answers[m], malformed);
            totals[m] += s;
            trace_answers[modes[m]] = answers[m].text;
            trace_scores[modes[m]] = s;
        }
        report.malformed += malformed;
        trace["answers"] = std::move(trace_answers);
        trace["scores"] = std::move(trace_scores);
        if (ablate) trace["manual_knowledge_questions"] = manual_outcomes[i].run.questions.questions;
        report.traces.push_back(std::move(trace));
    }
    if (evaluated == 0) throw EvaluationError("every evaluation problem failed");
    for (std::size_t m = 0; m < modes.size(); ++m) {
        report.rows.push_back({modes[m], totals[m] / static_cast<double>(evaluated), evaluated});
    }

    std::filesystem::create_directories(c.output_dir);
    write_text_file(report_path(c), report.to_json().dump(2) + "\n");
    write_text_file(c.output_dir / "report.txt", report.to_text());
    update_manifest(session, [&](json& m) {
        m["report"] = {{"file", report_path(c).filename().string()}, {"checksum", file_checksum(report_path(c))}};
    });
    return report;
}

const ModeRow* MetricsReport::row(const std::string& mode) const {
    for (const auto& r : rows) {
        if (r.mode == mode) return &r;
    }
    return nullptr;
}

json MetricsReport::to_json() const {
    json j{{"format", kReportFormat},
           {"version", kReportVersion},
           {"phase", phase},
           {"answer_mode", std::string(kvqa::to_string(answer_mode))},
           {"problems", n_problems},
           {"skipped", skipped_ids},
           {"malformed_answers", malformed},
           {"bank_size", bank_size}};
    auto& acc = j["accuracy"] = json::array();
    for (const auto& r : rows) acc.push_back({{"mode", r.mode}, {"accuracy", r.accuracy}, {"n", r.n}});
    json classes = json::array();
    for (std::size_t k = 0; k < kClassCount; ++k) classes.push_back(kvqa::to_string(static_cast<KnowledgeClass>(k)));
    j["confusion"] = {{"classes", classes}, {"rows", "reference"}, {"columns", "perceiver"}, {"matrix", confusion}};
    auto& cover = j["feature_cover"] = json::array();
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
        cover.push_back({{"feature", std::string(feature_names()[f])},
                         {"cover", importance.cover[f]},
                         {"share", importance.share[f]}});
    }
    j["traces"] = traces;
    return j;
}

std::string MetricsReport::to_text() const {
    std::string out = fmt::format("kvqa {} ({})\nproblems {}  skipped {}  malformed {}  bank size {}\n\n", phase,
                                  kvqa::to_string(answer_mode), n_problems, skipped_ids.size(), malformed, bank_size);
    out += fmt::format("{:<20} {:>9} {:>6}\n", "mode", "accuracy", "n");
    for (const auto& r : rows) out += fmt::format("{:<20} {:>9.4f} {:>6}\n", r.mode, r.accuracy, r.n);
    out += "\nknowledge classes (rows reference, columns perceiver)\n";
    out += fmt::format("{:<10}", "");
    for (std::size_t k = 0; k < kClassCount; ++k) out += fmt::format(" {:>8}", kvqa::to_string(static_cast<KnowledgeClass>(k)));
    out += "\n";
    for (std::size_t t = 0; t < kClassCount; ++t) {
        out += fmt::format("{:<10}", kvqa::to_string(static_cast<KnowledgeClass>(t)));
        for (std::size_t p = 0; p < kClassCount; ++p) out += fmt::format(" {:>8}", confusion[t][p]);
        out += "\n";
    }
    out += "\nfeature cover\n";
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
        out += fmt::format("{:<32} {:>8} {:>7.4f}\n", feature_names()[f], importance.cover[f], importance.share[f]);
    }
    return out;
}

RunConfig config_from_manifest(const std::filesystem::path& path) {
    json m;
    try {
        m = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw ConfigError("manifest " + path.string() + ": " + e.what());
    }
    try {
        expect_format(m, kManifestFormat, kManifestVersion);
    } catch (const FormatError& e) {
        throw ConfigError(e.what());
    }
    RunConfig c = config_from_json(m.at("config"));
    c.validate();
    const PromptTemplates templates = c.templates ? load_templates(*c.templates) : PromptTemplates{};
    if (templates.digest() != m.value("template_digest", std::string())) {
        throw ConfigError("manifest: prompt templates changed since the run was recorded");
    }
    const json now = manifest_inputs(c);
    for (const auto& [name, entry] : m.at("inputs").items()) {
        if (!now.contains(name) || now[name] != entry) {
            throw ConfigError("manifest: input '" + name + "' changed since the run was recorded");
        }
    }
    for (const char* section : {"bank", "perceiver"}) {
        if (!m.contains(section)) continue;
        const auto file = c.output_dir / m[section].at("file").get<std::string>();
        if (!std::filesystem::exists(file) || file_checksum(file) != m[section].at("checksum").get<std::string>()) {
            throw ConfigError(std::string("manifest: ") + section + " artifact is missing or changed");
        }
    }
    return c;
}

}  // namespace kvqa
