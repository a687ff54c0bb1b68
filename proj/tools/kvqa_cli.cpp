#include <csignal>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "kvqa/config.hpp"
#include "kvqa/dataset.hpp"
#include "kvqa/errors.hpp"
#include "kvqa/http_backend.hpp"
#include "kvqa/mock_world.hpp"
#include "kvqa/pipeline.hpp"
#include "kvqa/serialization.hpp"

namespace {

// Options shared by the phase subcommands; each maps onto a config key.
struct PhaseOptions {
    std::string config;
    std::string manifest;
    std::vector<std::string> overrides;
    std::optional<std::string> output_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    std::optional<std::size_t> k;
    std::optional<double> lambda;
    std::optional<std::size_t> passes;
    std::optional<std::size_t> train_subset_size;
    std::optional<std::string> answer_mode;
    std::optional<int> rounds;
};

void add_phase_options(CLI::App* cmd, PhaseOptions& o, bool allow_manifest) {
    auto* cfg = cmd->add_option("-c,--config", o.config, "JSON run config")->check(CLI::ExistingFile);
    if (allow_manifest) {
        auto* man = cmd->add_option("--manifest", o.manifest, "Re-run from a recorded manifest")->check(CLI::ExistingFile);
        cfg->excludes(man);
    } else {
        cfg->required();
    }
    cmd->add_option("--set", o.overrides, "Override a config key, e.g. --set boost.max_depth=3");
    cmd->add_option("-o,--output-dir", o.output_dir, "Artifact directory");
    cmd->add_option("--seed", o.seed, "Global seed");
    cmd->add_option("-j,--workers", o.workers, "Worker threads");
    cmd->add_option("-k,--k", o.k, "Demos retrieved per problem");
    cmd->add_option("--lambda", o.lambda, "Demo bank similarity threshold");
    cmd->add_option("--passes", o.passes, "Traversals of the training subset");
    cmd->add_option("--train-subset-size", o.train_subset_size, "Training problems drawn for the bank and perceiver");
    cmd->add_option("--answer-mode", o.answer_mode, "direct or multiple_choice");
    cmd->add_option("--rounds", o.rounds, "Boosting rounds");
}

kvqa::RunConfig resolve_config(const PhaseOptions& o) {
    if (!o.manifest.empty()) {
        if (!o.overrides.empty() || o.output_dir || o.seed || o.k || o.lambda || o.passes || o.train_subset_size ||
            o.answer_mode || o.rounds) {
            throw kvqa::ConfigError("a manifest run takes no config overrides");
        }
        auto c = kvqa::config_from_manifest(o.manifest);
        if (o.workers) c.workers = *o.workers;
        return c;
    }
    if (o.config.empty()) throw kvqa::ConfigError("either --config or --manifest is required");
    std::vector<std::string> overrides = o.overrides;
    const auto set = [&](const std::string& key, const auto& value) {
        overrides.push_back(key + "=" + nlohmann::json(value).dump());
    };
    if (o.output_dir) set("output_dir", *o.output_dir);
    if (o.seed) set("seed", *o.seed);
    if (o.workers) set("workers", *o.workers);
    if (o.k) set("k", *o.k);
    if (o.lambda) set("lambda", *o.lambda);
    if (o.passes) set("passes", *o.passes);
    if (o.train_subset_size) set("train_subset_size", *o.train_subset_size);
    if (o.answer_mode) set("answer_mode", *o.answer_mode);
    if (o.rounds) set("boost.n_rounds", *o.rounds);
    // Paths given on the command line are relative to the working directory.
    kvqa::RunConfig c = kvqa::load_config(o.config, overrides);
    if (o.output_dir) c.output_dir = std::filesystem::absolute(*o.output_dir).lexically_normal();
    return c;
}

int exit_code(const kvqa::Error& e) {
    if (dynamic_cast<const kvqa::ConfigError*>(&e)) return 2;
    if (dynamic_cast<const kvqa::IngestionError*>(&e)) return 3;
    if (dynamic_cast<const kvqa::FormatError*>(&e)) return 4;
    if (dynamic_cast<const kvqa::BackendError*>(&e)) return 5;
    if (dynamic_cast<const kvqa::TrainingError*>(&e)) return 6;
    if (dynamic_cast<const kvqa::EvaluationError*>(&e)) return 7;
    if (dynamic_cast<const kvqa::RetrievalError*>(&e)) return 8;
    return 1;
}

void write_world(const kvqa::MockWorldParams& p, const std::filesystem::path& dir, const std::string& answer_mode) {
    const auto corpus = kvqa::write_mock_workspace(p, dir, kvqa::parse_answer_mode(answer_mode));
    std::printf("wrote %zu problems, %zu facts and %zu seeds to %s\n", corpus.problems.size(),
                corpus.world.fact_table.size(), corpus.seeds.size(), dir.string().c_str());
}

kvqa::BackendServer* g_server = nullptr;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"kvqa: knowledge-based visual question answering pipeline"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

    kvqa::MockWorldParams world;
    std::string world_dir = "mock";
    std::string world_answer_mode = "direct";
    auto* gen = app.add_subcommand("gen-world", "Generate a mock world, problems, seeds and a config");
    gen->add_option("-o,--out", world_dir, "Output directory");
    gen->add_option("--seed", world.seed, "World seed");
    gen->add_option("--facts", world.n_facts, "Number of facts");
    gen->add_option("--problems", world.n_problems, "Number of problems");
    gen->add_option("--known", world.vlm_known_fraction, "Fraction of facts the VLM knows");
    gen->add_option("--noise", world.noise, "Knowledge corruption probability");
    gen->add_option("--dim", world.embedding_dim, "Embedding dimension");
    gen->add_option("--train-fraction", world.train_fraction, "Share of problems in the training split");
    gen->add_option("--seeds", world.n_seeds, "Hand-made bank seeds");
    gen->add_option("--manual-demos", world.n_manual_demos, "Fixed demos for the no-bank ablation");
    gen->add_option("--answer-mode", world_answer_mode, "Answer mode written to the config");

    PhaseOptions build_opts, train_opts, eval_opts, ablate_opts;
    bool resume = false;
    auto* build = app.add_subcommand("build-bank", "Seed and grow the demo bank over the training subset");
    add_phase_options(build, build_opts, false);
    build->add_flag("--resume", resume, "Continue from the checkpoint of an interrupted build");
    auto* train = app.add_subcommand("train-perceiver", "Label training knowledge and fit the perceiver");
    add_phase_options(train, train_opts, false);
    auto* evaluate = app.add_subcommand("evaluate", "Run the full pipeline on the evaluation split");
    add_phase_options(evaluate, eval_opts, true);
    auto* ablate = app.add_subcommand("ablate", "Evaluate the full pipeline and its ablations");
    add_phase_options(ablate, ablate_opts, true);

    std::string serve_world;
    std::string serve_host = "127.0.0.1";
    int serve_port = 8080;
    auto* serve = app.add_subcommand("serve-mock", "Serve a mock world over the HTTP model protocol");
    serve->add_option("--world", serve_world, "World file")->required()->check(CLI::ExistingFile);
    serve->add_option("--host", serve_host, "Bind address");
    serve->add_option("--port", serve_port, "Port");

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        if (*gen) {
            write_world(world, world_dir, world_answer_mode);
        } else if (*build) {
            kvqa::Session session(resolve_config(build_opts));
            const auto r = kvqa::run_build_bank(session, resume);
            std::printf("demo bank: %zu entries (%zu appended, %zu replaced, %zu rejected, %zu skipped) -> %s\n",
                        r.bank.size(), r.stats.appended, r.stats.replaced, r.stats.rejected, r.stats.skipped,
                        kvqa::bank_path(session.config()).string().c_str());
        } else if (*train) {
            kvqa::Session session(resolve_config(train_opts));
            const auto r = kvqa::run_train_perceiver(session);
            std::printf("perceiver: %zu vectors (useful %zu, neutral %zu, harmful %zu), train accuracy %.4f -> %s\n",
                        r.n_vectors, r.class_counts[0], r.class_counts[1], r.class_counts[2], r.train_accuracy,
                        kvqa::perceiver_path(session.config()).string().c_str());
        } else if (*evaluate || *ablate) {
            const bool is_ablate = static_cast<bool>(*ablate);
            kvqa::Session session(resolve_config(is_ablate ? ablate_opts : eval_opts));
            const auto report = kvqa::run_evaluate(session, is_ablate);
            std::cout << report.to_text() << "report: " << kvqa::report_path(session.config()).string() << "\n";
        } else if (*serve) {
            kvqa::BackendServer server(std::make_shared<kvqa::MockBackend>(kvqa::load_mock_world(serve_world)));
            if (!server.bind(serve_host, serve_port)) {
                throw kvqa::ConfigError("cannot bind " + serve_host + ":" + std::to_string(serve_port));
            }
            g_server = &server;
            std::signal(SIGINT, [](int) {
                if (g_server) g_server->stop();
            });
            std::printf("serving %s on http://%s:%d\n", serve_world.c_str(), serve_host.c_str(), serve_port);
            std::fflush(stdout);
            server.listen();
        }
    } catch (const kvqa::Error& e) {
        spdlog::error("{}", e.what());
        return exit_code(e);
    } catch (const std::exception& e) {
        spdlog::error("unexpected failure: {}", e.what());
        return 1;
    }
    return 0;
}
