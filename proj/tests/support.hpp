#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>

#include <unistd.h>

#include "kvqa/backend.hpp"
#include "kvqa/errors.hpp"
#include "kvqa/mock_world.hpp"

namespace kvqa::testing {

// A two-subject world small enough to reason about by hand.
inline MockWorld teddy_world(bool teddy_known = true) {
    MockWorld w;
    w.seed = 11;
    w.embedding_dim = 16;
    w.knowledge_noise = 0.0;
    w.extra_point_rate = 0.0;
    w.relations = {{"named_after", "namesake", "Who is this named after?"},
                   {"origin_country", "country of origin", "Which country does this come from?"}};
    w.subjects = {{"teddy bear", "img:teddy", "toys on a blanket"},
                  {"pepsi can", "img:pepsi", "a can on a kitchen counter"}};
    w.fact_table[{"teddy bear", "named_after"}] = "theodore roosevelt";
    w.fact_table[{"teddy bear", "origin_country"}] = "united states";
    w.fact_table[{"pepsi can", "origin_country"}] = "america";
    if (teddy_known) w.vlm_known_facts.insert({"teddy bear", "named_after"});
    return w;
}

// Backend whose behaviour is set per test. Unset operations throw.
struct ScriptedBackend : ModelBackend {
    std::function<ScoredAnswer(const std::string&, const std::string&, const GenerationParams&)> answer;
    std::function<std::string(const std::string&)> caption;
    std::function<Embedding(const std::string&, const std::string&)> encode;
    std::function<std::string(GenerateRole, const std::string&)> gen;
    std::function<Embedding(const std::string&)> embed;
    std::function<double(const std::string&, const std::string&)> img_sim;
    std::function<EntailmentScores(const std::string&, const std::string&)> entail;
    std::atomic<int> generate_calls{0};

    ScoredAnswer vlm_answer(const std::string& r, const std::string& p, const GenerationParams& g) override {
        if (!answer) throw BackendError("answer not scripted");
        return answer(r, p, g);
    }
    std::string vlm_caption(const std::string& r) override {
        if (!caption) throw BackendError("caption not scripted");
        return caption(r);
    }
    Embedding vlm_encode(const std::string& r, const std::string& q) override {
        if (!encode) throw BackendError("encode not scripted");
        return encode(r, q);
    }
    std::string generate(GenerateRole role, const std::string& p, const GenerationParams&) override {
        ++generate_calls;
        if (!gen) throw BackendError("generate not scripted");
        return gen(role, p);
    }
    Embedding text_embed(const std::string& t) override {
        if (!embed) throw BackendError("embed not scripted");
        return embed(t);
    }
    double image_text_similarity(const std::string& r, const std::string& t) override {
        if (!img_sim) throw BackendError("img_sim not scripted");
        return img_sim(r, t);
    }
    EntailmentScores entail_scores(const std::string& p, const std::string& h) override {
        if (!entail) throw BackendError("entail not scripted");
        return entail(p, h);
    }
};

// Wraps a backend and starts failing every call after `budget` calls.
struct FailingBackend : ModelBackend {
    std::shared_ptr<ModelBackend> inner;
    std::atomic<long> budget;

    FailingBackend(std::shared_ptr<ModelBackend> b, long calls) : inner(std::move(b)), budget(calls) {}

    void tick() {
        if (budget-- <= 0) throw TransportError("injected failure", 3);
    }
    ScoredAnswer vlm_answer(const std::string& r, const std::string& p, const GenerationParams& g) override {
        tick();
        return inner->vlm_answer(r, p, g);
    }
    std::string vlm_caption(const std::string& r) override {
        tick();
        return inner->vlm_caption(r);
    }
    Embedding vlm_encode(const std::string& r, const std::string& q) override {
        tick();
        return inner->vlm_encode(r, q);
    }
    std::string generate(GenerateRole role, const std::string& p, const GenerationParams& g) override {
        tick();
        return inner->generate(role, p, g);
    }
    Embedding text_embed(const std::string& t) override {
        tick();
        return inner->text_embed(t);
    }
    double image_text_similarity(const std::string& r, const std::string& t) override {
        tick();
        return inner->image_text_similarity(r, t);
    }
    EntailmentScores entail_scores(const std::string& p, const std::string& h) override {
        tick();
        return inner->entail_scores(p, h);
    }
};

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("kvqa-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace kvqa::testing
