#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kvqa/domain.hpp"
#include "kvqa/vector_math.hpp"

namespace kvqa {

struct GenerationParams {
    int max_tokens = 256;
    double temperature = 0.0;
    // Option letters the answer must be drawn from (multiple-choice mode).
    std::vector<std::string> options;
};

struct EntailmentScores {
    double entailment = 0.0;
    double contradiction = 0.0;
};

// Which text model /v1/generate should route a prompt to.
enum class GenerateRole { Question, Knowledge };

std::string_view to_string(GenerateRole role) noexcept;
GenerateRole parse_generate_role(std::string_view text);

// Raw model backend. Implementations must be safe for concurrent calls.
class ModelBackend {
public:
    virtual ~ModelBackend() = default;

    virtual ScoredAnswer vlm_answer(const std::string& image_ref, const std::string& prompt,
                                    const GenerationParams& params) = 0;
    virtual std::string vlm_caption(const std::string& image_ref) = 0;
    virtual Embedding vlm_encode(const std::string& image_ref, const std::string& question) = 0;
    virtual std::string generate(GenerateRole role, const std::string& prompt,
                                 const GenerationParams& params) = 0;
    virtual Embedding text_embed(const std::string& text) = 0;
    virtual double image_text_similarity(const std::string& image_ref, const std::string& text) = 0;
    virtual EntailmentScores entail_scores(const std::string& premise, const std::string& hypothesis) = 0;
};

// Contract-enforcing front for a backend: validates every response (ranges,
// finite values, constant embedding dimension, option constraint) and memoizes
// captions and text embeddings for the lifetime of the run.
class ModelGateway {
public:
    explicit ModelGateway(std::shared_ptr<ModelBackend> backend);

    ScoredAnswer vlm_answer(const std::string& image_ref, const std::string& prompt,
                            const GenerationParams& params = {});
    std::string vlm_caption(const std::string& image_ref);
    Embedding vlm_encode(const std::string& image_ref, const std::string& question);
    std::string generate(GenerateRole role, const std::string& prompt,
                         const GenerationParams& params = {});
    Embedding text_embed(const std::string& text);
    double image_text_similarity(const std::string& image_ref, const std::string& text);
    EntailmentScores entail_scores(const std::string& premise, const std::string& hypothesis);

    ModelBackend& backend() noexcept { return *backend_; }

private:
    void check_dimension(const Embedding& e, std::size_t& slot, const char* what);

    std::shared_ptr<ModelBackend> backend_;
    std::mutex mutex_;
    std::size_t encode_dim_ = 0;
    std::size_t text_dim_ = 0;
    std::map<std::string, std::string> caption_memo_;
    std::map<std::string, Embedding> text_memo_;
};

}  // namespace kvqa
