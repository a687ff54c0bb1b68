#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "kvqa/dataset.hpp"
#include "kvqa/domain.hpp"
#include "kvqa/http_backend.hpp"
#include "kvqa/knowledge_filter.hpp"
#include "kvqa/prediction.hpp"

namespace kvqa {

enum class BackendKind { Mock, Http };

struct BackendConfig {
    BackendKind kind = BackendKind::Mock;
    std::filesystem::path world;  // mock
    std::string url;              // http
    RetryPolicy retry;
    std::chrono::seconds timeout{60};
};

struct DatasetConfig {
    std::filesystem::path path;
    DatasetFormat format = DatasetFormat::MockworldJsonl;
};

struct RunConfig {
    BackendConfig backend;
    DatasetConfig dataset;
    // Problems to evaluate; the training dataset when absent.
    std::optional<DatasetConfig> eval_dataset;
    Split train_split = Split::Train;
    Split eval_split = Split::Val;
    std::filesystem::path seeds;
    std::filesystem::path manual_demos;
    std::optional<std::filesystem::path> templates;
    std::size_t k = 3;
    double lambda = 0.85;
    std::size_t m_max = 5;
    std::size_t n_max = 10;
    std::size_t passes = 2;
    std::size_t train_subset_size = 3000;
    AnswerMode answer_mode = AnswerMode::Direct;
    PerceiverParams perceiver;
    std::filesystem::path output_dir = "out";
    std::uint64_t seed = 7;
    std::size_t workers = 1;

    /// Throws ConfigError on out-of-range values or a referenced input path
    /// that does not exist.
    void validate() const;
};

/// Parses a config tree. Relative paths are resolved against base_dir.
RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json to_json(const RunConfig& config);

/// Reads a JSON config file and applies "dotted.key=value" overrides before
/// parsing. Values are read as JSON when they parse, as strings otherwise.
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

void apply_override(nlohmann::json& tree, std::string_view assignment);

}  // namespace kvqa
