#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kvqa/domain.hpp"
#include "kvqa/mock_world.hpp"

namespace kvqa {

enum class DatasetFormat { AokvqaJson, OkvqaJson, MockworldJsonl };

std::string_view to_string(DatasetFormat format) noexcept;
DatasetFormat parse_dataset_format(std::string_view text);

struct IngestResult {
    std::vector<VqaProblem> problems;
    std::size_t skipped = 0;
};

/// Reads a dataset file into problems. Records that are malformed or carry no
/// answers are skipped and counted. `split` overrides the split recorded in
/// the file. Throws IngestionError when the file is unreadable or every record
/// is skipped.
///
///   aokvqa_json     array of {question_id, image_id, question, choices,
///                   correct_choice_idx, direct_answers, split}
///   okvqa_json      {questions: [...], annotations: [...]} as released, or an
///                   array of {question_id, image_id, question, answers}
///   mockworld_jsonl one problem object per line
IngestResult ingest_dataset(const std::filesystem::path& path, DatasetFormat format,
                            std::optional<Split> split = std::nullopt);

std::vector<VqaProblem> problems_with_split(std::span<const VqaProblem> problems, Split split);

// Problem lists and seed samples as JSON lines.
void save_problems_jsonl(std::span<const VqaProblem> problems, const std::filesystem::path& path);
void save_samples_jsonl(std::span<const SeedSample> samples, const std::filesystem::path& path);
// Throws IngestionError on any malformed line; seeds are hand-made.
std::vector<SeedSample> load_samples_jsonl(const std::filesystem::path& path);

// Hex digest of a file's bytes, for run manifests.
std::string file_checksum(const std::filesystem::path& path);

}  // namespace kvqa
