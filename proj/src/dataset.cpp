#include "kvqa/dataset.hpp"

#include <map>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "kvqa/errors.hpp"
#include "kvqa/hashing.hpp"
#include "kvqa/serialization.hpp"

namespace kvqa {

namespace {

using nlohmann::json;

std::string id_text(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

std::string coco_ref(const json& record) {
    if (record.contains("image_ref")) return record.at("image_ref").get<std::string>();
    return "coco:" + id_text(record.at("image_id"));
}

std::vector<std::string> answer_texts(const json& answers) {
    std::vector<std::string> out;
    for (const auto& a : answers) out.push_back(a.is_string() ? a.get<std::string>() : a.at("answer").get<std::string>());
    return out;
}

VqaProblem aokvqa_record(const json& r) {
    VqaProblem p;
    p.id = id_text(r.at("question_id"));
    p.image_ref = coco_ref(r);
    p.question = r.at("question").get<std::string>();
    p.choices = r.at("choices").get<std::vector<std::string>>();
    if (r.contains("correct_choice_idx") && !r["correct_choice_idx"].is_null()) {
        p.correct_choice = r["correct_choice_idx"].get<std::size_t>();
    }
    p.ground_truth = r.value("direct_answers", std::vector<std::string>{});
    if (p.ground_truth.empty() && p.correct_choice && *p.correct_choice < p.choices->size()) {
        p.ground_truth.push_back((*p.choices)[*p.correct_choice]);
    }
    if (r.contains("split")) p.split = parse_split(r["split"].get<std::string>());
    return p;
}

VqaProblem okvqa_record(const json& q, const json* annotation) {
    VqaProblem p;
    p.id = id_text(q.at("question_id"));
    p.image_ref = coco_ref(q);
    p.question = q.at("question").get<std::string>();
    const json& answers = annotation ? annotation->at("answers") : q.at("answers");
    p.ground_truth = answer_texts(answers);
    if (q.contains("split")) p.split = parse_split(q["split"].get<std::string>());
    return p;
}

json parse_json_file(const std::filesystem::path& path) {
    try {
        return json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw IngestionError("cannot parse " + path.string() + ": " + e.what());
    }
}

}  // namespace

std::string_view to_string(DatasetFormat format) noexcept {
    switch (format) {
        case DatasetFormat::AokvqaJson: return "aokvqa_json";
        case DatasetFormat::OkvqaJson: return "okvqa_json";
        case DatasetFormat::MockworldJsonl: return "mockworld_jsonl";
    }
    return "mockworld_jsonl";
}

DatasetFormat parse_dataset_format(std::string_view text) {
    for (auto f : {DatasetFormat::AokvqaJson, DatasetFormat::OkvqaJson, DatasetFormat::MockworldJsonl}) {
        if (to_string(f) == text) return f;
    }
    throw ConfigError("unknown dataset format '" + std::string(text) + "'");
}

IngestResult ingest_dataset(const std::filesystem::path& path, DatasetFormat format, std::optional<Split> split) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const Error& e) {
        throw IngestionError(e.what());
    }
    IngestResult result;
    std::size_t records = 0;
    const auto accept = [&](auto&& make) {
        ++records;
        try {
            VqaProblem p = make();
            if (split) p.split = *split;
            if (p.image_ref.empty() || p.ground_truth.empty()) throw DomainError("record without image or answers");
            validate(p);
            result.problems.push_back(std::move(p));
        } catch (const std::exception& e) {
            ++result.skipped;
            spdlog::debug("{}: skipped record {}: {}", path.string(), records, e.what());
        }
    };

    switch (format) {
        case DatasetFormat::MockworldJsonl: {
            std::istringstream in(text);
            std::string line;
            while (std::getline(in, line)) {
                if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
                accept([&] { return problem_from_json(json::parse(line)); });
            }
            break;
        }
        case DatasetFormat::AokvqaJson: {
            const json root = parse_json_file(path);
            if (!root.is_array()) throw IngestionError(path.string() + ": expected an array of records");
            for (const auto& r : root) accept([&] { return aokvqa_record(r); });
            break;
        }
        case DatasetFormat::OkvqaJson: {
            const json root = parse_json_file(path);
            if (root.is_array()) {
                for (const auto& r : root) accept([&] { return okvqa_record(r, nullptr); });
            } else if (root.is_object() && root.contains("questions") && root.contains("annotations")) {
                std::map<std::string, const json*> by_id;
                for (const auto& a : root["annotations"]) {
                    if (a.contains("question_id")) by_id[id_text(a["question_id"])] = &a;
                }
                for (const auto& q : root["questions"]) {
                    accept([&] {
                        auto it = by_id.find(id_text(q.at("question_id")));
                        if (it == by_id.end()) throw DomainError("question without annotation");
                        return okvqa_record(q, it->second);
                    });
                }
            } else {
                throw IngestionError(path.string() + ": expected questions and annotations");
            }
            break;
        }
    }
    if (records == 0) throw IngestionError(path.string() + ": no records");
    if (result.problems.empty()) {
        throw IngestionError(path.string() + ": all " + std::to_string(records) + " records are malformed");
    }
    if (result.skipped > 0) spdlog::warn("{}: skipped {} of {} records", path.string(), result.skipped, records);
    return result;
}

std::vector<VqaProblem> problems_with_split(std::span<const VqaProblem> problems, Split split) {
    std::vector<VqaProblem> out;
    for (const auto& p : problems) {
        if (p.split == split) out.push_back(p);
    }
    return out;
}

void save_problems_jsonl(std::span<const VqaProblem> problems, const std::filesystem::path& path) {
    std::string out;
    for (const auto& p : problems) out += to_json(p).dump() + "\n";
    write_text_file(path, out);
}

void save_samples_jsonl(std::span<const SeedSample> samples, const std::filesystem::path& path) {
    std::string out;
    for (const auto& s : samples) {
        out += json{{"problem", to_json(s.problem)}, {"knowledge_questions", s.knowledge_questions}}.dump() + "\n";
    }
    write_text_file(path, out);
}

std::vector<SeedSample> load_samples_jsonl(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const Error& e) {
        throw IngestionError(e.what());
    }
    std::vector<SeedSample> out;
    std::istringstream in(text);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            out.push_back({problem_from_json(j.at("problem")),
                           j.at("knowledge_questions").get<std::vector<std::string>>()});
        } catch (const std::exception& e) {
            throw IngestionError(path.string() + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

std::string file_checksum(const std::filesystem::path& path) { return hex64(fnv1a64(read_text_file(path))); }

}  // namespace kvqa
