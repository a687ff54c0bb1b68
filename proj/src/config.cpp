#include "kvqa/config.hpp"

#include "kvqa/errors.hpp"
#include "kvqa/serialization.hpp"

namespace kvqa {

namespace {

using nlohmann::json;

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    if (p.empty()) return {};
    std::filesystem::path path(p);
    if (path.is_relative() && !base.empty()) path = base / path;
    return std::filesystem::absolute(path).lexically_normal();
}

DatasetConfig dataset_from_json(const json& j, const std::filesystem::path& base) {
    DatasetConfig d;
    d.path = resolve(base, j.at("path").get<std::string>());
    d.format = parse_dataset_format(j.value("format", std::string("mockworld_jsonl")));
    return d;
}

json dataset_to_json(const DatasetConfig& d) {
    return {{"path", d.path.string()}, {"format", std::string(to_string(d.format))}};
}

void require_file(const std::filesystem::path& p, const char* what) {
    if (p.empty()) throw ConfigError(std::string("config: ") + what + " is not set");
    if (!std::filesystem::exists(p)) throw ConfigError(std::string("config: ") + what + " not found: " + p.string());
}

// Non-negative integer field; nlohmann would wrap a negative value silently.
template <typename T>
T count_field(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    const json& v = j[key];
    if (!v.is_number_unsigned()) throw ConfigError(std::string("config: ") + key + " must be a non-negative integer");
    return v.get<T>();
}

}  // namespace

void RunConfig::validate() const {
    if (backend.kind == BackendKind::Mock) {
        require_file(backend.world, "backend.world");
    } else if (backend.url.empty()) {
        throw ConfigError("config: backend.url is not set");
    }
    require_file(dataset.path, "dataset.path");
    if (eval_dataset) require_file(eval_dataset->path, "eval_dataset.path");
    require_file(seeds, "seeds");
    if (!manual_demos.empty()) require_file(manual_demos, "manual_demos");
    if (templates) require_file(*templates, "templates");
    if (k < 1) throw ConfigError("config: k must be at least 1");
    if (!(lambda >= -1.0 && lambda <= 1.0)) throw ConfigError("config: lambda must lie in [-1, 1]");
    if (m_max < 1 || n_max < 1) throw ConfigError("config: m_max and n_max must be at least 1");
    if (train_subset_size < 1) throw ConfigError("config: train_subset_size must be at least 1");
    if (workers < 1) throw ConfigError("config: workers must be at least 1");
    if (backend.retry.attempts < 1) throw ConfigError("config: backend.attempts must be at least 1");
    try {
        perceiver.boost.validate(kClassCount);
    } catch (const TrainingError& e) {
        throw ConfigError(std::string("config: boost: ") + e.what());
    }
}

RunConfig config_from_json(const json& j, const std::filesystem::path& base) {
    RunConfig c;
    try {
        const json& b = j.at("backend");
        const auto kind = b.value("kind", std::string("mock"));
        if (kind == "mock") {
            c.backend.kind = BackendKind::Mock;
            c.backend.world = resolve(base, b.at("world").get<std::string>());
        } else if (kind == "http") {
            c.backend.kind = BackendKind::Http;
            c.backend.url = b.at("url").get<std::string>();
            c.backend.retry.attempts = b.value("attempts", c.backend.retry.attempts);
            c.backend.retry.initial_backoff = std::chrono::milliseconds(b.value("backoff_ms", 200));
            c.backend.timeout = std::chrono::seconds(b.value("timeout_s", 60));
        } else {
            throw ConfigError("config: unknown backend kind '" + kind + "'");
        }
        c.dataset = dataset_from_json(j.at("dataset"), base);
        if (j.contains("eval_dataset") && !j["eval_dataset"].is_null()) {
            c.eval_dataset = dataset_from_json(j["eval_dataset"], base);
        }
        c.train_split = parse_split(j.value("train_split", std::string("train")));
        c.eval_split = parse_split(j.value("eval_split", std::string("val")));
        c.seeds = resolve(base, j.at("seeds").get<std::string>());
        c.manual_demos = resolve(base, j.value("manual_demos", std::string()));
        if (j.contains("templates") && !j["templates"].is_null()) {
            c.templates = resolve(base, j["templates"].get<std::string>());
        }
        c.k = count_field(j, "k", c.k);
        c.lambda = j.value("lambda", c.lambda);
        c.m_max = count_field(j, "m_max", c.m_max);
        c.n_max = count_field(j, "n_max", c.n_max);
        c.passes = count_field(j, "passes", c.passes);
        c.train_subset_size = count_field(j, "train_subset_size", c.train_subset_size);
        c.answer_mode = parse_answer_mode(j.value("answer_mode", std::string("direct")));
        if (j.contains("boost")) c.perceiver.boost = gbdt::boost_params_from_json(j["boost"]);
        c.perceiver.balance_classes = j.value("balance_classes", c.perceiver.balance_classes);
        c.output_dir = resolve(base, j.value("output_dir", std::string("out")));
        c.seed = count_field(j, "seed", c.seed);
        c.workers = count_field(j, "workers", c.workers);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const DomainError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return c;
}

json to_json(const RunConfig& c) {
    json backend;
    if (c.backend.kind == BackendKind::Mock) {
        backend = {{"kind", "mock"}, {"world", c.backend.world.string()}};
    } else {
        backend = {{"kind", "http"},
                   {"url", c.backend.url},
                   {"attempts", c.backend.retry.attempts},
                   {"backoff_ms", c.backend.retry.initial_backoff.count()},
                   {"timeout_s", c.backend.timeout.count()}};
    }
    json j{{"backend", backend},
           {"dataset", dataset_to_json(c.dataset)},
           {"eval_dataset", c.eval_dataset ? dataset_to_json(*c.eval_dataset) : json(nullptr)},
           {"train_split", std::string(to_string(c.train_split))},
           {"eval_split", std::string(to_string(c.eval_split))},
           {"seeds", c.seeds.string()},
           {"manual_demos", c.manual_demos.string()},
           {"templates", c.templates ? json(c.templates->string()) : json(nullptr)},
           {"k", c.k},
           {"lambda", c.lambda},
           {"m_max", c.m_max},
           {"n_max", c.n_max},
           {"passes", c.passes},
           {"train_subset_size", c.train_subset_size},
           {"answer_mode", std::string(to_string(c.answer_mode))},
           {"boost", gbdt::to_json(c.perceiver.boost)},
           {"balance_classes", c.perceiver.balance_classes},
           {"output_dir", c.output_dir.string()},
           {"seed", c.seed},
           {"workers", c.workers}};
    return j;
}

void apply_override(json& tree, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0) {
        throw ConfigError("override must look like key=value: " + std::string(assignment));
    }
    const std::string key(assignment.substr(0, eq));
    const std::string raw(assignment.substr(eq + 1));
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw;
    }
    json* node = &tree;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("override has an empty key segment: " + key);
        if (!node->is_object()) *node = json::object();
        if (dot == std::string::npos) {
            (*node)[part] = std::move(value);
            return;
        }
        node = &(*node)[part];
        start = dot + 1;
    }
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    } catch (const FormatError& e) {
        throw ConfigError(e.what());
    }
    for (const auto& o : overrides) apply_override(j, o);
    return config_from_json(j, path.parent_path());
}

}  // namespace kvqa
