#include "kvqa/templates.hpp"

#include <fstream>
#include <sstream>
#include <utility>
#include <vector>

#include "kvqa/errors.hpp"
#include "kvqa/hashing.hpp"

namespace kvqa {

namespace {

struct Section {
    const char* name;
    std::string PromptTemplates::*field;
    std::vector<const char*> required;
};

const std::vector<Section>& sections() {
    static const std::vector<Section> table = {
        {"answer", &PromptTemplates::answer, {"question"}},
        {"knowledge_answer", &PromptTemplates::knowledge_answer, {"knowledge", "question"}},
        {"question_instruction", &PromptTemplates::question_instruction, {}},
        {"question_demo", &PromptTemplates::question_demo, {"caption", "question", "knowledge_questions"}},
        {"question_current", &PromptTemplates::question_current, {"caption", "question"}},
        {"knowledge_query", &PromptTemplates::knowledge_query, {}},
    };
    return table;
}

std::string trim_trailing_newlines(std::string s) {
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
    return s;
}

}  // namespace

std::string render_template(std::string_view pattern, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(pattern.size() + 64);
    std::size_t pos = 0;
    while (pos < pattern.size()) {
        const std::size_t open = pattern.find('{', pos);
        if (open == std::string_view::npos) {
            out.append(pattern.substr(pos));
            break;
        }
        const std::size_t close = pattern.find('}', open);
        if (close == std::string_view::npos) {
            out.append(pattern.substr(pos));
            break;
        }
        out.append(pattern.substr(pos, open - pos));
        const std::string key(pattern.substr(open + 1, close - open - 1));
        auto it = values.find(key);
        if (it == values.end()) throw ConfigError("template placeholder {" + key + "} has no value");
        out.append(it->second);
        pos = close + 1;
    }
    return out;
}

PromptTemplates parse_templates(std::string_view text) {
    PromptTemplates templates;
    std::istringstream in{std::string(text)};
    std::string line;
    const Section* current = nullptr;
    std::string body;
    auto flush = [&] {
        if (!current) return;
        std::string value = trim_trailing_newlines(body);
        for (const char* key : current->required) {
            if (value.find(std::string("{") + key + "}") == std::string::npos) {
                throw ConfigError(std::string("template [") + current->name + "] lacks {" + key + "}");
            }
        }
        templates.*(current->field) = std::move(value);
        body.clear();
    };
    while (std::getline(in, line)) {
        if (line.size() > 2 && line.front() == '[' && line.back() == ']') {
            flush();
            const std::string name = line.substr(1, line.size() - 2);
            current = nullptr;
            for (const auto& s : sections()) {
                if (name == s.name) current = &s;
            }
            if (!current) throw ConfigError("unknown template section [" + name + "]");
            continue;
        }
        if (!current) {
            if (line.empty() || line.front() == '#') continue;
            throw ConfigError("template text outside of a section: " + line);
        }
        body += line;
        body += '\n';
    }
    flush();
    return templates;
}

PromptTemplates load_templates(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read template file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_templates(buf.str());
}

std::string format_templates(const PromptTemplates& templates) {
    std::string out;
    for (const auto& s : sections()) {
        out += '[';
        out += s.name;
        out += "]\n";
        out += templates.*(s.field);
        out += "\n";
    }
    return out;
}

std::string PromptTemplates::digest() const { return hex64(fnv1a64(format_templates(*this))); }

}  // namespace kvqa
