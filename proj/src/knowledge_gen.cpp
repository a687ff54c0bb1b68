#include "kvqa/knowledge_gen.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include <spdlog/spdlog.h>

#include "kvqa/errors.hpp"

namespace kvqa {

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

struct Marker {
    enum class Kind { None, Number, Bullet } kind = Kind::None;
    std::size_t number = 0;
    std::string rest;
};

Marker read_marker(const std::string& line) {
    Marker m;
    std::size_t i = 0;
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
    if (i > 0 && i < line.size() && i <= 3 && (line[i] == '.' || line[i] == ')')) {
        m.kind = Marker::Kind::Number;
        m.number = static_cast<std::size_t>(std::stoul(line.substr(0, i)));
        m.rest = trim(std::string_view(line).substr(i + 1));
        return m;
    }
    for (std::string_view bullet : {"-", "*", "\xE2\x80\xA2"}) {
        if (line.starts_with(bullet)) {
            m.kind = Marker::Kind::Bullet;
            m.rest = trim(std::string_view(line).substr(bullet.size()));
            return m;
        }
    }
    m.rest = line;
    return m;
}

}  // namespace

std::string render_question_prompt(const PromptTemplates& templates, const std::vector<Demo>& demos,
                                   const std::string& caption, const std::string& question) {
    if (demos.empty()) throw DomainError("render_question_prompt: no demonstrations");
    std::string prompt = templates.question_instruction;
    for (const auto& demo : demos) {
        std::string listed;
        for (const auto& q : demo.knowledge_questions) {
            if (!listed.empty()) listed += ' ';
            listed += q;
        }
        prompt += "\n\n";
        prompt += render_template(templates.question_demo,
                                  {{"caption", demo.caption}, {"question", demo.question}, {"knowledge_questions", listed}});
    }
    prompt += "\n\n";
    prompt += render_template(templates.question_current, {{"caption", caption}, {"question", question}});
    return prompt;
}

std::string render_knowledge_query(const PromptTemplates& templates, const QuestionSet& questions) {
    if (questions.questions.empty()) throw DomainError("render_knowledge_query: no questions");
    std::string prompt = templates.knowledge_query;
    for (std::size_t i = 0; i < questions.questions.size(); ++i) {
        prompt += '\n';
        prompt += std::to_string(i + 1) + ". " + questions.questions[i];
    }
    return prompt;
}

std::vector<std::string> split_lines_without_markers(const std::string& raw, std::size_t limit) {
    std::vector<std::string> out;
    std::istringstream in(raw);
    for (std::string line; out.size() < limit && std::getline(in, line);) {
        const std::string text = read_marker(trim(line)).rest;
        if (!text.empty()) out.push_back(text);
    }
    return out;
}

KnowledgeSet parse_points(const std::string& raw, const QuestionSet& questions, std::size_t max_pieces) {
    KnowledgeSet set;
    const auto& qs = questions.questions;
    if (qs.empty()) return set;
    std::size_t current = 0;
    std::istringstream in(raw);
    for (std::string line; set.pieces.size() < max_pieces && std::getline(in, line);) {
        const Marker m = read_marker(trim(line));
        if (m.kind == Marker::Kind::Number) {
            current = std::clamp<std::size_t>(m.number, 1, qs.size()) - 1;
        }
        if (m.rest.empty()) continue;
        set.pieces.push_back(KnowledgePiece{m.rest, qs[current], set.pieces.size()});
    }
    return set;
}

KnowledgeGenerator::KnowledgeGenerator(ModelGateway& gateway, const PromptTemplates& templates,
                                       GenerationLimits limits)
    : gateway_(gateway), templates_(templates), limits_(limits) {
    if (limits_.max_questions == 0 || limits_.max_pieces == 0) {
        throw ConfigError("generation limits must be positive");
    }
}

QuestionSet KnowledgeGenerator::generate_questions(const std::string& caption, const std::string& question,
                                                   const std::vector<Demo>& demos) const {
    QuestionSet set;
    for (const auto& d : demos) set.demo_ids.push_back(d.id);
    const std::string prompt = render_question_prompt(templates_, demos, caption, question);
    for (int attempt = 0; attempt < 2; ++attempt) {
        set.questions = split_lines_without_markers(gateway_.generate(GenerateRole::Question, prompt),
                                                    limits_.max_questions);
        if (!set.questions.empty()) return set;
    }
    spdlog::debug("question model returned nothing for '{}'; answering without knowledge", question);
    set.degraded = true;
    return set;
}

KnowledgeSet KnowledgeGenerator::generate_knowledge(const QuestionSet& questions) const {
    if (questions.questions.empty()) return {};
    const std::string raw = gateway_.generate(GenerateRole::Knowledge, render_knowledge_query(templates_, questions));
    return parse_points(raw, questions, limits_.max_pieces);
}

}  // namespace kvqa
