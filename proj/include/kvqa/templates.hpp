#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace kvqa {

// Prompt wording for every model call. Placeholders are written {name}.
//
//   answer               bare VLM question prompt        {question}
//   knowledge_answer     question + one knowledge piece  {knowledge} {question}
//   question_instruction first line of the question-model prompt
//   question_demo        one demonstration block         {caption} {question} {knowledge_questions}
//   question_current     the problem being solved        {caption} {question}
//   knowledge_query      instruction for the knowledge model
struct PromptTemplates {
    std::string answer = "Question: {question} Answer:";
    std::string knowledge_answer = "Knowledge: {knowledge}. Question: {question} Answer:";
    std::string question_instruction =
        "Write the knowledge questions that must be answered before the question about the image "
        "can be answered.";
    std::string question_demo = "Context: {caption}\nQuestion: {question}\nKnowledge questions: {knowledge_questions}";
    std::string question_current = "Context: {caption}\nQuestion: {question}\nKnowledge questions:";
    std::string knowledge_query = "Answer each question with factual knowledge, in points.";

    // Stable digest of all templates, recorded in run manifests.
    std::string digest() const;

    friend bool operator==(const PromptTemplates&, const PromptTemplates&) = default;
};

// Reads a plain-text template file made of "[name]" section headers each
// followed by the template body. Sections not present keep their defaults;
// unknown sections or missing required placeholders raise ConfigError.
PromptTemplates load_templates(const std::filesystem::path& path);
PromptTemplates parse_templates(std::string_view text);
std::string format_templates(const PromptTemplates& templates);

// Substitutes {key} placeholders. An unknown placeholder raises ConfigError.
std::string render_template(std::string_view pattern, const std::map<std::string, std::string>& values);

}  // namespace kvqa
