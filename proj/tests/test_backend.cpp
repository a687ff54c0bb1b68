#include <gtest/gtest.h>

#include "kvqa/backend.hpp"
#include "kvqa/errors.hpp"
#include "kvqa/hashing.hpp"
#include "kvqa/mock_world.hpp"
#include "kvqa/templates.hpp"
#include "kvqa/vector_math.hpp"
#include "support.hpp"

using namespace kvqa;
using kvqa::testing::ScriptedBackend;
using kvqa::testing::teddy_world;

namespace {

std::string teddy_prompt() { return render_template(PromptTemplates{}.answer, {{"question", "Who is this named after?"}}); }

}  // namespace

TEST(MockBackend, KnownFactAnsweredWithPointNine) {
    MockBackend mock(teddy_world(true));
    const auto a = mock.vlm_answer("img:teddy", teddy_prompt(), {});
    EXPECT_EQ(a.text, "theodore roosevelt");
    EXPECT_NEAR(a.confidence, 0.9, 1e-12);
}

TEST(MockBackend, UnknownFactGivesSeededDistractor) {
    MockBackend mock(teddy_world(false));
    const auto a = mock.vlm_answer("img:teddy", teddy_prompt(), {});
    EXPECT_NE(normalize_answer(a.text), normalize_answer("theodore roosevelt"));
    EXPECT_NEAR(a.confidence, 0.3, 1e-12);
    EXPECT_EQ(mock.vlm_answer("img:teddy", teddy_prompt(), {}), a);
}

TEST(MockBackend, FactInPromptIsFollowed) {
    MockBackend mock(teddy_world(false));
    const PromptTemplates t;
    const auto right = render_template(t.knowledge_answer, {{"knowledge", "The namesake of teddy bear is theodore roosevelt"},
                                                            {"question", "Who is this named after?"}});
    const auto a = mock.vlm_answer("img:teddy", right, {});
    EXPECT_EQ(a.text, "theodore roosevelt");
    EXPECT_NEAR(a.confidence, 0.95, 1e-12);
    // Misleading knowledge is followed too, even when the fact is known.
    MockBackend knows(teddy_world(true));
    const auto wrong = render_template(t.knowledge_answer, {{"knowledge", "The namesake of teddy bear is abraham lincoln"},
                                                            {"question", "Who is this named after?"}});
    EXPECT_EQ(knows.vlm_answer("img:teddy", wrong, {}).text, "abraham lincoln");
}

TEST(MockBackend, CaptionIsTheSceneAndDeterministic) {
    MockBackend mock(teddy_world());
    EXPECT_EQ(mock.vlm_caption("img:teddy"), "toys on a blanket");
    EXPECT_EQ(mock.vlm_caption("img:teddy"), mock.vlm_caption("img:teddy"));
    EXPECT_THROW(mock.vlm_caption(""), BackendError);
    EXPECT_THROW(mock.vlm_caption("img:nothing"), BackendError);
}

TEST(MockBackend, EncodeIsUnitNormAndDeterministic) {
    MockBackend mock(teddy_world());
    const auto a = mock.vlm_encode("img:teddy", "Who is this named after?");
    EXPECT_EQ(a.size(), 16u);
    EXPECT_NEAR(l2_norm(a), 1.0, 1e-9);
    EXPECT_EQ(a, mock.vlm_encode("img:teddy", "Who is this named after?"));
}

TEST(MockBackend, UnrelatedQuestionsAreNotNearDuplicates) {
    const auto corpus = generate_mock_world({.seed = 3, .n_facts = 300, .n_problems = 200});
    MockBackend mock(corpus.world);
    SeededRng rng(1);
    int checked = 0;
    while (checked < 100) {
        const auto& a = corpus.problems[rng.index(corpus.problems.size())];
        const auto& b = corpus.problems[rng.index(corpus.problems.size())];
        if (a.image_ref == b.image_ref || a.question == b.question) continue;
        EXPECT_LT(cosine_similarity(mock.vlm_encode(a.image_ref, a.question), mock.vlm_encode(b.image_ref, b.question)), 0.99);
        ++checked;
    }
}

TEST(MockBackend, ScorerContracts) {
    MockBackend mock(teddy_world());
    const auto e = mock.entail_scores("a teddy bear", "a teddy bear");
    EXPECT_EQ(e.entailment, 1.0);
    EXPECT_EQ(e.contradiction, 0.0);
    EXPECT_GE(mock.image_text_similarity("img:teddy", mock.vlm_caption("img:teddy")), 0.9);
    EXPECT_EQ(mock.text_embed("same text"), mock.text_embed("same text"));
    const auto s = mock.entail_scores("The namesake of teddy bear is x", "Who is this named after?");
    EXPECT_GE(s.entailment, 0.0);
    EXPECT_LE(s.entailment, 1.0);
    EXPECT_GE(s.contradiction, 0.0);
    EXPECT_LE(s.contradiction, 1.0);
}

TEST(MockBackend, KnowledgeModelAnswersNumberedQuestions) {
    MockBackend mock(teddy_world());
    const std::string prompt =
        "Answer each question with factual knowledge, in points.\n1. What is the namesake of teddy bear?\n"
        "2. What is the namesake of pepsi can?";
    const auto out = mock.generate(GenerateRole::Knowledge, prompt, {});
    EXPECT_NE(out.find("1. The namesake of teddy bear is theodore roosevelt."), std::string::npos);
    EXPECT_NE(out.find("2. No widely recorded namesake is known for pepsi can."), std::string::npos);
}

TEST(MockBackend, MultipleChoiceAnswerIsAnOptionLetter) {
    MockBackend mock(teddy_world(true));
    GenerationParams params;
    params.options = {"a", "b", "c"};
    const std::string prompt = "Question: Who is this named after? Options: (a) lincoln; (b) theodore roosevelt; (c) grant. Answer:";
    EXPECT_EQ(mock.vlm_answer("img:teddy", prompt, params).text, "b");
}

TEST(MockWorld, JsonRoundTrip) {
    const auto w = teddy_world();
    const auto back = mock_world_from_json(to_json(w));
    EXPECT_EQ(to_json(back).dump(), to_json(w).dump());
    auto bad = to_json(w);
    bad["version"] = 99;
    EXPECT_THROW(mock_world_from_json(bad), FormatError);
}

TEST(MockWorld, ValidateRejectsDanglingKnownFacts) {
    auto w = teddy_world();
    w.vlm_known_facts.insert({"pepsi can", "named_after"});
    EXPECT_THROW(w.validate(), DomainError);
}

TEST(Gateway, RejectsOutOfRangeProbabilities) {
    auto b = std::make_shared<ScriptedBackend>();
    b->answer = [](auto&, auto&, auto&) { return ScoredAnswer{"x", {1.5}, 1.5}; };
    ModelGateway g(b);
    EXPECT_THROW(g.vlm_answer("r", "p"), MalformedOutputError);
    b->answer = [](auto&, auto&, auto&) { return ScoredAnswer{"x", {}, 1.0}; };
    EXPECT_THROW(g.vlm_answer("r", "p"), MalformedOutputError);
    EXPECT_THROW(g.vlm_answer("r", ""), DomainError);
}

TEST(Gateway, RecomputesConfidenceFromTokens) {
    auto b = std::make_shared<ScriptedBackend>();
    b->answer = [](auto&, auto&, auto&) { return ScoredAnswer{"x y", {0.5, 0.5}, 0.99}; };
    ModelGateway g(b);
    EXPECT_DOUBLE_EQ(g.vlm_answer("r", "p").confidence, 0.25);
}

TEST(Gateway, EnforcesOptionConstraint) {
    auto b = std::make_shared<ScriptedBackend>();
    b->answer = [](auto&, auto&, auto&) { return ScoredAnswer::with_confidence("e", 0.5); };
    ModelGateway g(b);
    GenerationParams params;
    params.options = {"a", "b", "c", "d"};
    EXPECT_THROW(g.vlm_answer("r", "p", params), MalformedOutputError);
}

TEST(Gateway, EmbeddingDimensionIsConstant) {
    auto b = std::make_shared<ScriptedBackend>();
    b->embed = [](const std::string& t) { return Embedding(t.size(), 1.0); };
    ModelGateway g(b);
    EXPECT_EQ(g.text_embed("abc").size(), 3u);
    EXPECT_THROW(g.text_embed("abcd"), MalformedOutputError);
    b->encode = [](auto&, auto&) { return Embedding{1.0, std::nan("")}; };
    EXPECT_THROW(g.vlm_encode("r", "q"), MalformedOutputError);
}

TEST(Gateway, ScoresOutsideUnitIntervalAreRejected) {
    auto b = std::make_shared<ScriptedBackend>();
    b->img_sim = [](auto&, auto&) { return 1.2; };
    b->entail = [](auto&, auto&) { return EntailmentScores{0.5, -0.1}; };
    ModelGateway g(b);
    EXPECT_THROW(g.image_text_similarity("r", "t"), MalformedOutputError);
    EXPECT_THROW(g.entail_scores("p", "h"), MalformedOutputError);
}

TEST(Gateway, MemoizesCaptions) {
    auto b = std::make_shared<ScriptedBackend>();
    int calls = 0;
    b->caption = [&](const std::string&) {
        ++calls;
        return std::string("scene");
    };
    ModelGateway g(b);
    EXPECT_EQ(g.vlm_caption("r"), "scene");
    EXPECT_EQ(g.vlm_caption("r"), "scene");
    EXPECT_EQ(calls, 1);
    EXPECT_THROW(g.vlm_caption(""), BackendError);
}
