#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "kvqa/errors.hpp"
#include "kvqa/http_backend.hpp"
#include "kvqa/mock_world.hpp"
#include "support.hpp"

using namespace kvqa;
using kvqa::testing::ScriptedBackend;
using kvqa::testing::teddy_world;

namespace {

// A BackendServer running on its own thread for the lifetime of the object.
class Served {
public:
    explicit Served(std::shared_ptr<ModelBackend> backend) : server_(std::move(backend)) {
        port_ = server_.bind_any_port();
        thread_ = std::thread([this] { server_.listen(); });
        server_.wait_until_ready();
    }
    ~Served() {
        server_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
    int port() const { return port_; }

private:
    BackendServer server_;
    int port_ = 0;
    std::thread thread_;
};

RetryPolicy fast(std::size_t attempts) { return {attempts, std::chrono::milliseconds(1), 2.0}; }

}  // namespace

TEST(Http, MatchesInProcessMock) {
    MockBackend local(teddy_world());
    Served served(std::make_shared<MockBackend>(teddy_world()));
    HttpBackend remote(served.url(), fast(1));

    EXPECT_EQ(remote.vlm_caption("img:teddy"), local.vlm_caption("img:teddy"));
    EXPECT_EQ(remote.vlm_encode("img:teddy", "Who is this named after?"),
              local.vlm_encode("img:teddy", "Who is this named after?"));
    EXPECT_EQ(remote.text_embed("toys on a blanket"), local.text_embed("toys on a blanket"));
    EXPECT_EQ(remote.image_text_similarity("img:pepsi", "a can"), local.image_text_similarity("img:pepsi", "a can"));
    const auto e1 = remote.entail_scores("The namesake of teddy bear is theodore roosevelt", "Who is this named after?");
    const auto e2 = local.entail_scores("The namesake of teddy bear is theodore roosevelt", "Who is this named after?");
    EXPECT_EQ(e1.entailment, e2.entailment);
    EXPECT_EQ(e1.contradiction, e2.contradiction);

    GenerationParams params;
    params.max_tokens = 16;
    const std::string prompt = "Question: Who is this named after? Answer:";
    EXPECT_EQ(remote.vlm_answer("img:teddy", prompt, params), local.vlm_answer("img:teddy", prompt, params));
    const std::string query = "1. What is the namesake of teddy bear?";
    EXPECT_EQ(remote.generate(GenerateRole::Knowledge, query, params),
              local.generate(GenerateRole::Knowledge, query, params));
}

TEST(Http, ServerErrorsAreRetried) {
    auto scripted = std::make_shared<ScriptedBackend>();
    std::atomic<int> calls{0};
    scripted->caption = [&](const std::string&) -> std::string {
        if (++calls < 3) throw std::runtime_error("temporarily unavailable");
        return "a scene";
    };
    Served served(scripted);
    EXPECT_EQ(HttpBackend(served.url(), fast(3)).vlm_caption("img:x"), "a scene");
    EXPECT_EQ(calls.load(), 3);

    calls = 0;
    EXPECT_THROW(HttpBackend(served.url(), fast(2)).vlm_caption("img:x"), TransportError);
    EXPECT_EQ(calls.load(), 2);
}

TEST(Http, ClientErrorsAreNotRetried) {
    auto scripted = std::make_shared<ScriptedBackend>();
    std::atomic<int> calls{0};
    scripted->caption = [&](const std::string&) -> std::string {
        ++calls;
        throw BackendError("unknown image");
    };
    Served served(scripted);
    try {
        HttpBackend(served.url(), fast(5)).vlm_caption("img:x");
        FAIL() << "expected BackendError";
    } catch (const TransportError&) {
        FAIL() << "4xx must not be reported as a transport failure";
    } catch (const BackendError&) {
    }
    EXPECT_EQ(calls.load(), 1);
}

TEST(Http, UnreachableServerIsTransportError) {
    int port = 0;
    {
        Served probe(std::make_shared<ScriptedBackend>());
        port = probe.port();
    }
    EXPECT_THROW(HttpBackend("http://127.0.0.1:" + std::to_string(port), fast(2), std::chrono::seconds(1))
                     .vlm_caption("img:x"),
                 TransportError);
}

TEST(Http, ProtocolVersionIsChecked) {
    Served served(std::make_shared<MockBackend>(teddy_world()));
    httplib::Client raw("127.0.0.1", served.port());
    const auto bad = raw.Post("/v1/caption", R"({"protocol_version": "2", "image_ref": "img:teddy"})",
                              "application/json");
    ASSERT_TRUE(bad);
    EXPECT_EQ(bad->status, 400);
    const auto junk = raw.Post("/v1/caption", "not json", "application/json");
    ASSERT_TRUE(junk);
    EXPECT_EQ(junk->status, 400);

    httplib::Server legacy;
    legacy.Post("/v1/caption", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"caption": "no version here"})", "application/json");
    });
    const int port = legacy.bind_to_any_port("127.0.0.1");
    std::thread t([&] { legacy.listen_after_bind(); });
    legacy.wait_until_ready();
    EXPECT_THROW(HttpBackend("http://127.0.0.1:" + std::to_string(port), fast(1)).vlm_caption("img:teddy"),
                 MalformedOutputError);
    legacy.stop();
    t.join();
}
