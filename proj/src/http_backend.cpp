#include "kvqa/http_backend.hpp"

#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "kvqa/errors.hpp"
#include "kvqa/serialization.hpp"

namespace kvqa {

namespace {

using nlohmann::json;

template <typename T>
T field(const json& j, const char* name, const std::string& endpoint) {
    try {
        return j.at(name).get<T>();
    } catch (const json::exception& e) {
        throw MalformedOutputError(endpoint + ": bad or missing field '" + name + "': " + e.what());
    }
}

json generation_json(const GenerationParams& p) {
    return {{"max_tokens", p.max_tokens}, {"temperature", p.temperature}, {"options", p.options}};
}

GenerationParams generation_from_json(const json& j) {
    GenerationParams p;
    p.max_tokens = j.value("max_tokens", p.max_tokens);
    p.temperature = j.value("temperature", p.temperature);
    p.options = j.value("options", std::vector<std::string>{});
    return p;
}

}  // namespace

HttpBackend::HttpBackend(std::string base_url, RetryPolicy retry, std::chrono::seconds timeout)
    : base_url_(std::move(base_url)), retry_(retry), timeout_(timeout) {
    if (base_url_.empty()) throw ConfigError("http backend: empty base url");
    while (base_url_.ends_with('/')) base_url_.pop_back();
    if (retry_.attempts == 0) throw ConfigError("http backend: at least one attempt is required");
}

json HttpBackend::post(const std::string& endpoint, json body) const {
    body["protocol_version"] = kProtocolVersion;
    const std::string payload = body.dump();
    const std::string path = "/v1/" + endpoint;
    std::string last_error;
    auto backoff = retry_.initial_backoff;
    for (std::size_t attempt = 1; attempt <= retry_.attempts; ++attempt) {
        httplib::Client client(base_url_);
        client.set_connection_timeout(timeout_);
        client.set_read_timeout(timeout_);
        client.set_write_timeout(timeout_);
        const auto res = client.Post(path, payload, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
        } else if (res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status) + ": " + res->body;
        } else if (res->status >= 400) {
            throw BackendError(path + " failed with HTTP " + std::to_string(res->status) + ": " + res->body);
        } else {
            json out;
            try {
                out = json::parse(res->body);
            } catch (const json::exception& e) {
                throw MalformedOutputError(path + ": response is not JSON: " + e.what());
            }
            if (!out.is_object() || out.value("protocol_version", std::string()) != kProtocolVersion) {
                throw MalformedOutputError(path + ": response lacks protocol_version \"1\"");
            }
            return out;
        }
        if (attempt < retry_.attempts) {
            spdlog::warn("{} attempt {} failed ({}); retrying in {} ms", path, attempt, last_error, backoff.count());
            std::this_thread::sleep_for(backoff);
            backoff = std::chrono::milliseconds(static_cast<long long>(static_cast<double>(backoff.count()) * retry_.multiplier));
        }
    }
    throw TransportError(path + " failed after " + std::to_string(retry_.attempts) + " attempts: " + last_error,
                         retry_.attempts);
}

ScoredAnswer HttpBackend::vlm_answer(const std::string& image_ref, const std::string& prompt,
                                     const GenerationParams& params) {
    const json out = post("answer", {{"image_ref", image_ref}, {"prompt", prompt}, {"params", generation_json(params)}});
    try {
        return ScoredAnswer::from_tokens(field<std::string>(out, "text", "answer"),
                                         field<std::vector<double>>(out, "token_probs", "answer"));
    } catch (const DomainError& e) {
        throw MalformedOutputError(std::string("answer: ") + e.what());
    }
}

std::string HttpBackend::vlm_caption(const std::string& image_ref) {
    return field<std::string>(post("caption", {{"image_ref", image_ref}}), "text", "caption");
}

Embedding HttpBackend::vlm_encode(const std::string& image_ref, const std::string& question) {
    return field<Embedding>(post("encode", {{"image_ref", image_ref}, {"question", question}}), "embedding", "encode");
}

std::string HttpBackend::generate(GenerateRole role, const std::string& prompt, const GenerationParams& params) {
    const json out = post("generate", {{"role", std::string(to_string(role))}, {"prompt", prompt},
                                       {"params", generation_json(params)}});
    return field<std::string>(out, "text", "generate");
}

Embedding HttpBackend::text_embed(const std::string& text) {
    return field<Embedding>(post("embed_text", {{"text", text}}), "embedding", "embed_text");
}

double HttpBackend::image_text_similarity(const std::string& image_ref, const std::string& text) {
    return field<double>(post("img_text_sim", {{"image_ref", image_ref}, {"text", text}}), "score", "img_text_sim");
}

EntailmentScores HttpBackend::entail_scores(const std::string& premise, const std::string& hypothesis) {
    const json out = post("entail", {{"premise", premise}, {"hypothesis", hypothesis}});
    return {field<double>(out, "entailment", "entail"), field<double>(out, "contradiction", "entail")};
}

struct BackendServer::Impl {
    std::shared_ptr<ModelBackend> backend;
    httplib::Server server;

    void route(const std::string& endpoint, std::function<json(const json&)> handler) {
        server.Post("/v1/" + endpoint, [handler = std::move(handler)](const httplib::Request& req, httplib::Response& res) {
            json reply;
            try {
                const json body = json::parse(req.body);
                if (body.value("protocol_version", std::string()) != kProtocolVersion) {
                    res.status = 400;
                    reply = {{"error", "protocol_version \"1\" is required"}};
                } else {
                    reply = handler(body);
                    res.status = 200;
                }
            } catch (const json::exception& e) {
                res.status = 400;
                reply = {{"error", e.what()}};
            } catch (const BackendError& e) {
                res.status = 422;
                reply = {{"error", e.what()}};
            } catch (const std::exception& e) {
                res.status = 500;
                reply = {{"error", e.what()}};
            }
            reply["protocol_version"] = kProtocolVersion;
            res.set_content(reply.dump(), "application/json");
        });
    }
};

BackendServer::BackendServer(std::shared_ptr<ModelBackend> backend) : impl_(std::make_unique<Impl>()) {
    impl_->backend = std::move(backend);
    ModelBackend& b = *impl_->backend;
    impl_->route("answer", [&b](const json& j) {
        const auto a = b.vlm_answer(j.at("image_ref"), j.at("prompt"), generation_from_json(j.value("params", json::object())));
        return json{{"text", a.text}, {"token_probs", a.token_probs}};
    });
    impl_->route("caption", [&b](const json& j) { return json{{"text", b.vlm_caption(j.at("image_ref"))}}; });
    impl_->route("encode", [&b](const json& j) {
        return json{{"embedding", b.vlm_encode(j.at("image_ref"), j.at("question"))}};
    });
    impl_->route("generate", [&b](const json& j) {
        const auto role = parse_generate_role(j.at("role").get<std::string>());
        return json{{"text", b.generate(role, j.at("prompt"), generation_from_json(j.value("params", json::object())))}};
    });
    impl_->route("embed_text", [&b](const json& j) { return json{{"embedding", b.text_embed(j.at("text"))}}; });
    impl_->route("img_text_sim", [&b](const json& j) {
        return json{{"score", b.image_text_similarity(j.at("image_ref"), j.at("text"))}};
    });
    impl_->route("entail", [&b](const json& j) {
        const auto e = b.entail_scores(j.at("premise"), j.at("hypothesis"));
        return json{{"entailment", e.entailment}, {"contradiction", e.contradiction}};
    });
}

BackendServer::~BackendServer() { stop(); }

int BackendServer::bind_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }

bool BackendServer::bind(const std::string& host, int port) { return impl_->server.bind_to_port(host, port); }

void BackendServer::listen() { impl_->server.listen_after_bind(); }

void BackendServer::stop() { impl_->server.stop(); }

void BackendServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace kvqa
