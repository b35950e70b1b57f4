#include "bami/http_backend.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "bami/error.hpp"
#include "bami/rng.hpp"

namespace bami {

namespace {

constexpr const char* kGroundingSystem = "You are a precise GUI grounding assistant.";
constexpr const char* kCorrectionSystem =
    "You are a careful assistant that compares two annotated screenshots.";

struct SplitUrl {
    std::string base;  // scheme://host[:port]
    std::string path;  // leading prefix, may be empty
};

SplitUrl split_endpoint(const std::string& endpoint) {
    const auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos) {
        throw Error(ErrorKind::config, "endpoint must include a scheme: " + endpoint);
    }
    const auto path_start = endpoint.find('/', scheme_end + 3);
    SplitUrl out;
    if (path_start == std::string::npos) {
        out.base = endpoint;
    } else {
        out.base = endpoint.substr(0, path_start);
        out.path = endpoint.substr(path_start);
        while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
    }
    return out;
}

std::string bearer_token(const BackendConfig& cfg) {
    if (cfg.api_key_env.empty()) return {};
    const char* value = std::getenv(cfg.api_key_env.c_str());
    if (!value || !*value) {
        throw Error(ErrorKind::config, "API key env var is not set: " + cfg.api_key_env);
    }
    return value;
}

} // namespace

void BackendConfig::validate() const {
    if (endpoint.empty()) throw Error(ErrorKind::config, "backend endpoint is empty");
    if (timeout_s <= 0.0) throw Error(ErrorKind::config, "backend timeout must be > 0");
    if (max_retries < 0) throw Error(ErrorKind::config, "max_retries must be >= 0");
    if (temperature < 0.0) throw Error(ErrorKind::config, "temperature must be >= 0");
}

nlohmann::ordered_json build_chat_request(const BackendConfig& cfg, const std::string& prompt,
                                          const std::vector<std::string>& images_base64) {
    nlohmann::ordered_json content = nlohmann::ordered_json::array();
    content.push_back({{"type", "text"}, {"text", prompt}});
    for (const std::string& b64 : images_base64) {
        content.push_back({{"type", "image_url"},
                           {"image_url", {{"url", "data:image/png;base64," + b64}}}});
    }
    nlohmann::ordered_json messages = nlohmann::ordered_json::array();
    messages.push_back(
        {{"role", "system"},
         {"content", images_base64.size() > 1 ? kCorrectionSystem : kGroundingSystem}});
    messages.push_back({{"role", "user"}, {"content", std::move(content)}});
    return nlohmann::ordered_json{
        {"model", cfg.model_name}, {"temperature", cfg.temperature}, {"messages", std::move(messages)}};
}

std::string http_chat(const BackendConfig& cfg, const std::string& prompt,
                      const std::vector<std::string>& images_base64) {
    cfg.validate();
    const SplitUrl url = split_endpoint(cfg.endpoint);
    const std::string body = build_chat_request(cfg, prompt, images_base64).dump();
    const std::string token = bearer_token(cfg);

    httplib::Headers headers;
    if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);

    rng::Engine jitter(rng::mix({rng::hash_str(cfg.endpoint), rng::hash_str(prompt)}));
    std::string last_failure = "no attempt made";

    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        if (attempt > 0) {
            const double backoff =
                cfg.retry_backoff_s * std::pow(2.0, attempt - 1) * (0.75 + 0.5 * jitter.uniform01());
            std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
        }

        httplib::Client client(url.base);
        const auto timeout = std::chrono::duration<double>(cfg.timeout_s);
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);

        auto res = client.Post(url.path + "/chat/completions", headers, body, "application/json");
        if (!res) {
            last_failure = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 200 && res->status < 300) {
            nlohmann::json reply;
            try {
                reply = nlohmann::json::parse(res->body);
                return reply.at("choices").at(0).at("message").at("content").get<std::string>();
            } catch (const nlohmann::json::exception& e) {
                throw Error(ErrorKind::parse,
                            std::string("malformed chat-completion reply: ") + e.what(), res->body);
            }
        }
        if (res->status >= 500) {
            last_failure = "server status " + std::to_string(res->status);
            continue;
        }
        throw Error(ErrorKind::http_status,
                    "chat request rejected with status " + std::to_string(res->status), res->body);
    }
    throw Error(ErrorKind::transport,
                last_failure + " after " + std::to_string(cfg.max_retries + 1) + " attempts to " +
                    cfg.endpoint);
}

GroundingPrediction http_ground(const BackendConfig& cfg, const std::string& query,
                                const Raster& img) {
    const std::string prompt = build_grounding_prompt(query, cfg.prompt_template);
    const std::string reply = http_chat(cfg, prompt, {encode_png_base64(img)});
    return parse_grounding_output(reply, Expect::either);
}

CorrectionAnswer http_correct(const BackendConfig& cfg, const std::string& query,
                              const Raster& img1, const Raster& img2, PromptStyle style) {
    const std::string prompt = build_correction_prompt(query, style, cfg.prompt_template);
    const std::string reply =
        http_chat(cfg, prompt, {encode_png_base64(img1), encode_png_base64(img2)});
    return parse_correction_answer(reply);
}

HttpGroundingBackend::HttpGroundingBackend(BackendConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
}

GroundingPrediction HttpGroundingBackend::ground(const std::string& query, const Raster& img,
                                                 const CallContext&) {
    return http_ground(cfg_, query, img);
}

std::string HttpGroundingBackend::id() const {
    return "http:" + cfg_.model_name + "@" + cfg_.endpoint;
}

HttpCorrectionBackend::HttpCorrectionBackend(BackendConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
}

CorrectionAnswer HttpCorrectionBackend::correct(const CorrectionQuery& q) {
    return http_correct(cfg_, q.query, *q.image1, *q.image2, q.style);
}

std::string HttpCorrectionBackend::id() const {
    return "http:" + cfg_.model_name + "@" + cfg_.endpoint;
}

} // namespace bami
