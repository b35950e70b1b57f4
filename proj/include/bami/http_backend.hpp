#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bami/backend.hpp"

namespace bami {

// Chat-completion request body; field order is part of the wire contract and
// covered by golden tests. `images` are base64 PNG payloads, attached in
// order after the text part.
nlohmann::ordered_json build_chat_request(const BackendConfig& cfg, const std::string& prompt,
                                          const std::vector<std::string>& images_base64);

// POSTs one chat-completion request and returns choices[0].message.content.
// Transport failures and 5xx replies are retried up to cfg.max_retries with
// exponential backoff; 4xx replies fail immediately.
std::string http_chat(const BackendConfig& cfg, const std::string& prompt,
                      const std::vector<std::string>& images_base64);

GroundingPrediction http_ground(const BackendConfig& cfg, const std::string& query,
                                const Raster& img);

CorrectionAnswer http_correct(const BackendConfig& cfg, const std::string& query,
                              const Raster& img1, const Raster& img2, PromptStyle style);

class HttpGroundingBackend : public GroundingBackend {
public:
    explicit HttpGroundingBackend(BackendConfig cfg);

    GroundingPrediction ground(const std::string& query, const Raster& img,
                               const CallContext& ctx) override;
    std::string id() const override;

private:
    BackendConfig cfg_;
};

class HttpCorrectionBackend : public CorrectionBackend {
public:
    explicit HttpCorrectionBackend(BackendConfig cfg);

    CorrectionAnswer correct(const CorrectionQuery& q) override;
    std::string id() const override;

private:
    BackendConfig cfg_;
};

} // namespace bami
