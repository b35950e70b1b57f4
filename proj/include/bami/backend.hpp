#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "bami/geometry.hpp"
#include "bami/image.hpp"
#include "bami/protocol.hpp"

namespace bami {

// Per-call context the pipeline threads through every backend call. HTTP
// backends ignore it; simulators derive their per-call RNG stream from it so
// runs reproduce regardless of worker scheduling.
struct CallContext {
    TransformStack frames;    // crop frames from the base image to `img`
    int call_index = 0;       // ordinal of this backend call within one run
    std::string sample_id;    // evaluation sample key ("" outside the harness)
};

class GroundingBackend {
public:
    virtual ~GroundingBackend() = default;
    virtual GroundingPrediction ground(const std::string& query, const Raster& img,
                                       const CallContext& ctx) = 0;
    virtual std::string id() const = 0;
};

// One two-image comparison. `image1`/`image2` carry the annotated rasters the
// wire protocol needs; `box*_global` carry the raw geometry simulators need.
struct CorrectionQuery {
    std::string query;
    const Raster* image1 = nullptr;
    const Raster* image2 = nullptr;
    BBox box1_global;
    BBox box2_global;
    PromptStyle style = PromptStyle::cot_kp;
    CallContext ctx;
};

class CorrectionBackend {
public:
    virtual ~CorrectionBackend() = default;
    virtual CorrectionAnswer correct(const CorrectionQuery& q) = 0;
    virtual std::string id() const = 0;
};

// HTTP client settings for a chat-completion endpoint.
struct BackendConfig {
    std::string endpoint;          // e.g. http://127.0.0.1:8000/v1
    std::string model_name;
    std::string api_key_env;       // env var holding the bearer token; "" = no auth
    double timeout_s = 30.0;
    int max_retries = 2;
    double temperature = 0.0;      // masking provides diversity, not sampling
    double retry_backoff_s = 0.5;  // doubled per attempt, with jitter
    std::string prompt_template;   // optional override, "" = embedded default

    void validate() const;
};

// Grounding + correction pair assembled from a config file.
struct BackendSet {
    std::unique_ptr<GroundingBackend> grounding;
    std::unique_ptr<CorrectionBackend> correction;  // may be null
};

// Loads the JSON backend config file. Schema (README): either a single
// BackendConfig object (HTTP grounding only) or
//   {"grounding": {...}, "correction": {...}}
// where each section is {"type":"http", ...BackendConfig...} or
// {"type":"sim", "scene_file"|"scenes": ..., "error_rate":..., "seed":...}.
// A non-zero seed_mix folds into every simulator seed, giving runs fresh
// draws without touching the fixture files.
BackendSet load_backends(const std::filesystem::path& config_path, std::uint64_t seed_mix = 0);

} // namespace bami
