#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "bami/backend.hpp"
#include "bami/geometry.hpp"
#include "bami/image.hpp"

namespace bami {

// Deterministic grounding-model stand-ins. The simulator reproduces the two
// failure modes that matter for this pipeline: a systematic center offset
// that grows with image resolution, and occasional selection of a plausible
// but wrong element.

struct SimElement {
    BBox box;          // base-image coordinates
    std::string tag;
    bool is_target = false;
};

struct SimScene {
    ImageDims dims;
    std::vector<SimElement> elements;
    double precision_sigma_rel = 0.0;        // noise std / max(frame w, frame h)
    double ambig_prob = 0.0;                 // chance of picking a distractor
    double mask_visibility_threshold = 0.5;  // black fraction that hides an element
    std::uint64_t seed = 0;

    void validate() const;
};

// Predicts a box for `query` on `img`, which sits under ctx.frames relative
// to the scene's base image. See README for the exact selection rules.
GroundingPrediction sim_ground(const SimScene& scene, const std::string& query,
                               const Raster& img, const CallContext& ctx);

struct SimCorrectionConfig {
    double error_rate = 0.0;
    std::uint64_t seed = 0;
};

// Picks the candidate whose center lies in gt (1 wins ties); otherwise the
// candidate with the nearer center. The result is flipped with probability
// error_rate, seeded by (cfg.seed, stream).
CorrectionAnswer sim_correct(const SimCorrectionConfig& cfg, const BBox& gt, const BBox& cand1,
                             const BBox& cand2, std::uint64_t stream = 0);

// --- scene (de)serialization ------------------------------------------------

std::string scene_set_to_json(const std::vector<std::pair<std::string, SimScene>>& scenes);
std::vector<std::pair<std::string, SimScene>> scene_set_from_json_text(const std::string& text);
std::vector<std::pair<std::string, SimScene>> load_scene_set(const std::filesystem::path& path);

// --- backend adapters ---------------------------------------------------------

class SimGroundingBackend : public GroundingBackend {
public:
    explicit SimGroundingBackend(std::vector<std::pair<std::string, SimScene>> scenes,
                                 std::string source = "inline");

    GroundingPrediction ground(const std::string& query, const Raster& img,
                               const CallContext& ctx) override;
    std::string id() const override;

    const SimScene& scene_for(const std::string& sample_id) const;

private:
    std::map<std::string, SimScene> scenes_;
    std::string single_id_;  // set when exactly one scene is loaded
    std::string source_;
};

class SimCorrectionBackend : public CorrectionBackend {
public:
    SimCorrectionBackend(SimCorrectionConfig cfg,
                         std::vector<std::pair<std::string, SimScene>> scenes,
                         std::string source = "inline");

    CorrectionAnswer correct(const CorrectionQuery& q) override;
    std::string id() const override;

private:
    SimCorrectionConfig cfg_;
    std::map<std::string, SimScene> scenes_;
    std::string single_id_;
    std::string source_;
};

} // namespace bami
