#pragma once

#include <string>
#include <vector>

#include "bami/backend.hpp"
#include "bami/error.hpp"
#include "bami/geometry.hpp"
#include "bami/image.hpp"
#include "bami/protocol.hpp"

namespace bami {

struct BamiConfig {
    int iterations = 2;       // N crop rounds
    int candidates = 2;       // M masked-exclusive predictions per round
    double lambda = 0.6;      // crop ratio relative to the current image
    PromptStyle prompt_style = PromptStyle::cot_kp;
    int click_expand = 25;    // px added around click-point outputs
    bool enable_selection = true;  // false = crop-only mode, always pick candidate 1

    void validate() const;
};

// The mutually exclusive candidate boxes of one iteration, in current-frame
// coordinates, parallel to the raw predictions they came from.
struct CandidateSet {
    std::vector<BBox> boxes;
    std::vector<GroundingPrediction> raw;

    std::size_t size() const { return boxes.size(); }
    bool empty() const { return boxes.empty(); }
};

// One two-image comparison inside select_candidate.
struct ComparisonRecord {
    int box1 = 0;      // candidate index shown as image 1 (green)
    int box2 = 0;      // candidate index shown as image 2 (red)
    int choice = 1;
    bool fallback = false;  // answer unusable, winner kept
};

struct IterationRecord {
    CropFrame frame;              // window this iteration predicted inside
    CandidateSet candidates;
    std::vector<ComparisonRecord> comparisons;
    int selected_index = 0;
    BBox selected_box_global;
};

struct BamiTrace {
    std::string query;
    ImageDims base;
    std::vector<IterationRecord> iterations;
    Point final_point;            // base-image coordinates
    std::vector<std::string> warnings;

    std::string to_json(int indent = -1) const;
};

// Raised when candidate 1 of some iteration fails; carries whatever the run
// completed before aborting.
class PipelineError : public Error {
public:
    PipelineError(ErrorKind kind, std::string message, BamiTrace partial)
        : Error(kind, std::move(message)), partial_trace(std::move(partial)) {}

    BamiTrace partial_trace;
};

// Masked-exclusive candidate generation: candidate i is predicted with all
// previous candidates blacked out. A failure on candidate 1 propagates; a
// failure later truncates the set with a warning. ctx.call_index advances by
// one per backend call.
CandidateSet generate_candidates(GroundingBackend& ground, const std::string& query,
                                 const Raster& img, int m, const BamiConfig& cfg, CallContext& ctx,
                                 std::vector<std::string>* warnings);

// Picks the preferred candidate. Two candidates cost one comparison; three or
// more run a sequential knockout where the current winner is always image 1.
// Unusable answers keep the winner; a dead correction backend yields index 0.
int select_candidate(CorrectionBackend* correct, const std::string& query, const Raster& img,
                     const CandidateSet& cands, PromptStyle style, CallContext& ctx,
                     std::vector<std::string>* warnings, std::vector<ComparisonRecord>* comparisons);

// Full pipeline: N rounds of (generate M candidates, select, crop around the
// winner), then the winner's center mapped back to base coordinates.
BamiTrace run_bami(GroundingBackend& ground, CorrectionBackend* correct, const BamiConfig& cfg,
                   const std::string& query, const Raster& img, const std::string& sample_id = {});

// Single-shot grounding: one prediction, center in base coordinates. Click
// outputs are widened by click_expand before the center is taken, exactly as
// the pipeline does.
Point run_baseline(GroundingBackend& ground, const std::string& query, const Raster& img,
                   const std::string& sample_id = {}, int click_expand = 25);

} // namespace bami
