#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bami/backend.hpp"
#include "bami/geometry.hpp"
#include "bami/image.hpp"

namespace bami {

// Masked-prediction-distribution attribution: repeatedly black out random
// grid blocks, re-run grounding, and aggregate where the predictions land.

struct MpdConfig {
    GridSpec grid{16, 16};
    int samples = 300;         // K perturbed predictions
    double alpha_min = 0.1;    // masking-ratio range; extremes carry no signal
    double alpha_max = 0.9;
    std::uint64_t seed = 0;

    void validate() const;
};

struct MpdPoint {
    int draw_index = 0;        // k, 0-based
    double alpha = 0.0;
    Point point;               // predicted center, image coordinates
    std::vector<int> masked_blocks;  // indices into grid_blocks(dims, grid)
};

struct MpdResult {
    std::vector<MpdPoint> points;  // ascending draw_index; failures dropped
    std::vector<int> heat;         // grid.rows x grid.cols counts, row-major
    int failed = 0;

    std::string scatter_csv() const;                 // header: k,alpha,x,y
    std::string heatmap_csv(GridSpec grid) const;    // header: row,col,count
};

struct MpdDraw {
    double alpha = 0.0;
    std::vector<int> blocks;  // floor(alpha * rows * cols) distinct indices
};

// The k-th perturbation mask, fully determined by (cfg.seed, k).
MpdDraw mpd_draw(const MpdConfig& cfg, int k);

// Runs the K perturbed predictions. Backend failures are dropped and counted;
// an all-failed run throws ErrorKind::no_visible_target.
MpdResult run_mpd(GroundingBackend& ground, const std::string& query, const Raster& img,
                  const MpdConfig& cfg, const std::string& sample_id = {}, int jobs = 1);

// Exact-cover cell assignment; counts sum to |points|.
std::vector<int> aggregate_heatmap(const std::vector<Point>& points, ImageDims dims,
                                   GridSpec cells);

// Grayscale-over-screenshot rendering of the heat grid.
Raster render_heat_overlay(const Raster& img, const std::vector<int>& heat, GridSpec grid);

// The edit-vs-Euclidean mismatch for one coordinate: Levenshtein distance of
// the decimal strings against the absolute pixel difference.
struct DistancePair {
    int edit = 0;
    int euclid = 0;
};

DistancePair coordinate_distance_pair(int gt, int cand);

int levenshtein(std::string_view a, std::string_view b);

// --- error attribution ledger ----------------------------------------------

enum class ErrorLabel { knowledge_gap, precision_bias, ambiguity_bias, other };

const char* error_label_name(ErrorLabel label);
ErrorLabel error_label_from_name(std::string_view name);

struct AttributionRecord {
    ErrorLabel label = ErrorLabel::other;
    std::string sample_id;
    std::string notes;
};

// JSON-lines ledger, one record per line.
void append_attribution(const std::filesystem::path& ledger, const AttributionRecord& rec);
std::vector<AttributionRecord> load_attributions(const std::filesystem::path& ledger);

struct AttributionSummary {
    struct Row {
        ErrorLabel label;
        int count = 0;
        double proportion = 0.0;
    };
    std::vector<Row> rows;  // fixed label order, zero-count labels included
    int total = 0;

    std::string to_text() const;
};

AttributionSummary summarize_attributions(const std::vector<AttributionRecord>& records);

} // namespace bami
