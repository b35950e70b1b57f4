#include "bami/mpd.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>
#include <thread>

#include <nlohmann/json.hpp>

#include "bami/error.hpp"
#include "bami/protocol.hpp"
#include "bami/rng.hpp"

namespace bami {

void MpdConfig::validate() const {
    if (grid.rows < 1 || grid.cols < 1) throw Error(ErrorKind::config, "grid must be >= 1x1");
    if (samples < 1) throw Error(ErrorKind::config, "sample count must be >= 1");
    if (!(alpha_min >= 0.0 && alpha_min <= alpha_max && alpha_max <= 1.0)) {
        throw Error(ErrorKind::config, "need 0 <= alpha_min <= alpha_max <= 1");
    }
}

MpdDraw mpd_draw(const MpdConfig& cfg, int k) {
    cfg.validate();
    rng::Engine rng(rng::mix({cfg.seed, 0x6D70645Fu /* draw stream */,
                              static_cast<std::uint64_t>(k)}));
    MpdDraw draw;
    draw.alpha = rng.uniform(cfg.alpha_min, cfg.alpha_max);

    const int total = cfg.grid.block_count();
    const int masked = static_cast<int>(draw.alpha * total);  // floor(alpha * M * N)

    // Partial Fisher-Yates over the index set: fully specified, no
    // implementation-defined std::sample ordering.
    std::vector<int> indices(total);
    std::iota(indices.begin(), indices.end(), 0);
    for (int i = 0; i < masked; ++i) {
        const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(total - i)));
        std::swap(indices[i], indices[j]);
    }
    draw.blocks.assign(indices.begin(), indices.begin() + masked);
    std::sort(draw.blocks.begin(), draw.blocks.end());
    return draw;
}

MpdResult run_mpd(GroundingBackend& ground, const std::string& query, const Raster& img,
                  const MpdConfig& cfg, const std::string& sample_id, int jobs) {
    cfg.validate();
    const std::vector<BBox> blocks = grid_blocks(img.dims, cfg.grid);

    struct Slot {
        std::optional<MpdPoint> point;
    };
    std::vector<Slot> slots(cfg.samples);

    std::atomic<int> next{0};
    auto worker = [&]() {
        while (true) {
            const int k = next.fetch_add(1);
            if (k >= cfg.samples) return;

            const MpdDraw draw = mpd_draw(cfg, k);
            std::vector<BBox> regions;
            regions.reserve(draw.blocks.size());
            for (int b : draw.blocks) regions.push_back(blocks[b]);

            CallContext ctx;
            ctx.frames = TransformStack(img.dims);
            ctx.call_index = k;
            ctx.sample_id = sample_id;

            try {
                const Raster masked = mask_regions(img, regions);
                const GroundingPrediction p = ground.ground(query, masked, ctx);
                Point c;
                if (p.kind == PredictionKind::box) {
                    c = center(p.box);
                } else {
                    c = p.click;
                }
                if (c.x < 0 || c.y < 0 || c.x >= img.dims.width || c.y >= img.dims.height) {
                    continue;  // unusable center, dropped like a failed call
                }
                MpdPoint mp;
                mp.draw_index = k;
                mp.alpha = draw.alpha;
                mp.point = c;
                mp.masked_blocks = draw.blocks;
                slots[k].point = std::move(mp);
            } catch (const Error&) {
                // dropped; the K budget is not re-spent on failures
            }
        }
    };

    const int n_workers = std::max(1, std::min(jobs, cfg.samples));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_workers);
        for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    MpdResult out;
    for (Slot& s : slots) {
        if (s.point) {
            out.points.push_back(std::move(*s.point));
        } else {
            out.failed += 1;
        }
    }
    if (out.points.empty()) {
        throw Error(ErrorKind::no_visible_target,
                    "all " + std::to_string(cfg.samples) + " perturbed predictions failed");
    }

    std::vector<Point> centers;
    centers.reserve(out.points.size());
    for (const MpdPoint& p : out.points) centers.push_back(p.point);
    out.heat = aggregate_heatmap(centers, img.dims, cfg.grid);
    return out;
}

std::vector<int> aggregate_heatmap(const std::vector<Point>& points, ImageDims dims,
                                   GridSpec cells) {
    const std::vector<BBox> blocks = grid_blocks(dims, cells);
    std::vector<int> counts(blocks.size(), 0);

    const int bw = dims.width / cells.cols;
    const int bh = dims.height / cells.rows;
    for (const Point& p : points) {
        if (p.x < 0 || p.y < 0 || p.x >= dims.width || p.y >= dims.height) {
            throw Error(ErrorKind::internal, "heatmap point outside image dims");
        }
        const int col = std::min(p.x / bw, cells.cols - 1);
        const int row = std::min(p.y / bh, cells.rows - 1);
        counts[static_cast<std::size_t>(row) * cells.cols + col] += 1;
    }
    return counts;
}

Raster render_heat_overlay(const Raster& img, const std::vector<int>& heat, GridSpec grid) {
    const std::vector<BBox> blocks = grid_blocks(img.dims, grid);
    if (heat.size() != blocks.size()) {
        throw Error(ErrorKind::internal, "heat grid does not match block count");
    }
    const int max_count = heat.empty() ? 0 : *std::max_element(heat.begin(), heat.end());

    Raster out = img;
    // Halve the screenshot, then push the red channel up with the cell count.
    for (std::uint8_t& b : out.data) b = static_cast<std::uint8_t>(b / 2);
    if (max_count == 0) return out;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (heat[i] == 0) continue;
        const int boost = 128 * heat[i] / max_count;
        for (int y = blocks[i].y1; y <= blocks[i].y2; ++y) {
            for (int x = blocks[i].x1; x <= blocks[i].x2; ++x) {
                const std::size_t idx = out.index(x, y);
                out.data[idx] = static_cast<std::uint8_t>(std::min(255, out.data[idx] + boost));
            }
        }
    }
    return out;
}

std::string MpdResult::scatter_csv() const {
    std::string out = "k,alpha,x,y\n";
    char line[96];
    for (const MpdPoint& p : points) {
        std::snprintf(line, sizeof(line), "%d,%.6f,%d,%d\n", p.draw_index, p.alpha, p.point.x,
                      p.point.y);
        out += line;
    }
    return out;
}

std::string MpdResult::heatmap_csv(GridSpec grid) const {
    std::string out = "row,col,count\n";
    char line[64];
    for (int r = 0; r < grid.rows; ++r) {
        for (int c = 0; c < grid.cols; ++c) {
            std::snprintf(line, sizeof(line), "%d,%d,%d\n", r, c,
                          heat[static_cast<std::size_t>(r) * grid.cols + c]);
            out += line;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Edit vs Euclidean distance
// ---------------------------------------------------------------------------

int levenshtein(std::string_view a, std::string_view b) {
    const std::size_t n = b.size();
    std::vector<int> prev(n + 1);
    std::vector<int> cur(n + 1);
    std::iota(prev.begin(), prev.end(), 0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        cur[0] = static_cast<int>(i) + 1;
        for (std::size_t j = 0; j < n; ++j) {
            const int subst = prev[j] + (a[i] == b[j] ? 0 : 1);
            cur[j + 1] = std::min({prev[j + 1] + 1, cur[j] + 1, subst});
        }
        std::swap(prev, cur);
    }
    return prev[n];
}

DistancePair coordinate_distance_pair(int gt, int cand) {
    if (gt < 0 || cand < 0) throw Error(ErrorKind::config, "coordinates must be non-negative");
    DistancePair out;
    out.edit = levenshtein(std::to_string(gt), std::to_string(cand));
    out.euclid = std::abs(gt - cand);
    return out;
}

// ---------------------------------------------------------------------------
// Attribution ledger
// ---------------------------------------------------------------------------

const char* error_label_name(ErrorLabel label) {
    switch (label) {
        case ErrorLabel::knowledge_gap: return "knowledge_gap";
        case ErrorLabel::precision_bias: return "precision_bias";
        case ErrorLabel::ambiguity_bias: return "ambiguity_bias";
        case ErrorLabel::other: return "other";
    }
    return "other";
}

ErrorLabel error_label_from_name(std::string_view name) {
    if (name == "knowledge_gap") return ErrorLabel::knowledge_gap;
    if (name == "precision_bias") return ErrorLabel::precision_bias;
    if (name == "ambiguity_bias") return ErrorLabel::ambiguity_bias;
    if (name == "other") return ErrorLabel::other;
    throw Error(ErrorKind::config, "unknown error label: " + std::string(name));
}

void append_attribution(const std::filesystem::path& ledger, const AttributionRecord& rec) {
    std::ofstream out(ledger, std::ios::app);
    if (!out) throw Error(ErrorKind::io, "cannot open attribution ledger: " + ledger.string());
    const nlohmann::ordered_json j{{"label", error_label_name(rec.label)},
                                   {"sample_id", rec.sample_id},
                                   {"notes", rec.notes}};
    out << j.dump() << "\n";
}

std::vector<AttributionRecord> load_attributions(const std::filesystem::path& ledger) {
    std::ifstream in(ledger);
    if (!in) throw Error(ErrorKind::io, "cannot open attribution ledger: " + ledger.string());
    std::vector<AttributionRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            AttributionRecord rec;
            rec.label = error_label_from_name(j.at("label").get<std::string>());
            rec.sample_id = j.value("sample_id", "");
            rec.notes = j.value("notes", "");
            out.push_back(std::move(rec));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::dataset, std::string("bad ledger line: ") + e.what());
        }
    }
    return out;
}

AttributionSummary summarize_attributions(const std::vector<AttributionRecord>& records) {
    AttributionSummary summary;
    summary.total = static_cast<int>(records.size());
    for (ErrorLabel label : {ErrorLabel::knowledge_gap, ErrorLabel::precision_bias,
                             ErrorLabel::ambiguity_bias, ErrorLabel::other}) {
        AttributionSummary::Row row;
        row.label = label;
        for (const AttributionRecord& rec : records) {
            if (rec.label == label) row.count += 1;
        }
        row.proportion = summary.total == 0
                             ? 0.0
                             : static_cast<double>(row.count) / static_cast<double>(summary.total);
        summary.rows.push_back(row);
    }
    return summary;
}

std::string AttributionSummary::to_text() const {
    std::string out = "Error Type       Count  Proportion\n";
    char line[96];
    for (const Row& row : rows) {
        std::snprintf(line, sizeof(line), "%-16s %5d  %5.1f%%\n", error_label_name(row.label),
                      row.count, 100.0 * row.proportion);
        out += line;
    }
    std::snprintf(line, sizeof(line), "%-16s %5d\n", "total", total);
    out += line;
    return out;
}

} // namespace bami
