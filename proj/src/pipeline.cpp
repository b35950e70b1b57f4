#include "bami/pipeline.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "bami/error.hpp"

namespace bami {

namespace {

void warn(std::vector<std::string>* warnings, std::string msg) {
    if (warnings) warnings->push_back(std::move(msg));
}

// Predictions arriving as clicks enter the candidate set as expanded boxes;
// boxes are clipped into the frame.
BBox prediction_to_box(const GroundingPrediction& p, int click_expand, ImageDims dims) {
    if (p.kind == PredictionKind::click) {
        if (p.click.x < 0 || p.click.y < 0 || p.click.x >= dims.width || p.click.y >= dims.height) {
            throw Error(ErrorKind::parse, "click point outside the image", p.raw_text);
        }
        return click_to_box(p.click, click_expand, dims);
    }
    const auto clipped = clip_to(p.box, dims);
    if (!clipped) {
        throw Error(ErrorKind::parse, "predicted box entirely outside the image", p.raw_text);
    }
    return *clipped;
}

} // namespace

void BamiConfig::validate() const {
    if (iterations < 1) throw Error(ErrorKind::config, "iterations must be >= 1");
    if (candidates < 1) throw Error(ErrorKind::config, "candidates must be >= 1");
    if (!(lambda > 0.0 && lambda <= 1.0)) throw Error(ErrorKind::config, "lambda outside (0,1]");
    if (click_expand < 0) throw Error(ErrorKind::config, "click_expand must be >= 0");
}

CandidateSet generate_candidates(GroundingBackend& ground, const std::string& query,
                                 const Raster& img, int m, const BamiConfig& cfg, CallContext& ctx,
                                 std::vector<std::string>* warnings) {
    if (m < 1) throw Error(ErrorKind::config, "candidate count must be >= 1");

    CandidateSet out;
    for (int i = 0; i < m; ++i) {
        CallContext call = ctx;
        ctx.call_index += 1;
        try {
            GroundingPrediction p;
            if (out.boxes.empty()) {
                p = ground.ground(query, img, call);
            } else {
                const Raster masked = mask_regions(img, out.boxes);
                p = ground.ground(query, masked, call);
            }
            const BBox box = prediction_to_box(p, cfg.click_expand, img.dims);
            if (std::find(out.boxes.begin(), out.boxes.end(), box) != out.boxes.end()) {
                warn(warnings, "candidate " + std::to_string(i + 1) + " duplicates an earlier box");
            }
            out.boxes.push_back(box);
            out.raw.push_back(std::move(p));
        } catch (const Error& e) {
            if (i == 0) throw;
            warn(warnings, "candidate " + std::to_string(i + 1) + " failed (" +
                               error_kind_name(e.kind()) + "): " + e.what() +
                               "; truncating candidate set");
            break;
        }
    }
    return out;
}

int select_candidate(CorrectionBackend* correct, const std::string& query, const Raster& img,
                     const CandidateSet& cands, PromptStyle style, CallContext& ctx,
                     std::vector<std::string>* warnings,
                     std::vector<ComparisonRecord>* comparisons) {
    if (cands.empty()) throw Error(ErrorKind::internal, "cannot select from an empty candidate set");
    if (cands.size() == 1) return 0;
    if (!correct) {
        warn(warnings, "no correction backend configured; keeping candidate 1");
        return 0;
    }

    // Sequential knockout. The running winner is always presented as image 1
    // (green "1"), so an unusable answer defaults to keeping it.
    int winner = 0;
    for (int challenger = 1; challenger < static_cast<int>(cands.size()); ++challenger) {
        const Raster img1 = annotate_box(img, cands.boxes[winner], kBoxColorOne, "1");
        const Raster img2 = annotate_box(img, cands.boxes[challenger], kBoxColorTwo, "2");

        CorrectionQuery q;
        q.query = query;
        q.image1 = &img1;
        q.image2 = &img2;
        q.box1_global = to_global_box(ctx.frames, cands.boxes[winner]);
        q.box2_global = to_global_box(ctx.frames, cands.boxes[challenger]);
        q.style = style;
        q.ctx = ctx;
        ctx.call_index += 1;

        ComparisonRecord rec;
        rec.box1 = winner;
        rec.box2 = challenger;
        try {
            const CorrectionAnswer ans = correct->correct(q);
            rec.choice = ans.choice;
            if (ans.choice == 2) winner = challenger;
        } catch (const Error& e) {
            rec.choice = 1;
            rec.fallback = true;
            warn(warnings, std::string("correction call failed (") + error_kind_name(e.kind()) +
                               "): " + e.what() + "; keeping current winner");
        }
        if (comparisons) comparisons->push_back(rec);
    }
    return winner;
}

BamiTrace run_bami(GroundingBackend& ground, CorrectionBackend* correct, const BamiConfig& cfg,
                   const std::string& query, const Raster& img, const std::string& sample_id) {
    cfg.validate();
    if (!img.dims.valid()) throw Error(ErrorKind::config, "input image is empty");
    if (query.empty()) throw Error(ErrorKind::config, "query must be non-empty");

    BamiTrace trace;
    trace.query = query;
    trace.base = img.dims;

    TransformStack stack(img.dims);
    Raster cropped;
    const Raster* current = &img;

    CallContext ctx;
    ctx.frames = stack;
    ctx.sample_id = sample_id;
    ctx.call_index = 0;

    for (int t = 0; t < cfg.iterations; ++t) {
        IterationRecord rec;
        rec.frame = stack.empty() ? CropFrame{Point{0, 0}, img.dims} : stack.frames().back();
        ctx.frames = stack;

        try {
            rec.candidates =
                generate_candidates(ground, query, *current, cfg.candidates, cfg, ctx,
                                    &trace.warnings);
        } catch (const Error& e) {
            trace.warnings.push_back("iteration " + std::to_string(t + 1) +
                                     " aborted: " + e.what());
            throw PipelineError(e.kind(), e.what(), std::move(trace));
        }

        rec.selected_index =
            cfg.enable_selection
                ? select_candidate(correct, query, *current, rec.candidates, cfg.prompt_style,
                                   ctx, &trace.warnings, &rec.comparisons)
                : 0;
        const BBox selected = rec.candidates.boxes[rec.selected_index];
        rec.selected_box_global = to_global_box(stack, selected);
        trace.iterations.push_back(std::move(rec));

        if (t + 1 < cfg.iterations) {
            const CropFrame frame = crop_window(current->dims, selected, cfg.lambda);
            cropped = crop(*current, frame);
            current = &cropped;
            stack.push(frame);
        } else {
            trace.final_point = to_global(stack, center(selected));
        }
    }
    return trace;
}

Point run_baseline(GroundingBackend& ground, const std::string& query, const Raster& img,
                   const std::string& sample_id, int click_expand) {
    if (!img.dims.valid()) throw Error(ErrorKind::config, "input image is empty");
    if (query.empty()) throw Error(ErrorKind::config, "query must be non-empty");

    CallContext ctx;
    ctx.frames = TransformStack(img.dims);
    ctx.sample_id = sample_id;
    ctx.call_index = 0;

    const GroundingPrediction p = ground.ground(query, img, ctx);
    const BBox box = prediction_to_box(p, click_expand, img.dims);
    return center(box);
}

std::string BamiTrace::to_json(int indent) const {
    using nlohmann::ordered_json;
    ordered_json iters = ordered_json::array();
    for (const IterationRecord& it : iterations) {
        ordered_json cands = ordered_json::array();
        for (std::size_t i = 0; i < it.candidates.size(); ++i) {
            const GroundingPrediction& raw = it.candidates.raw[i];
            const BBox& b = it.candidates.boxes[i];
            cands.push_back({{"box", {b.x1, b.y1, b.x2, b.y2}},
                             {"kind", raw.kind == PredictionKind::box ? "box" : "click"},
                             {"raw_text", raw.raw_text}});
        }
        ordered_json comps = ordered_json::array();
        for (const ComparisonRecord& c : it.comparisons) {
            comps.push_back({{"box1", c.box1},
                             {"box2", c.box2},
                             {"choice", c.choice},
                             {"fallback", c.fallback}});
        }
        iters.push_back(
            {{"frame",
              {{"origin", {it.frame.origin.x, it.frame.origin.y}},
               {"dims", {it.frame.dims.width, it.frame.dims.height}}}},
             {"candidates", std::move(cands)},
             {"comparisons", std::move(comps)},
             {"selected_index", it.selected_index},
             {"selected_box_global",
              {it.selected_box_global.x1, it.selected_box_global.y1, it.selected_box_global.x2,
               it.selected_box_global.y2}}});
    }
    ordered_json j{{"query", query},
                   {"base", {{"width", base.width}, {"height", base.height}}},
                   {"iterations", std::move(iters)},
                   {"final_point", {final_point.x, final_point.y}},
                   {"warnings", warnings}};
    return j.dump(indent);
}

} // namespace bami
