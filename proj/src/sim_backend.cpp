#include "bami/sim_backend.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "bami/error.hpp"
#include "bami/rng.hpp"

namespace bami {

namespace {

using nlohmann::json;

struct LocalElement {
    int index = -1;
    BBox local;        // element box translated into frame coordinates (unclipped)
    BBox in_frame;     // clipped portion, valid only when present
    bool present = false;
    bool visible = false;
};

long long count_black(const Raster& img, const BBox& region) {
    long long n = 0;
    for (int y = region.y1; y <= region.y2; ++y) {
        const std::uint8_t* row = img.data.data() + img.index(region.x1, y);
        for (int x = 0; x < region.width(); ++x) {
            if (row[3 * x] == 0 && row[3 * x + 1] == 0 && row[3 * x + 2] == 0) ++n;
        }
    }
    return n;
}

double center_distance(const BBox& a, const BBox& b) {
    const Point ca = center(a);
    const Point cb = center(b);
    const double dx = ca.x - cb.x;
    const double dy = ca.y - cb.y;
    return std::sqrt(dx * dx + dy * dy);
}

} // namespace

void SimScene::validate() const {
    if (!dims.valid()) throw Error(ErrorKind::config, "sim scene dims invalid");
    if (precision_sigma_rel < 0.0) throw Error(ErrorKind::config, "precision_sigma_rel must be >= 0");
    if (ambig_prob < 0.0 || ambig_prob > 1.0) throw Error(ErrorKind::config, "ambig_prob outside [0,1]");
    if (mask_visibility_threshold < 0.0 || mask_visibility_threshold > 1.0) {
        throw Error(ErrorKind::config, "mask_visibility_threshold outside [0,1]");
    }
    for (const SimElement& el : elements) {
        if (!el.box.valid() || el.box.x2 >= dims.width || el.box.y2 >= dims.height) {
            throw Error(ErrorKind::config, "scene element box outside scene dims");
        }
    }
    for (std::size_t i = 0; i < elements.size(); ++i) {
        for (std::size_t j = i + 1; j < elements.size(); ++j) {
            if (elements[i].is_target && elements[j].is_target &&
                elements[i].tag == elements[j].tag) {
                throw Error(ErrorKind::config, "duplicate target for tag: " + elements[i].tag);
            }
        }
    }
}

GroundingPrediction sim_ground(const SimScene& scene, const std::string& query,
                               const Raster& img, const CallContext& ctx) {
    scene.validate();

    // Frame offset from base coordinates to `img` coordinates.
    int off_x = 0;
    int off_y = 0;
    if (ctx.frames.base().valid()) {
        if (ctx.frames.base() != scene.dims) {
            throw Error(ErrorKind::config, "transform stack base does not match scene dims");
        }
        if (ctx.frames.current_dims() != img.dims) {
            throw Error(ErrorKind::internal, "transform stack dims do not match raster");
        }
        for (const CropFrame& f : ctx.frames.frames()) {
            off_x += f.origin.x;
            off_y += f.origin.y;
        }
    } else if (img.dims != scene.dims) {
        throw Error(ErrorKind::config, "raster dims do not match scene dims (no transform stack)");
    }

    int target_index = -1;
    for (std::size_t i = 0; i < scene.elements.size(); ++i) {
        if (scene.elements[i].is_target && scene.elements[i].tag == query) {
            target_index = static_cast<int>(i);
            break;
        }
    }
    if (target_index < 0) {
        throw Error(ErrorKind::config, "query matches no scene target: " + query);
    }

    std::vector<LocalElement> locals(scene.elements.size());
    for (std::size_t i = 0; i < scene.elements.size(); ++i) {
        LocalElement& le = locals[i];
        le.index = static_cast<int>(i);
        const BBox& g = scene.elements[i].box;
        le.local = BBox{g.x1 - off_x, g.y1 - off_y, g.x2 - off_x, g.y2 - off_y};
        const auto clipped =
            intersect(le.local, BBox{0, 0, img.dims.width - 1, img.dims.height - 1});
        if (!clipped) continue;
        le.present = true;
        le.in_frame = *clipped;
        const double frac = static_cast<double>(count_black(img, le.in_frame)) /
                            static_cast<double>(le.in_frame.area());
        le.visible = frac < scene.mask_visibility_threshold;
    }

    rng::Engine rng(rng::mix({scene.seed, rng::hash_str(query),
                              static_cast<std::uint64_t>(ctx.frames.depth()),
                              static_cast<std::uint64_t>(ctx.call_index),
                              rng::hash_str(ctx.sample_id)}));

    // Ambiguity draw happens first so the stream layout is fixed.
    const bool ambiguous = rng.uniform01() < scene.ambig_prob;

    const LocalElement& target = locals[target_index];
    const LocalElement* chosen = nullptr;

    if (ambiguous) {
        std::vector<const LocalElement*> pool;
        for (const LocalElement& le : locals) {
            if (le.visible && scene.elements[le.index].tag != query) pool.push_back(&le);
        }
        if (!pool.empty()) chosen = pool[rng.below(pool.size())];
    }
    if (!chosen) {
        if (target.visible) {
            chosen = &target;
        } else {
            // Target hidden: the model latches onto the nearest surviving element.
            double best = std::numeric_limits<double>::infinity();
            for (const LocalElement& le : locals) {
                if (!le.visible || le.index == target_index) continue;
                const double d = center_distance(le.local, target.local);
                if (d < best) {
                    best = d;
                    chosen = &le;
                }
            }
        }
    }
    if (!chosen) {
        throw Error(ErrorKind::no_visible_target, "no visible element for query: " + query);
    }

    const double sigma =
        scene.precision_sigma_rel * static_cast<double>(std::max(img.dims.width, img.dims.height));
    const Point exact = center(chosen->local);
    const double gx = rng.gaussian();
    const double gy = rng.gaussian();
    const int nx = std::clamp(static_cast<int>(std::llround(exact.x + gx * sigma)), 0,
                              img.dims.width - 1);
    const int ny = std::clamp(static_cast<int>(std::llround(exact.y + gy * sigma)), 0,
                              img.dims.height - 1);

    BBox out{chosen->local.x1 + (nx - exact.x), chosen->local.y1 + (ny - exact.y),
             chosen->local.x2 + (nx - exact.x), chosen->local.y2 + (ny - exact.y)};
    const auto clipped = intersect(out, BBox{0, 0, img.dims.width - 1, img.dims.height - 1});
    if (!clipped) throw Error(ErrorKind::internal, "sim prediction left the frame");

    GroundingPrediction p;
    p.kind = PredictionKind::box;
    p.box = *clipped;
    p.raw_text = format_box(*clipped);
    return p;
}

CorrectionAnswer sim_correct(const SimCorrectionConfig& cfg, const BBox& gt, const BBox& cand1,
                             const BBox& cand2, std::uint64_t stream) {
    if (cfg.error_rate < 0.0 || cfg.error_rate > 1.0) {
        throw Error(ErrorKind::config, "error_rate outside [0,1]");
    }
    int choice;
    if (contains(gt, center(cand1))) {
        choice = 1;  // candidate 1 keeps its fallback priority on ties
    } else if (contains(gt, center(cand2))) {
        choice = 2;
    } else {
        choice = center_distance(cand1, gt) <= center_distance(cand2, gt) ? 1 : 2;
    }
    rng::Engine rng(rng::mix({cfg.seed, stream}));
    if (rng.uniform01() < cfg.error_rate) choice = 3 - choice;

    CorrectionAnswer out;
    out.choice = choice;
    return out;
}

// ---------------------------------------------------------------------------
// Scene (de)serialization
// ---------------------------------------------------------------------------

namespace {

json scene_to_json(const SimScene& s) {
    json elems = json::array();
    for (const SimElement& el : s.elements) {
        elems.push_back({{"box", {el.box.x1, el.box.y1, el.box.x2, el.box.y2}},
                         {"tag", el.tag},
                         {"is_target", el.is_target}});
    }
    return json{{"dims", {{"width", s.dims.width}, {"height", s.dims.height}}},
                {"elements", std::move(elems)},
                {"precision_sigma_rel", s.precision_sigma_rel},
                {"ambig_prob", s.ambig_prob},
                {"mask_visibility_threshold", s.mask_visibility_threshold},
                {"seed", s.seed}};
}

SimScene scene_from_json(const json& j) {
    SimScene s;
    s.dims = ImageDims{j.at("dims").at("width").get<int>(), j.at("dims").at("height").get<int>()};
    for (const json& e : j.at("elements")) {
        SimElement el;
        const auto& b = e.at("box");
        el.box = BBox{b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>()};
        el.tag = e.at("tag").get<std::string>();
        el.is_target = e.value("is_target", false);
        s.elements.push_back(std::move(el));
    }
    s.precision_sigma_rel = j.value("precision_sigma_rel", 0.0);
    s.ambig_prob = j.value("ambig_prob", 0.0);
    s.mask_visibility_threshold = j.value("mask_visibility_threshold", 0.5);
    s.seed = j.value("seed", std::uint64_t{0});
    s.validate();
    return s;
}

} // namespace

std::string scene_set_to_json(const std::vector<std::pair<std::string, SimScene>>& scenes) {
    json arr = json::array();
    for (const auto& [id, scene] : scenes) {
        json j = scene_to_json(scene);
        j["id"] = id;
        arr.push_back(std::move(j));
    }
    return json{{"scenes", std::move(arr)}}.dump(2);
}

std::vector<std::pair<std::string, SimScene>> scene_set_from_json_text(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::config, std::string("scene file is not valid JSON: ") + e.what());
    }
    std::vector<std::pair<std::string, SimScene>> out;
    try {
        const json& arr = root.is_object() && root.contains("scenes") ? root.at("scenes") : root;
        if (arr.is_array()) {
            for (const json& j : arr) {
                out.emplace_back(j.value("id", ""), scene_from_json(j));
            }
        } else {
            out.emplace_back(arr.value("id", ""), scene_from_json(arr));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::config, std::string("bad scene schema: ") + e.what());
    }
    return out;
}

std::vector<std::pair<std::string, SimScene>> load_scene_set(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open scene file: " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return scene_set_from_json_text(text);
}

// ---------------------------------------------------------------------------
// Backend adapters
// ---------------------------------------------------------------------------

namespace {

const SimScene& lookup_scene(const std::map<std::string, SimScene>& scenes,
                             const std::string& single_id, const std::string& sample_id) {
    if (sample_id.empty()) {
        if (scenes.size() == 1) return scenes.begin()->second;
        throw Error(ErrorKind::config, "sample id required: scene set holds multiple scenes");
    }
    const auto it = scenes.find(sample_id);
    if (it == scenes.end()) {
        if (scenes.size() == 1 && single_id.empty()) return scenes.begin()->second;
        throw Error(ErrorKind::config, "no scene for sample: " + sample_id);
    }
    return it->second;
}

std::map<std::string, SimScene> to_map(std::vector<std::pair<std::string, SimScene>> scenes) {
    std::map<std::string, SimScene> m;
    for (auto& [id, scene] : scenes) {
        if (!m.emplace(id, std::move(scene)).second) {
            throw Error(ErrorKind::config, "duplicate scene id: " + id);
        }
    }
    if (m.empty()) throw Error(ErrorKind::config, "scene set is empty");
    return m;
}

const SimElement& scene_target(const SimScene& scene, const std::string& query) {
    for (const SimElement& el : scene.elements) {
        if (el.is_target && el.tag == query) return el;
    }
    throw Error(ErrorKind::config, "query matches no scene target: " + query);
}

} // namespace

SimGroundingBackend::SimGroundingBackend(std::vector<std::pair<std::string, SimScene>> scenes,
                                         std::string source)
    : scenes_(to_map(std::move(scenes))), source_(std::move(source)) {
    if (scenes_.size() == 1) single_id_ = scenes_.begin()->first;
}

GroundingPrediction SimGroundingBackend::ground(const std::string& query, const Raster& img,
                                                const CallContext& ctx) {
    return sim_ground(lookup_scene(scenes_, single_id_, ctx.sample_id), query, img, ctx);
}

const SimScene& SimGroundingBackend::scene_for(const std::string& sample_id) const {
    return lookup_scene(scenes_, single_id_, sample_id);
}

std::string SimGroundingBackend::id() const {
    return "sim:" + source_ + "#" + std::to_string(scenes_.size());
}

SimCorrectionBackend::SimCorrectionBackend(SimCorrectionConfig cfg,
                                           std::vector<std::pair<std::string, SimScene>> scenes,
                                           std::string source)
    : cfg_(cfg), scenes_(to_map(std::move(scenes))), source_(std::move(source)) {
    if (scenes_.size() == 1) single_id_ = scenes_.begin()->first;
}

CorrectionAnswer SimCorrectionBackend::correct(const CorrectionQuery& q) {
    const SimScene& scene = lookup_scene(scenes_, single_id_, q.ctx.sample_id);
    const SimElement& target = scene_target(scene, q.query);
    const std::uint64_t stream =
        rng::mix({rng::hash_str(q.ctx.sample_id), rng::hash_str(q.query),
                  static_cast<std::uint64_t>(q.ctx.call_index)});
    return sim_correct(cfg_, target.box, q.box1_global, q.box2_global, stream);
}

std::string SimCorrectionBackend::id() const {
    return "sim-correct:" + source_ + ":err=" + std::to_string(cfg_.error_rate);
}

} // namespace bami
