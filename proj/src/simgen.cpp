#include "bami/simgen.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "bami/error.hpp"
#include "bami/rng.hpp"

namespace bami {

namespace {

constexpr Rgb kBackground{200, 200, 200};
constexpr int kPlacementMargin = 4;  // keeps elements and their masks disjoint

const char* kGroups[] = {"Development", "Creative", "CAD", "Scientific", "Office", "OS"};

// Distinct, never-black fill per element index (golden-angle hue walk).
Rgb element_color(int index) {
    const double hue = std::fmod(0.137 + index * 0.381966, 1.0) * 6.0;
    const int sector = static_cast<int>(hue);
    const double frac = hue - sector;
    const double v = 0.85;
    const double s = 0.75;
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * frac);
    const double t = v * (1.0 - s * (1.0 - frac));
    double r = 0;
    double g = 0;
    double b = 0;
    switch (sector % 6) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        case 5: r = v; g = p; b = q; break;
    }
    return Rgb{static_cast<std::uint8_t>(r * 255), static_cast<std::uint8_t>(g * 255),
               static_cast<std::uint8_t>(b * 255)};
}

bool overlaps_with_margin(const BBox& a, const BBox& b, int margin) {
    return !(a.x2 + margin < b.x1 || b.x2 + margin < a.x1 || a.y2 + margin < b.y1 ||
             b.y2 + margin < a.y1);
}

} // namespace

void SimgenSpec::validate() const {
    if (!dims.valid()) throw Error(ErrorKind::config, "simgen dims invalid");
    if (elements < 1) throw Error(ErrorKind::config, "need at least one element");
    if (!element_size.valid() || element_size.width > dims.width ||
        element_size.height > dims.height) {
        throw Error(ErrorKind::config, "element size does not fit the image");
    }
    if (count < 1) throw Error(ErrorKind::config, "sample count must be >= 1");
    if (precision_sigma_rel < 0.0) throw Error(ErrorKind::config, "sigma must be >= 0");
    if (ambig_prob < 0.0 || ambig_prob > 1.0) throw Error(ErrorKind::config, "ambig_prob outside [0,1]");
}

SimScene generate_scene(const SimgenSpec& spec, std::uint64_t scene_seed,
                        const std::string& target_tag) {
    spec.validate();
    rng::Engine rng(rng::mix({spec.seed, scene_seed, rng::hash_str("placement")}));

    SimScene scene;
    scene.dims = spec.dims;
    scene.precision_sigma_rel = spec.precision_sigma_rel;
    scene.ambig_prob = spec.ambig_prob;
    scene.mask_visibility_threshold = spec.mask_visibility_threshold;
    scene.seed = rng::mix({spec.seed, scene_seed, rng::hash_str("draws")});

    const int w = spec.element_size.width;
    const int h = spec.element_size.height;
    for (int i = 0; i < spec.elements; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
            const int x = static_cast<int>(rng.below(spec.dims.width - w + 1));
            const int y = static_cast<int>(rng.below(spec.dims.height - h + 1));
            const BBox box{x, y, x + w - 1, y + h - 1};
            placed = true;
            for (const SimElement& other : scene.elements) {
                if (overlaps_with_margin(box, other.box, kPlacementMargin)) {
                    placed = false;
                    break;
                }
            }
            if (placed) {
                SimElement el;
                el.box = box;
                el.tag = i == 0 ? target_tag : "distractor-" + std::to_string(i);
                el.is_target = i == 0;
                scene.elements.push_back(std::move(el));
            }
        }
        if (!placed) {
            throw Error(ErrorKind::config,
                        "cannot place " + std::to_string(spec.elements) + " disjoint elements");
        }
    }
    scene.validate();
    return scene;
}

Raster render_scene(const SimScene& scene) {
    Raster img(scene.dims, kBackground);
    for (std::size_t i = 0; i < scene.elements.size(); ++i) {
        const BBox& b = scene.elements[i].box;
        const Rgb color = element_color(static_cast<int>(i));
        for (int y = b.y1; y <= b.y2; ++y) {
            for (int x = b.x1; x <= b.x2; ++x) {
                img.set(x, y, color);
            }
        }
    }
    return img;
}

SimgenOutput run_simgen(const SimgenSpec& spec, const std::filesystem::path& out_dir) {
    spec.validate();
    std::filesystem::create_directories(out_dir / "images");

    SimgenOutput out;
    nlohmann::ordered_json dataset = nlohmann::ordered_json::array();

    for (int i = 0; i < spec.count; ++i) {
        char id_buf[32];
        std::snprintf(id_buf, sizeof(id_buf), "sim-%04d", i);
        const std::string id = id_buf;
        const std::string tag = "click target " + std::to_string(i);

        SimScene scene = generate_scene(spec, static_cast<std::uint64_t>(i), tag);
        const Raster img = render_scene(scene);
        const std::string image_rel = "images/" + id + ".png";
        save_png(img, out_dir / image_rel);

        const BBox& gt = scene.elements.front().box;
        dataset.push_back({{"id", id},
                           {"image", image_rel},
                           {"instruction", tag},
                           {"bbox", {gt.x1, gt.y1, gt.x2, gt.y2}},
                           {"data_type", i % 2 == 0 ? "text" : "icon"},
                           {"group", kGroups[i % 6]}});

        out.scenes.emplace_back(id, std::move(scene));
        out.image_files.push_back(image_rel);
    }

    out.scene_file = "scenes.json";
    {
        std::ofstream f(out_dir / out.scene_file, std::ios::trunc);
        if (!f) throw Error(ErrorKind::io, "cannot write scenes.json");
        f << scene_set_to_json(out.scenes) << "\n";
    }

    out.dataset_file = "dataset.json";
    {
        std::ofstream f(out_dir / out.dataset_file, std::ios::trunc);
        if (!f) throw Error(ErrorKind::io, "cannot write dataset.json");
        f << dataset.dump(2) << "\n";
    }

    out.backend_config_file = "backend_config.json";
    {
        const nlohmann::ordered_json cfg{
            {"grounding", {{"type", "sim"}, {"scene_file", out.scene_file}}},
            {"correction", {{"type", "sim"}, {"error_rate", 0.0}, {"seed", spec.seed}}}};
        std::ofstream f(out_dir / out.backend_config_file, std::ios::trunc);
        if (!f) throw Error(ErrorKind::io, "cannot write backend_config.json");
        f << cfg.dump(2) << "\n";
    }
    return out;
}

} // namespace bami
