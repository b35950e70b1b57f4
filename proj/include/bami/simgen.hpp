#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bami/geometry.hpp"
#include "bami/image.hpp"
#include "bami/sim_backend.hpp"

namespace bami {

// Generation of synthetic benchmark fixtures: flat-color elements on a
// neutral background, one scene + screenshot + dataset record per sample.

struct SimgenSpec {
    ImageDims dims{1000, 1000};
    int elements = 1;          // total per scene, target included
    ImageDims element_size{40, 30};
    int count = 1;             // scenes (= dataset samples)
    double precision_sigma_rel = 0.0;
    double ambig_prob = 0.0;
    double mask_visibility_threshold = 0.5;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SimgenOutput {
    std::vector<std::pair<std::string, SimScene>> scenes;
    std::vector<std::string> image_files;   // relative to the output dir
    std::string dataset_file;               // native-schema dataset
    std::string scene_file;
    std::string backend_config_file;        // ready-to-run sim backend config
};

// Builds one scene: non-overlapping elements placed by seeded rejection
// sampling; element 0 is the target.
SimScene generate_scene(const SimgenSpec& spec, std::uint64_t scene_seed,
                        const std::string& target_tag);

// Renders the scene's synthetic screenshot (distinct per-tag colors, never
// black, on a neutral background).
Raster render_scene(const SimScene& scene);

// Writes scenes.json, dataset.json, backend_config.json and images/ under
// out_dir. Groups cycle through the six benchmark-style names and data_type
// alternates text/icon so reports exercise their full shape.
SimgenOutput run_simgen(const SimgenSpec& spec, const std::filesystem::path& out_dir);

} // namespace bami
