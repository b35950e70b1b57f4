#include <fstream>

#include <nlohmann/json.hpp>

#include "bami/backend.hpp"
#include "bami/error.hpp"
#include "bami/http_backend.hpp"
#include "bami/rng.hpp"
#include "bami/sim_backend.hpp"

namespace bami {

namespace {

using nlohmann::json;

BackendConfig http_config_from_json(const json& j) {
    BackendConfig cfg;
    cfg.endpoint = j.value("endpoint", "");
    cfg.model_name = j.value("model_name", j.value("model", ""));
    cfg.api_key_env = j.value("api_key_env", "");
    cfg.timeout_s = j.value("timeout", j.value("timeout_s", 30.0));
    cfg.max_retries = j.value("max_retries", 2);
    cfg.temperature = j.value("temperature", 0.0);
    cfg.retry_backoff_s = j.value("retry_backoff_s", 0.5);
    if (j.contains("prompt_template_file")) {
        const std::string file = j.at("prompt_template_file").get<std::string>();
        std::ifstream in(file);
        if (!in) throw Error(ErrorKind::io, "cannot open prompt template: " + file);
        cfg.prompt_template.assign((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    }
    cfg.validate();
    return cfg;
}

std::vector<std::pair<std::string, SimScene>> scenes_from_section(
    const json& j, const std::filesystem::path& config_dir, std::string* source) {
    if (j.contains("scene_file")) {
        const auto rel = std::filesystem::path(j.at("scene_file").get<std::string>());
        const auto path = rel.is_absolute() ? rel : config_dir / rel;
        *source = path.filename().string();
        return load_scene_set(path);
    }
    if (j.contains("scenes")) {
        *source = "inline";
        return scene_set_from_json_text(j.dump());
    }
    throw Error(ErrorKind::config, "sim backend section needs \"scene_file\" or \"scenes\"");
}

} // namespace

BackendSet load_backends(const std::filesystem::path& config_path, std::uint64_t seed_mix) {
    std::ifstream in(config_path);
    if (!in) throw Error(ErrorKind::io, "cannot open backend config: " + config_path.string());
    json root;
    try {
        root = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::config,
                    std::string("backend config is not valid JSON: ") + e.what());
    }

    const auto config_dir = config_path.parent_path();
    BackendSet set;

    // A bare BackendConfig object means "HTTP grounding, no correction".
    if (root.contains("endpoint") && !root.contains("grounding")) {
        set.grounding = std::make_unique<HttpGroundingBackend>(http_config_from_json(root));
        return set;
    }

    if (!root.contains("grounding")) {
        throw Error(ErrorKind::config, "backend config needs a \"grounding\" section");
    }

    const json& g = root.at("grounding");
    const std::string g_type = g.value("type", "http");
    std::vector<std::pair<std::string, SimScene>> grounding_scenes;
    std::string grounding_source;
    if (g_type == "http") {
        set.grounding = std::make_unique<HttpGroundingBackend>(http_config_from_json(g));
    } else if (g_type == "sim") {
        grounding_scenes = scenes_from_section(g, config_dir, &grounding_source);
        if (seed_mix != 0) {
            for (auto& [id, scene] : grounding_scenes) {
                scene.seed = rng::mix({scene.seed, seed_mix});
            }
        }
        set.grounding = std::make_unique<SimGroundingBackend>(grounding_scenes, grounding_source);
    } else {
        throw Error(ErrorKind::config, "unknown grounding backend type: " + g_type);
    }

    if (root.contains("correction")) {
        const json& c = root.at("correction");
        const std::string c_type = c.value("type", "http");
        if (c_type == "http") {
            set.correction = std::make_unique<HttpCorrectionBackend>(http_config_from_json(c));
        } else if (c_type == "sim") {
            SimCorrectionConfig cfg;
            cfg.error_rate = c.value("error_rate", 0.0);
            cfg.seed = c.value("seed", std::uint64_t{0});
            if (seed_mix != 0) cfg.seed = rng::mix({cfg.seed, seed_mix});
            std::vector<std::pair<std::string, SimScene>> scenes;
            std::string source;
            if (c.contains("scene_file") || c.contains("scenes")) {
                scenes = scenes_from_section(c, config_dir, &source);
            } else if (!grounding_scenes.empty()) {
                scenes = grounding_scenes;  // share the grounding scene set
                source = grounding_source;
            } else {
                throw Error(ErrorKind::config,
                            "sim correction needs scenes (own section or sim grounding to share)");
            }
            set.correction =
                std::make_unique<SimCorrectionBackend>(cfg, std::move(scenes), source);
        } else {
            throw Error(ErrorKind::config, "unknown correction backend type: " + c_type);
        }
    }
    return set;
}

} // namespace bami
