// bami: GUI-grounding inference tool.
//
// Subcommands:
//   ground  one query+screenshot through the baseline or the full pipeline
//   bench   dataset evaluation with report/outcome/manifest artifacts
//   mpd     masked-prediction-distribution attribution for one sample
//   simgen  synthetic scene/screenshot/dataset fixtures for simulator runs
//
// Exit codes: 0 ok, 2 backend failure, 3 unparsable model output,
// 64 usage/config error, 65 dataset or input-file error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bami/backend.hpp"
#include "bami/error.hpp"
#include "bami/eval.hpp"
#include "bami/manifest.hpp"
#include "bami/mpd.hpp"
#include "bami/pipeline.hpp"
#include "bami/rng.hpp"
#include "bami/sim_backend.hpp"
#include "bami/simgen.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitBackend = 2;
constexpr int kExitParse = 3;
constexpr int kExitUsage = 64;
constexpr int kExitData = 65;

int exit_code_for(const bami::Error& e) {
    switch (e.kind()) {
        case bami::ErrorKind::parse:
        case bami::ErrorKind::answer_unparseable:
            return kExitParse;
        case bami::ErrorKind::config:
            return kExitUsage;
        case bami::ErrorKind::dataset:
        case bami::ErrorKind::io:
        case bami::ErrorKind::decode:
            return kExitData;
        default:
            return kExitBackend;
    }
}

std::string default_out_dir() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
    return (fs::path("runs") / buf).string();
}

std::string sanitize_id(const std::string& id) {
    std::string out = id;
    for (char& c : out) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                        (c >= '0' && c <= '9') || c == '-' || c == '_' || c == '.';
        if (!ok) c = '_';
    }
    return out.empty() ? "sample" : out;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw bami::Error(bami::ErrorKind::io, "cannot write " + path.string());
    out << text;
}

std::string fnv_hex(const std::string& text) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx",
                  static_cast<unsigned long long>(bami::rng::hash_str(text)));
    return buf;
}

bool parse_pair(const std::string& text, char sep, int& a, int& b) {
    const auto pos = text.find(sep);
    if (pos == std::string::npos) return false;
    try {
        a = std::stoi(text.substr(0, pos));
        b = std::stoi(text.substr(pos + 1));
    } catch (...) {
        return false;
    }
    return true;
}

// Shared pipeline flags for ground/bench.
struct PipelineFlags {
    std::string mode = "bami";
    int iterations = 2;
    int candidates = 2;
    double lambda = 0.6;
    std::string style = "cot_kp";
    int click_expand = 25;
    bool no_selection = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--mode", mode, "baseline | bami")
            ->check(CLI::IsMember({"baseline", "bami"}));
        cmd->add_option("--iterations", iterations, "crop iterations N");
        cmd->add_option("--candidates", candidates, "candidates per iteration M");
        cmd->add_option("--lambda", lambda, "crop ratio in (0,1]");
        cmd->add_option("--style", style, "correction prompt: vanilla | cot | cot_kp");
        cmd->add_option("--click-expand", click_expand, "px around click outputs");
        cmd->add_flag("--no-selection", no_selection, "skip candidate selection");
    }

    bami::BamiConfig config() const {
        bami::BamiConfig cfg;
        cfg.iterations = iterations;
        cfg.candidates = candidates;
        cfg.lambda = lambda;
        cfg.prompt_style = bami::prompt_style_from_name(style);
        cfg.click_expand = click_expand;
        cfg.enable_selection = !no_selection;
        cfg.validate();
        return cfg;
    }

    ordered_json snapshot() const {
        return ordered_json{{"mode", mode},
                            {"iterations", iterations},
                            {"candidates", candidates},
                            {"lambda", lambda},
                            {"style", style},
                            {"click_expand", click_expand},
                            {"selection", !no_selection}};
    }
};

// ---------------------------------------------------------------------------
// ground
// ---------------------------------------------------------------------------

struct GroundArgs {
    std::string image;
    std::string query;
    std::string backend_config;
    std::string out = default_out_dir();
    std::string sample_id;
    std::uint64_t seed = 0;
    PipelineFlags pipeline;
};

int run_ground(const GroundArgs& args) {
    const bami::BamiConfig cfg = args.pipeline.config();
    fs::create_directories(args.out);

    bami::BackendSet backends = bami::load_backends(args.backend_config, args.seed);

    bami::RunManifest manifest;
    manifest.tool_version = bami::tool_version();
    manifest.command = "ground";
    manifest.config_json = args.pipeline.snapshot().dump();
    manifest.seed = args.seed;
    manifest.grounding_backend = backends.grounding->id();
    manifest.correction_backend = backends.correction ? backends.correction->id() : "";
    manifest.started_at = bami::iso8601_utc_now();
    manifest.write(fs::path(args.out) / "manifest.json");

    const bami::Raster img = bami::load_image(args.image);

    ordered_json result;
    if (args.pipeline.mode == "baseline") {
        const bami::Point p = bami::run_baseline(*backends.grounding, args.query, img,
                                                 args.sample_id, cfg.click_expand);
        result = ordered_json{{"point", {p.x, p.y}}, {"trace_path", ""}};
    } else {
        const bami::BamiTrace trace =
            bami::run_bami(*backends.grounding, backends.correction.get(), cfg, args.query, img,
                           args.sample_id);
        const std::string trace_rel = "trace.json";
        write_file(fs::path(args.out) / trace_rel, trace.to_json(2) + "\n");
        for (const std::string& w : trace.warnings) std::cerr << "warning: " << w << "\n";
        result = ordered_json{{"point", {trace.final_point.x, trace.final_point.y}},
                              {"trace_path", (fs::path(args.out) / trace_rel).string()}};
    }
    std::cout << result.dump() << "\n";

    manifest.finished_at = bami::iso8601_utc_now();
    manifest.write(fs::path(args.out) / "manifest.json");
    return 0;
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

struct BenchArgs {
    std::string dataset;
    std::string backend_config;
    std::string adapter = "native";
    std::string out = default_out_dir();
    int jobs = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> compare;
    PipelineFlags pipeline;
};

int run_bench(const BenchArgs& args) {
    if (!args.compare.empty()) {
        const bami::EvalReport a = bami::load_report(args.compare[0]);
        const bami::EvalReport b = bami::load_report(args.compare[1]);
        const bami::CompareTable table = bami::compare_reports(a, b);
        std::cout << table.to_text(a, b);
        return 0;
    }

    const bami::BamiConfig cfg = args.pipeline.config();
    const int jobs =
        args.jobs > 0 ? args.jobs : std::max(1u, std::thread::hardware_concurrency());

    const auto samples = bami::load_dataset(
        args.dataset, args.adapter == "screenspot" ? bami::DatasetAdapter::screenspot
                                                   : bami::DatasetAdapter::native);
    bami::BackendSet backends = bami::load_backends(args.backend_config, args.seed);

    fs::create_directories(fs::path(args.out) / "traces");

    ordered_json config_snapshot = args.pipeline.snapshot();
    config_snapshot["jobs"] = jobs;
    config_snapshot["adapter"] = args.adapter;

    bami::RunManifest manifest;
    manifest.tool_version = bami::tool_version();
    manifest.command = "bench";
    manifest.config_json = config_snapshot.dump();
    manifest.seed = args.seed;
    manifest.dataset_path = args.dataset;
    manifest.dataset_hash = bami::fnv1a_file_hex(args.dataset);
    manifest.grounding_backend = backends.grounding->id();
    manifest.correction_backend = backends.correction ? backends.correction->id() : "";
    manifest.started_at = bami::iso8601_utc_now();
    manifest.write(fs::path(args.out) / "manifest.json");

    const bool baseline = args.pipeline.mode == "baseline";
    const fs::path out_dir(args.out);
    bami::GroundingBackend& ground = *backends.grounding;
    bami::CorrectionBackend* correction = backends.correction.get();

    const bami::SampleRunner runner = [&](const bami::EvalSample& s, const bami::Raster& img) {
        if (baseline) {
            return bami::RunnerResult{
                bami::run_baseline(ground, s.instruction, img, s.id, cfg.click_expand), ""};
        }
        const bami::BamiTrace trace =
            bami::run_bami(ground, correction, cfg, s.instruction, img, s.id);
        const std::string trace_rel = "traces/" + sanitize_id(s.id) + ".json";
        write_file(out_dir / trace_rel, trace.to_json(2) + "\n");
        return bami::RunnerResult{trace.final_point, trace_rel};
    };

    const auto outcomes =
        bami::evaluate(samples, fs::path(args.dataset).parent_path(), runner, jobs);

    std::string outcome_log;
    for (const auto& o : outcomes) outcome_log += o.to_json_line() + "\n";
    write_file(out_dir / "outcomes.jsonl", outcome_log);

    bami::EvalReport report = bami::make_report(outcomes, samples);
    report.mode = args.pipeline.mode;
    report.seed = args.seed;
    report.config_hash = fnv_hex(config_snapshot.dump());
    report.grounding_backend = backends.grounding->id();
    report.correction_backend = backends.correction ? backends.correction->id() : "";
    report.timestamp = bami::iso8601_utc_now();
    write_file(out_dir / "report.json", report.to_json(2) + "\n");
    write_file(out_dir / "report.txt", report.to_text());
    std::cout << report.to_text();

    manifest.finished_at = bami::iso8601_utc_now();
    manifest.write(out_dir / "manifest.json");
    return 0;
}

// ---------------------------------------------------------------------------
// mpd
// ---------------------------------------------------------------------------

struct MpdArgs {
    std::string image;
    std::string query;
    std::string backend_config;
    std::string grid = "16x16";
    int samples = 300;
    std::string alpha = "0.1:0.9";
    std::uint64_t seed = 0;
    std::string out = default_out_dir();
    std::string sample_id;
    bool png = false;
    int jobs = 0;
};

int run_mpd_cmd(const MpdArgs& args) {
    bami::MpdConfig cfg;
    int rows = 0;
    int cols = 0;
    if (!parse_pair(args.grid, 'x', rows, cols)) {
        throw bami::Error(bami::ErrorKind::config, "--grid expects RxC, e.g. 16x16");
    }
    cfg.grid = bami::GridSpec{rows, cols};
    cfg.samples = args.samples;
    cfg.seed = args.seed;
    const auto colon = args.alpha.find(':');
    if (colon == std::string::npos) {
        throw bami::Error(bami::ErrorKind::config, "--alpha expects lo:hi, e.g. 0.1:0.9");
    }
    try {
        cfg.alpha_min = std::stod(args.alpha.substr(0, colon));
        cfg.alpha_max = std::stod(args.alpha.substr(colon + 1));
    } catch (...) {
        throw bami::Error(bami::ErrorKind::config, "--alpha expects lo:hi, e.g. 0.1:0.9");
    }
    cfg.validate();

    const int jobs =
        args.jobs > 0 ? args.jobs : std::max(1u, std::thread::hardware_concurrency());
    fs::create_directories(args.out);
    bami::BackendSet backends = bami::load_backends(args.backend_config, 0);

    const ordered_json config_snapshot{{"grid", args.grid},
                                       {"samples", cfg.samples},
                                       {"alpha_min", cfg.alpha_min},
                                       {"alpha_max", cfg.alpha_max},
                                       {"jobs", jobs},
                                       {"png", args.png}};

    bami::RunManifest manifest;
    manifest.tool_version = bami::tool_version();
    manifest.command = "mpd";
    manifest.config_json = config_snapshot.dump();
    manifest.seed = args.seed;
    manifest.grounding_backend = backends.grounding->id();
    manifest.started_at = bami::iso8601_utc_now();
    manifest.write(fs::path(args.out) / "manifest.json");

    const bami::Raster img = bami::load_image(args.image);
    const bami::MpdResult res =
        bami::run_mpd(*backends.grounding, args.query, img, cfg, args.sample_id, jobs);

    write_file(fs::path(args.out) / "scatter.csv", res.scatter_csv());
    write_file(fs::path(args.out) / "heatmap.csv", res.heatmap_csv(cfg.grid));
    if (args.png) {
        bami::save_png(bami::render_heat_overlay(img, res.heat, cfg.grid),
                       fs::path(args.out) / "overlay.png");
    }
    std::cerr << "recorded " << res.points.size() << " points, dropped " << res.failed << "\n";

    manifest.finished_at = bami::iso8601_utc_now();
    manifest.write(fs::path(args.out) / "manifest.json");
    return 0;
}

// ---------------------------------------------------------------------------
// simgen
// ---------------------------------------------------------------------------

struct SimgenArgs {
    std::string out;
    std::string dims = "1000x1000";
    int elements = 0;
    int distractors = 0;
    int count = 1;
    std::uint64_t seed = 0;
    double sigma_rel = 0.0;
    double ambig_prob = 0.0;
    double vis_threshold = 0.5;
    std::string elem = "40x30";
};

int run_simgen_cmd(const SimgenArgs& args) {
    bami::SimgenSpec spec;
    int w = 0;
    int h = 0;
    if (!parse_pair(args.dims, 'x', w, h)) {
        throw bami::Error(bami::ErrorKind::config, "--dims expects WxH, e.g. 1000x1000");
    }
    spec.dims = bami::ImageDims{w, h};
    if (!parse_pair(args.elem, 'x', w, h)) {
        throw bami::Error(bami::ErrorKind::config, "--elem expects WxH, e.g. 40x30");
    }
    spec.element_size = bami::ImageDims{w, h};
    if (args.elements > 0 && args.distractors > 0 && args.elements != args.distractors + 1) {
        throw bami::Error(bami::ErrorKind::config,
                          "--elements and --distractors disagree; pass one of them");
    }
    spec.elements = args.elements > 0 ? args.elements : args.distractors + 1;
    spec.count = args.count;
    spec.seed = args.seed;
    spec.precision_sigma_rel = args.sigma_rel;
    spec.ambig_prob = args.ambig_prob;
    spec.mask_visibility_threshold = args.vis_threshold;
    spec.validate();

    const bami::SimgenOutput out = bami::run_simgen(spec, args.out);

    bami::RunManifest manifest;
    manifest.tool_version = bami::tool_version();
    manifest.command = "simgen";
    manifest.config_json = ordered_json{{"dims", args.dims},
                                        {"elements", spec.elements},
                                        {"count", spec.count},
                                        {"sigma_rel", spec.precision_sigma_rel},
                                        {"ambig_prob", spec.ambig_prob},
                                        {"elem", args.elem}}
                               .dump();
    manifest.seed = args.seed;
    manifest.dataset_path = (fs::path(args.out) / out.dataset_file).string();
    manifest.dataset_hash = bami::fnv1a_file_hex(fs::path(args.out) / out.dataset_file);
    manifest.started_at = bami::iso8601_utc_now();
    manifest.finished_at = bami::iso8601_utc_now();
    manifest.write(fs::path(args.out) / "manifest.json");

    std::cout << ordered_json{{"out", args.out},
                              {"scenes", out.scene_file},
                              {"dataset", out.dataset_file},
                              {"backend_config", out.backend_config_file},
                              {"images", out.image_files.size()}}
                     .dump()
              << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"GUI grounding inference: coarse-to-fine masked-candidate pipeline, "
                 "attribution, and benchmark harness"};
    app.require_subcommand(1);

    GroundArgs ground_args;
    CLI::App* ground = app.add_subcommand("ground", "ground one query on one screenshot");
    ground->add_option("--image", ground_args.image, "screenshot (PNG or JPEG)")->required();
    ground->add_option("--query", ground_args.query, "natural-language instruction")->required();
    ground->add_option("--backend-config", ground_args.backend_config, "backend config JSON")
        ->required();
    ground->add_option("--out", ground_args.out, "output directory");
    ground->add_option("--sample-id", ground_args.sample_id, "scene key for sim backends");
    ground->add_option("--seed", ground_args.seed, "seed folded into simulator draws");
    ground_args.pipeline.attach(ground);

    BenchArgs bench_args;
    CLI::App* bench = app.add_subcommand("bench", "evaluate a dataset");
    bench->add_option("--dataset", bench_args.dataset, "dataset JSON");
    bench->add_option("--backend-config", bench_args.backend_config, "backend config JSON");
    bench->add_option("--adapter", bench_args.adapter, "native | screenspot")
        ->check(CLI::IsMember({"native", "screenspot"}));
    bench->add_option("--out", bench_args.out, "output directory");
    bench->add_option("--jobs", bench_args.jobs, "worker count (default: cores)");
    bench->add_option("--seed", bench_args.seed, "seed folded into simulator draws");
    bench
        ->add_option("--compare", bench_args.compare,
                     "two report.json files: print the delta table and exit")
        ->expected(2);
    bench_args.pipeline.attach(bench);

    MpdArgs mpd_args;
    CLI::App* mpd = app.add_subcommand("mpd", "masked-prediction-distribution attribution");
    mpd->add_option("--image", mpd_args.image, "screenshot (PNG or JPEG)")->required();
    mpd->add_option("--query", mpd_args.query, "natural-language instruction")->required();
    mpd->add_option("--backend-config", mpd_args.backend_config, "backend config JSON")
        ->required();
    mpd->add_option("--grid", mpd_args.grid, "mask grid RxC (default 16x16)");
    mpd->add_option("--samples", mpd_args.samples, "perturbed predictions K (default 300)");
    mpd->add_option("--alpha", mpd_args.alpha, "masking ratio range lo:hi (default 0.1:0.9)");
    mpd->add_option("--seed", mpd_args.seed, "draw seed");
    mpd->add_option("--out", mpd_args.out, "output directory");
    mpd->add_option("--sample-id", mpd_args.sample_id, "scene key for sim backends");
    mpd->add_flag("--png", mpd_args.png, "also write the heat overlay PNG");
    mpd->add_option("--jobs", mpd_args.jobs, "worker count (default: cores)");

    SimgenArgs simgen_args;
    CLI::App* simgen = app.add_subcommand("simgen", "generate simulator fixtures");
    simgen->add_option("--out", simgen_args.out, "output directory")->required();
    simgen->add_option("--dims", simgen_args.dims, "screenshot size WxH");
    simgen->add_option("--elements", simgen_args.elements, "elements per scene (incl. target)");
    simgen->add_option("--distractors", simgen_args.distractors, "distractors per scene");
    simgen->add_option("--count", simgen_args.count, "number of scenes/samples");
    simgen->add_option("--seed", simgen_args.seed, "placement + draw seed");
    simgen->add_option("--sigma-rel", simgen_args.sigma_rel,
                       "center noise std / max(frame dims)");
    simgen->add_option("--ambig-prob", simgen_args.ambig_prob, "distractor pull probability");
    simgen->add_option("--vis-threshold", simgen_args.vis_threshold,
                       "black fraction that hides an element");
    simgen->add_option("--elem", simgen_args.elem, "element size WxH");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (app.got_subcommand(ground)) return run_ground(ground_args);
        if (app.got_subcommand(bench)) {
            if (bench_args.compare.empty() &&
                (bench_args.dataset.empty() || bench_args.backend_config.empty())) {
                std::cerr << "bench needs --dataset and --backend-config (or --compare)\n";
                return kExitUsage;
            }
            return run_bench(bench_args);
        }
        if (app.got_subcommand(mpd)) return run_mpd_cmd(mpd_args);
        if (app.got_subcommand(simgen)) return run_simgen_cmd(simgen_args);
    } catch (const bami::Error& e) {
        std::cerr << "error (" << bami::error_kind_name(e.kind()) << "): " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBackend;
    }
    return kExitUsage;
}
