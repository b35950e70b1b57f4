#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "bami/sim_backend.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out;
};

std::string cli_path() {
    const char* env = std::getenv("BAMI_CLI");
    REQUIRE_MESSAGE(env != nullptr, "BAMI_CLI must point at the tool binary");
    return env;
}

RunResult run_cli(const std::string& args) {
    const std::string cmd = cli_path() + " " + args + " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    RunResult res;
    std::array<char, 4096> buf;
    while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) {
        res.out.append(buf.data(), n);
        if (n < buf.size()) break;
    }
    const int status = pclose(pipe);
    res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return res;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("bami-cli-" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

} // namespace

TEST_CASE("cli: simgen then noiseless ground hits the target center") {
    TempDir dir;
    const std::string fix = (dir.path / "fix").string();
    const RunResult gen = run_cli("simgen --out " + fix + " --dims 500x400 --elements 2 --seed 3");
    REQUIRE(gen.exit_code == 0);

    // The dataset's first sample carries the target box; its center is the
    // expected noiseless answer.
    const auto dataset = nlohmann::json::parse(read_file(dir.path / "fix" / "dataset.json"));
    const auto& bbox = dataset.at(0).at("bbox");
    const int cx = (bbox.at(0).get<int>() + bbox.at(2).get<int>()) / 2;
    const int cy = (bbox.at(1).get<int>() + bbox.at(3).get<int>()) / 2;

    const RunResult res = run_cli(
        "ground --image " + fix + "/images/sim-0000.png --query \"click target 0\"" +
        " --backend-config " + fix + "/backend_config.json --sample-id sim-0000 --out " +
        (dir.path / "run").string());
    REQUIRE(res.exit_code == 0);
    const auto out = nlohmann::json::parse(res.out);
    CHECK(out.at("point").at(0).get<int>() == cx);
    CHECK(out.at("point").at(1).get<int>() == cy);
    CHECK(fs::exists(dir.path / "run" / "trace.json"));
    CHECK(fs::exists(dir.path / "run" / "manifest.json"));
}

TEST_CASE("cli: usage errors exit 64") {
    TempDir dir;
    const std::string fix = (dir.path / "fix").string();
    REQUIRE(run_cli("simgen --out " + fix + " --dims 300x300 --elements 1 --seed 1").exit_code ==
            0);

    CHECK(run_cli("ground --image " + fix + "/images/sim-0000.png --query q --backend-config " +
                  fix + "/backend_config.json --lambda 1.5 --out " + (dir.path / "x").string())
              .exit_code == 64);
    CHECK(run_cli("mpd --image " + fix + "/images/sim-0000.png --query q --backend-config " +
                  fix + "/backend_config.json --grid 0x4 --out " + (dir.path / "y").string())
              .exit_code == 64);
    CHECK(run_cli("bench --backend-config " + fix + "/backend_config.json").exit_code == 64);
    CHECK(run_cli("nonsense").exit_code == 64);
}

TEST_CASE("cli: unreachable endpoint exits 2") {
    TempDir dir;
    std::ofstream cfg(dir.path / "http.json");
    cfg << R"({"endpoint":"http://127.0.0.1:9/v1","model_name":"m",
               "timeout":0.3,"max_retries":0,"retry_backoff_s":0.01})";
    cfg.close();
    std::ofstream png(dir.path / "img.png", std::ios::binary);
    // Tiny valid PNG via the library under test is overkill here; reuse simgen.
    png.close();
    const std::string fix = (dir.path / "fix").string();
    REQUIRE(run_cli("simgen --out " + fix + " --dims 200x200 --elements 1 --seed 1").exit_code ==
            0);

    const RunResult res = run_cli("ground --image " + fix +
                                  "/images/sim-0000.png --query q --backend-config " +
                                  (dir.path / "http.json").string() + " --out " +
                                  (dir.path / "r").string());
    CHECK(res.exit_code == 2);
}

TEST_CASE("cli: dataset problems exit 65") {
    TempDir dir;
    const std::string fix = (dir.path / "fix").string();
    REQUIRE(run_cli("simgen --out " + fix + " --dims 200x200 --elements 1 --seed 1").exit_code ==
            0);

    std::ofstream bad(dir.path / "bad.json");
    bad << R"([{"id":"x","image":"img.png","instruction":"q","bbox":[5,5,1,1],
               "data_type":"text","group":"g"}])";
    bad.close();
    CHECK(run_cli("bench --dataset " + (dir.path / "bad.json").string() + " --backend-config " +
                  fix + "/backend_config.json --out " + (dir.path / "o").string())
              .exit_code == 65);
    CHECK(run_cli("bench --dataset " + (dir.path / "missing.json").string() +
                  " --backend-config " + fix + "/backend_config.json --out " +
                  (dir.path / "o2").string())
              .exit_code == 65);
}

TEST_CASE("cli: simgen is byte-identical for a fixed seed") {
    TempDir dir;
    const std::string a = (dir.path / "a").string();
    const std::string b = (dir.path / "b").string();
    const std::string flags = " --dims 400x300 --elements 3 --count 3 --seed 11 "
                              "--sigma-rel 0.05 --ambig-prob 0.5";
    REQUIRE(run_cli("simgen --out " + a + flags).exit_code == 0);
    REQUIRE(run_cli("simgen --out " + b + flags).exit_code == 0);

    for (const char* rel : {"dataset.json", "scenes.json", "backend_config.json",
                            "images/sim-0000.png", "images/sim-0001.png",
                            "images/sim-0002.png"}) {
        CHECK(read_file(dir.path / "a" / rel) == read_file(dir.path / "b" / rel));
    }
}

TEST_CASE("cli: simgen places disjoint elements (overlap oracle)") {
    TempDir dir;
    const std::string fix = (dir.path / "fix").string();
    REQUIRE(run_cli("simgen --out " + fix + " --dims 200x200 --elements 5 --seed 19").exit_code ==
            0);
    const auto scenes = bami::load_scene_set(dir.path / "fix" / "scenes.json");
    REQUIRE(scenes.size() == 1);
    const auto& elements = scenes[0].second.elements;
    REQUIRE(elements.size() == 5);
    for (std::size_t i = 0; i < elements.size(); ++i) {
        for (std::size_t j = i + 1; j < elements.size(); ++j) {
            CHECK(bami::iou(elements[i].box, elements[j].box) == 0.0);
        }
    }
}

TEST_CASE("cli: mpd default manifest records K=300 and 16x16") {
    TempDir dir;
    const std::string fix = (dir.path / "fix").string();
    REQUIRE(run_cli("simgen --out " + fix + " --dims 320x320 --elements 2 --seed 23").exit_code ==
            0);

    const std::string out = (dir.path / "mpd").string();
    const RunResult res = run_cli("mpd --image " + fix +
                                  "/images/sim-0000.png --query \"click target 0\"" +
                                  " --backend-config " + fix +
                                  "/backend_config.json --sample-id sim-0000 --out " + out);
    REQUIRE(res.exit_code == 0);

    const auto manifest = nlohmann::json::parse(read_file(dir.path / "mpd" / "manifest.json"));
    CHECK(manifest.at("config").at("samples") == 300);
    CHECK(manifest.at("config").at("grid") == "16x16");

    const std::string scatter = read_file(dir.path / "mpd" / "scatter.csv");
    CHECK(scatter.rfind("k,alpha,x,y\n", 0) == 0);
    CHECK(fs::exists(dir.path / "mpd" / "heatmap.csv"));
}

TEST_CASE("cli: mpd --samples 1 --alpha 0:0 equals the baseline center") {
    TempDir dir;
    const std::string fix = (dir.path / "fix").string();
    REQUIRE(run_cli("simgen --out " + fix + " --dims 300x300 --elements 2 --seed 29").exit_code ==
            0);

    const RunResult base = run_cli("ground --mode baseline --image " + fix +
                                   "/images/sim-0000.png --query \"click target 0\"" +
                                   " --backend-config " + fix +
                                   "/backend_config.json --sample-id sim-0000 --out " +
                                   (dir.path / "g").string());
    REQUIRE(base.exit_code == 0);
    const auto base_point = nlohmann::json::parse(base.out).at("point");

    const std::string out = (dir.path / "m").string();
    REQUIRE(run_cli("mpd --image " + fix + "/images/sim-0000.png --query \"click target 0\"" +
                    " --backend-config " + fix +
                    "/backend_config.json --sample-id sim-0000 --samples 1 --alpha 0:0 --out " +
                    out)
                .exit_code == 0);
    const std::string scatter = read_file(dir.path / "m" / "scatter.csv");
    // One data line: k=0, alpha=0, then the baseline center.
    const std::string expected = "0,0.000000," + std::to_string(base_point.at(0).get<int>()) +
                                 "," + std::to_string(base_point.at(1).get<int>()) + "\n";
    CHECK(scatter == "k,alpha,x,y\n" + expected);
}
