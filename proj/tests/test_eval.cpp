#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "bami/error.hpp"
#include "bami/eval.hpp"
#include "bami/pipeline.hpp"
#include "bami/rng.hpp"
#include "bami/sim_backend.hpp"
#include "bami/simgen.hpp"

using namespace bami;

namespace {

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const char* tag) {
        path = std::filesystem::temp_directory_path() /
               (std::string("bami-eval-") + tag + "-" + std::to_string(::getpid()));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::trunc);
    out << text;
}

// Six groups x text/icon x 5 samples; correctness chosen per flags.
std::pair<std::vector<EvalSample>, std::vector<EvalOutcome>> report_fixture(
    const std::vector<int>& correct_per_cell) {
    const char* groups[] = {"Development", "Creative", "CAD", "Scientific", "Office", "OS"};
    std::vector<EvalSample> samples;
    std::vector<EvalOutcome> outcomes;
    int cell = 0;
    for (const char* g : groups) {
        for (const char* type : {"text", "icon"}) {
            for (int i = 0; i < 5; ++i) {
                EvalSample s;
                s.id = std::string(g) + "-" + type + "-" + std::to_string(i);
                s.image_path = "unused.png";
                s.instruction = "x";
                s.gt_box = BBox{0, 0, 9, 9};
                s.data_type = type;
                s.group = g;
                samples.push_back(s);

                EvalOutcome o;
                o.sample_id = s.id;
                o.correct = i < correct_per_cell[cell];
                if (o.correct) o.predicted_point = Point{5, 5};
                outcomes.push_back(o);
            }
            ++cell;
        }
    }
    return {samples, outcomes};
}

} // namespace

TEST_CASE("load_dataset: native fixture comes back verbatim") {
    TempDir dir("native");
    const std::string json = R"([
      {"id":"a","image":"img/a.png","instruction":"click save",
       "bbox":[10,20,30,40],"data_type":"text","group":"Office"},
      {"id":"b","image":"img/b.png","instruction":"open menu",
       "bbox":[1,2,3,4],"data_type":"icon","group":"OS"}
    ])";
    write_text(dir.path / "data.json", json);

    const auto samples = load_dataset(dir.path / "data.json", DatasetAdapter::native);
    REQUIRE(samples.size() == 2);
    CHECK(samples[0].id == "a");
    CHECK(samples[0].image_path == "img/a.png");
    CHECK(samples[0].instruction == "click save");
    CHECK(samples[0].gt_box == BBox{10, 20, 30, 40});
    CHECK(samples[0].data_type == "text");
    CHECK(samples[0].group == "Office");
    CHECK(samples[1].gt_box == BBox{1, 2, 3, 4});
}

TEST_CASE("load_dataset: screenspot adapter maps aliases and [x,y,w,h]") {
    TempDir dir("sspot");
    const std::string json = R"([
      {"img_filename":"shot.png","instruction":"save","bbox":[10,20,5,5],
       "ui_type":"text","application":"excel"}
    ])";
    write_text(dir.path / "ss.json", json);

    const auto samples = load_dataset(dir.path / "ss.json", DatasetAdapter::screenspot);
    REQUIRE(samples.size() == 1);
    CHECK(samples[0].gt_box == BBox{10, 20, 15, 25});
    CHECK(samples[0].image_path == "shot.png");
    CHECK(samples[0].group == "excel");
    CHECK(samples[0].id == "row-0");
}

TEST_CASE("load_dataset: schema violations carry the row index") {
    TempDir dir("bad");
    write_text(dir.path / "bad.json", R"([
      {"id":"ok","image":"a.png","instruction":"x","bbox":[0,0,5,5],
       "data_type":"text","group":"g"},
      {"id":"bad","image":"b.png","instruction":"x","bbox":[9,0,5,5],
       "data_type":"text","group":"g"}
    ])");
    try {
        load_dataset(dir.path / "bad.json", DatasetAdapter::native);
        FAIL("expected dataset error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::dataset);
        CHECK(std::string(e.what()).find("row 1") != std::string::npos);
    }

    CHECK_THROWS_AS(load_dataset(dir.path / "missing.json", DatasetAdapter::native), Error);
    write_text(dir.path / "obj.json", R"({"not":"an array"})");
    CHECK_THROWS_AS(load_dataset(dir.path / "obj.json", DatasetAdapter::native), Error);
}

TEST_CASE("evaluate: noiseless sim dataset scores 100%") {
    TempDir dir("run");
    SimgenSpec spec;
    spec.dims = ImageDims{300, 200};
    spec.elements = 2;
    spec.count = 6;
    spec.seed = 42;
    const SimgenOutput gen = run_simgen(spec, dir.path);

    const auto samples = load_dataset(dir.path / gen.dataset_file, DatasetAdapter::native);
    auto ground = std::make_shared<SimGroundingBackend>(gen.scenes, "fixture");

    const SampleRunner runner = [ground](const EvalSample& s, const Raster& img) {
        return RunnerResult{run_baseline(*ground, s.instruction, img, s.id), ""};
    };
    const auto outcomes = evaluate(samples, dir.path, runner, 2);
    REQUIRE(outcomes.size() == samples.size());
    for (const auto& o : outcomes) {
        CHECK(o.correct);
        CHECK(o.failure.empty());
    }
    CHECK(make_report(outcomes, samples).overall == doctest::Approx(1.0));
}

TEST_CASE("evaluate: failures count as incorrect and never abort") {
    TempDir dir("fail");
    SimgenSpec spec;
    spec.dims = ImageDims{200, 200};
    spec.count = 4;
    const SimgenOutput gen = run_simgen(spec, dir.path);
    const auto samples = load_dataset(dir.path / gen.dataset_file, DatasetAdapter::native);

    const SampleRunner runner = [](const EvalSample&, const Raster&) -> RunnerResult {
        throw Error(ErrorKind::transport, "backend is down");
    };
    const auto outcomes = evaluate(samples, dir.path, runner, 2);
    REQUIRE(outcomes.size() == samples.size());
    for (const auto& o : outcomes) {
        CHECK_FALSE(o.correct);
        CHECK(o.failure == "transport");
        CHECK_FALSE(o.predicted_point.has_value());
    }
    CHECK(make_report(outcomes, samples).overall == doctest::Approx(0.0));
}

TEST_CASE("evaluate: worker count does not change the outcome list") {
    TempDir dir("par");
    SimgenSpec spec;
    spec.dims = ImageDims{300, 300};
    spec.elements = 3;
    spec.count = 12;
    spec.precision_sigma_rel = 0.03;
    spec.ambig_prob = 0.4;
    spec.seed = 7;
    const SimgenOutput gen = run_simgen(spec, dir.path);
    const auto samples = load_dataset(dir.path / gen.dataset_file, DatasetAdapter::native);
    auto ground = std::make_shared<SimGroundingBackend>(gen.scenes, "fixture");

    const SampleRunner runner = [ground](const EvalSample& s, const Raster& img) {
        BamiConfig cfg;
        cfg.iterations = 2;
        cfg.candidates = 1;
        const BamiTrace t = run_bami(*ground, nullptr, cfg, s.instruction, img, s.id);
        return RunnerResult{t.final_point, "traces/" + s.id + ".json"};
    };

    const auto a = evaluate(samples, dir.path, runner, 1);
    const auto b = evaluate(samples, dir.path, runner, 8);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].to_json_line() == b[i].to_json_line());
    }
}

TEST_CASE("evaluate: shuffled dataset yields the same per-cell report") {
    TempDir dir("perm");
    SimgenSpec spec;
    spec.dims = ImageDims{250, 250};
    spec.elements = 2;
    spec.count = 10;
    spec.precision_sigma_rel = 0.08;
    spec.seed = 31;
    const SimgenOutput gen = run_simgen(spec, dir.path);
    auto samples = load_dataset(dir.path / gen.dataset_file, DatasetAdapter::native);
    auto ground = std::make_shared<SimGroundingBackend>(gen.scenes, "fixture");

    const SampleRunner runner = [ground](const EvalSample& s, const Raster& img) {
        return RunnerResult{run_baseline(*ground, s.instruction, img, s.id), ""};
    };

    const EvalReport before = make_report(evaluate(samples, dir.path, runner, 2), samples);

    // Deterministic shuffle, then re-evaluate: seeding is keyed by sample id,
    // not position, so every cell must match.
    rng::Engine rng(17);
    for (std::size_t i = samples.size(); i > 1; --i) {
        std::swap(samples[i - 1], samples[rng.below(i)]);
    }
    const EvalReport after = make_report(evaluate(samples, dir.path, runner, 2), samples);

    REQUIRE(before.cells.size() == after.cells.size());
    for (const auto& [key, cell] : before.cells) {
        CHECK(after.cells.at(key).n == cell.n);
        CHECK(after.cells.at(key).n_correct == cell.n_correct);
    }
    CHECK(before.overall == doctest::Approx(after.overall));
}

TEST_CASE("make_report: micro average and cell accuracy arithmetic") {
    auto [samples, outcomes] = report_fixture({5, 5, 5, 5, 5, 5, 5, 5, 5, 5, 5, 5});
    EvalReport all = make_report(outcomes, samples);
    CHECK(all.overall == doctest::Approx(1.0));
    for (const auto& [key, cell] : all.cells) CHECK(cell.accuracy == doctest::Approx(1.0));

    // 10-sample fixture, 6 correct.
    std::vector<EvalSample> ten(samples.begin(), samples.begin() + 10);
    std::vector<EvalOutcome> ten_out(outcomes.begin(), outcomes.begin() + 10);
    for (std::size_t i = 0; i < ten_out.size(); ++i) ten_out[i].correct = i < 6;
    CHECK(make_report(ten_out, ten).overall == doctest::Approx(0.6));

    // Micro identity: overall == total correct / total, whatever the cells.
    auto [s2, o2] = report_fixture({1, 2, 3, 4, 5, 0, 1, 2, 3, 4, 5, 0});
    const EvalReport r2 = make_report(o2, s2);
    const int correct = std::accumulate(o2.begin(), o2.end(), 0,
                                        [](int acc, const EvalOutcome& o) {
                                            return acc + (o.correct ? 1 : 0);
                                        });
    CHECK(r2.overall == doctest::Approx(static_cast<double>(correct) / 60.0));
    CHECK(r2.total == 60);
}

TEST_CASE("report text renders observed groups and marks missing cells") {
    std::vector<EvalSample> samples;
    std::vector<EvalOutcome> outcomes;
    for (int i = 0; i < 3; ++i) {
        EvalSample s;
        s.id = "s" + std::to_string(i);
        s.image_path = "x.png";
        s.instruction = "q";
        s.gt_box = BBox{0, 0, 5, 5};
        s.data_type = "text";  // no icon samples at all
        s.group = "Office";
        samples.push_back(s);
        EvalOutcome o;
        o.sample_id = s.id;
        o.correct = i == 0;
        outcomes.push_back(o);
    }
    const EvalReport r = make_report(outcomes, samples);
    CHECK(r.cells.size() == 1);  // empty cells are omitted
    const std::string text = r.to_text();
    CHECK(text.find("Office") != std::string::npos);
    CHECK(text.find('-') != std::string::npos);  // missing icon column marker
}

TEST_CASE("report JSON round trip") {
    auto [samples, outcomes] = report_fixture({3, 1, 4, 1, 5, 0, 2, 2, 3, 3, 4, 4});
    EvalReport r = make_report(outcomes, samples);
    r.mode = "bami";
    r.seed = 9;
    r.config_hash = "fnv1a64:dead";
    const EvalReport back = report_from_json_text(r.to_json());
    CHECK(back.overall == doctest::Approx(r.overall));
    CHECK(back.total == r.total);
    CHECK(back.cells.size() == r.cells.size());
    CHECK(back.mode == "bami");
    for (const auto& [key, cell] : r.cells) {
        CHECK(back.cells.at(key).n_correct == cell.n_correct);
    }
}

TEST_CASE("compare_reports: zero deltas, headline delta, axis mismatch") {
    auto [samples, outcomes] = report_fixture({5, 4, 3, 2, 1, 0, 5, 4, 3, 2, 1, 0});
    const EvalReport r = make_report(outcomes, samples);
    const CompareTable zero = compare_reports(r, r);
    CHECK(zero.overall_delta == doctest::Approx(0.0));
    for (const auto& [key, d] : zero.cell_delta) CHECK(d == doctest::Approx(0.0));

    // Reports encoding the published baseline/boosted averages: 0.519 -> 0.578.
    EvalReport a = r;
    EvalReport b = r;
    a.overall = 0.519;
    b.overall = 0.578;
    a.mode = "baseline";
    b.mode = "bami";
    const CompareTable head = compare_reports(a, b);
    CHECK(head.overall_delta == doctest::Approx(0.059));
    const std::string text = head.to_text(a, b);
    CHECK(text.find("+0.059") != std::string::npos);

    EvalReport mismatched = r;
    mismatched.cells.erase(mismatched.cells.begin());
    CHECK_THROWS_AS(compare_reports(r, mismatched), Error);
}

TEST_CASE("outcome JSON lines include failure kinds and null points") {
    EvalOutcome o;
    o.sample_id = "s1";
    o.failure = "parse";
    const auto j = nlohmann::json::parse(o.to_json_line());
    CHECK(j.at("point").is_null());
    CHECK(j.at("failure") == "parse");
    CHECK_FALSE(j.at("correct").get<bool>());
}
