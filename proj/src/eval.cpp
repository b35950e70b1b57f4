#include "bami/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "bami/error.hpp"

namespace bami {

namespace {

using nlohmann::json;

std::string pick_string(const json& j, std::initializer_list<const char*> keys) {
    for (const char* key : keys) {
        if (j.contains(key) && j.at(key).is_string()) return j.at(key).get<std::string>();
    }
    return {};
}

EvalSample sample_from_json(const json& j, std::size_t row, DatasetAdapter adapter) {
    EvalSample s;
    try {
        if (adapter == DatasetAdapter::native) {
            s.id = j.at("id").get<std::string>();
            s.image_path = j.at("image").get<std::string>();
            s.instruction = j.at("instruction").get<std::string>();
            const auto& b = j.at("bbox");
            s.gt_box = BBox{b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(),
                            b.at(3).get<int>()};
            s.data_type = j.at("data_type").get<std::string>();
            s.group = j.at("group").get<std::string>();
        } else {
            s.id = pick_string(j, {"id", "img_id", "sample_id"});
            if (s.id.empty()) s.id = "row-" + std::to_string(row);
            s.image_path = pick_string(j, {"image", "img_filename", "image_path", "img_path"});
            s.instruction = pick_string(j, {"instruction", "prompt", "query"});
            s.data_type = pick_string(j, {"data_type", "ui_type", "type"});
            s.group = pick_string(j, {"group", "application", "domain", "platform"});
            const auto& b = j.at("bbox");
            const int x = b.at(0).get<int>();
            const int y = b.at(1).get<int>();
            const int w = b.at(2).get<int>();
            const int h = b.at(3).get<int>();
            // ScreenSpot convention: [x, y, w, h] -> corners (x, y, x+w, y+h).
            s.gt_box = BBox{x, y, x + w, y + h};
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::dataset,
                    "dataset row " + std::to_string(row) + ": " + e.what());
    }
    if (s.image_path.empty() || s.instruction.empty()) {
        throw Error(ErrorKind::dataset,
                    "dataset row " + std::to_string(row) + ": missing image or instruction");
    }
    if (!s.gt_box.valid()) {
        throw Error(ErrorKind::dataset,
                    "dataset row " + std::to_string(row) + ": negative or inverted gt box");
    }
    if (s.data_type != "text" && s.data_type != "icon") {
        throw Error(ErrorKind::dataset,
                    "dataset row " + std::to_string(row) + ": data_type must be text or icon");
    }
    return s;
}

} // namespace

std::vector<EvalSample> load_dataset(const std::filesystem::path& path, DatasetAdapter adapter) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open dataset: " + path.string());
    json root;
    try {
        root = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::dataset, std::string("dataset is not valid JSON: ") + e.what());
    }
    if (!root.is_array()) throw Error(ErrorKind::dataset, "dataset must be a JSON array");

    std::vector<EvalSample> samples;
    samples.reserve(root.size());
    std::set<std::string> seen_ids;
    for (std::size_t row = 0; row < root.size(); ++row) {
        EvalSample s = sample_from_json(root[row], row, adapter);
        if (!seen_ids.insert(s.id).second) {
            throw Error(ErrorKind::dataset,
                        "dataset row " + std::to_string(row) + ": duplicate id " + s.id);
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

std::string EvalOutcome::to_json_line() const {
    nlohmann::ordered_json j;
    j["sample_id"] = sample_id;
    if (predicted_point) {
        j["point"] = {predicted_point->x, predicted_point->y};
    } else {
        j["point"] = nullptr;
    }
    j["correct"] = correct;
    j["failure"] = failure;
    j["trace_path"] = trace_path;
    return j.dump();
}

std::vector<EvalOutcome> evaluate(const std::vector<EvalSample>& samples,
                                  const std::filesystem::path& image_root,
                                  const SampleRunner& runner, int jobs) {
    std::vector<EvalOutcome> outcomes(samples.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= samples.size()) return;
            const EvalSample& s = samples[i];
            EvalOutcome& out = outcomes[i];
            out.sample_id = s.id;
            try {
                std::filesystem::path img_path(s.image_path);
                if (img_path.is_relative()) img_path = image_root / img_path;
                const Raster img = load_image(img_path);
                if (s.gt_box.x2 >= img.dims.width || s.gt_box.y2 >= img.dims.height) {
                    throw Error(ErrorKind::dataset, "gt box outside image: " + s.id);
                }
                const RunnerResult res = runner(s, img);
                out.predicted_point = res.point;
                out.trace_path = res.trace_path;
                out.correct = contains(s.gt_box, res.point);
            } catch (const Error& e) {
                out.failure = error_kind_name(e.kind());
                out.correct = false;
            } catch (const std::exception&) {
                out.failure = "internal";
                out.correct = false;
            }
        }
    };

    const int n_workers = std::max(1, std::min<int>(jobs, static_cast<int>(samples.size())));
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_workers);
        for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return outcomes;
}

EvalReport make_report(const std::vector<EvalOutcome>& outcomes,
                       const std::vector<EvalSample>& samples) {
    if (outcomes.size() != samples.size()) {
        throw Error(ErrorKind::internal, "outcomes are not aligned with samples");
    }
    EvalReport report;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        CellStats& cell = report.cells[CellKey{samples[i].group, samples[i].data_type}];
        cell.n += 1;
        report.total += 1;
        if (outcomes[i].correct) {
            cell.n_correct += 1;
            report.total_correct += 1;
        }
    }
    for (auto& [key, cell] : report.cells) {
        cell.accuracy = cell.n == 0 ? 0.0 : static_cast<double>(cell.n_correct) / cell.n;
    }
    report.overall =
        report.total == 0 ? 0.0 : static_cast<double>(report.total_correct) / report.total;
    return report;
}

std::string EvalReport::to_json(int indent) const {
    nlohmann::ordered_json cells_json = nlohmann::ordered_json::array();
    for (const auto& [key, cell] : cells) {
        cells_json.push_back({{"group", key.group},
                              {"data_type", key.data_type},
                              {"n", cell.n},
                              {"n_correct", cell.n_correct},
                              {"accuracy", cell.accuracy}});
    }
    nlohmann::ordered_json j{
        {"cells", std::move(cells_json)},
        {"total", total},
        {"total_correct", total_correct},
        {"overall", overall},
        {"metadata",
         {{"config_hash", config_hash},
          {"grounding_backend", grounding_backend},
          {"correction_backend", correction_backend},
          {"mode", mode},
          {"seed", seed},
          {"average", "micro"},
          {"timestamp", timestamp}}}};
    return j.dump(indent);
}

EvalReport report_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::dataset, std::string("report is not valid JSON: ") + e.what());
    }
    EvalReport report;
    try {
        for (const json& c : j.at("cells")) {
            CellStats cell;
            cell.n = c.at("n").get<int>();
            cell.n_correct = c.at("n_correct").get<int>();
            cell.accuracy = c.at("accuracy").get<double>();
            report.cells[CellKey{c.at("group").get<std::string>(),
                                 c.at("data_type").get<std::string>()}] = cell;
        }
        report.total = j.at("total").get<int>();
        report.total_correct = j.at("total_correct").get<int>();
        report.overall = j.at("overall").get<double>();
        if (j.contains("metadata")) {
            const json& m = j.at("metadata");
            report.config_hash = m.value("config_hash", "");
            report.grounding_backend = m.value("grounding_backend", "");
            report.correction_backend = m.value("correction_backend", "");
            report.mode = m.value("mode", "");
            report.seed = m.value("seed", std::uint64_t{0});
            report.timestamp = m.value("timestamp", "");
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::dataset, std::string("bad report schema: ") + e.what());
    }
    return report;
}

EvalReport load_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open report: " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return report_from_json_text(text);
}

namespace {

std::vector<std::string> report_groups(const EvalReport& r) {
    std::vector<std::string> groups;
    for (const auto& [key, cell] : r.cells) {
        if (std::find(groups.begin(), groups.end(), key.group) == groups.end()) {
            groups.push_back(key.group);
        }
    }
    return groups;
}

std::string pct(double v) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%5.1f", 100.0 * v);
    return buf;
}

// One "Text Icon" column pair per group, "-" for cells with no samples.
std::string accuracy_row(const EvalReport& r, const std::vector<std::string>& groups,
                         const std::string& label) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%-12s", label.c_str());
    std::string row = buf;
    for (const std::string& g : groups) {
        for (const char* type : {"text", "icon"}) {
            const auto it = r.cells.find(CellKey{g, type});
            row += "  ";
            row += it == r.cells.end() ? std::string("    -") : pct(it->second.accuracy);
        }
    }
    row += "  ";
    row += pct(r.overall);
    return row;
}

std::string header_rows(const std::vector<std::string>& groups) {
    std::string top(12, ' ');
    std::string sub(12, ' ');
    for (const std::string& g : groups) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "  %-12.12s", g.c_str());
        top += buf;
        sub += "   Text   Icon";
    }
    top += "   Avg.";
    sub += "       ";
    return top + "\n" + sub + "\n";
}

} // namespace

std::string EvalReport::to_text() const {
    const auto groups = report_groups(*this);
    std::string out = header_rows(groups);
    out += accuracy_row(*this, groups, mode.empty() ? "run" : mode);
    out += "\n";
    char buf[96];
    std::snprintf(buf, sizeof(buf), "samples: %d  correct: %d  overall: %.4f (micro average)\n",
                  total, total_correct, overall);
    out += buf;
    return out;
}

CompareTable compare_reports(const EvalReport& a, const EvalReport& b) {
    const auto keys_of = [](const EvalReport& r) {
        std::vector<CellKey> keys;
        for (const auto& [key, cell] : r.cells) keys.push_back(key);
        return keys;
    };
    if (keys_of(a) != keys_of(b)) {
        throw Error(ErrorKind::config, "reports cover different (group, type) axes");
    }
    CompareTable table;
    for (const auto& [key, cell] : a.cells) {
        table.cell_delta[key] = b.cells.at(key).accuracy - cell.accuracy;
    }
    table.overall_delta = b.overall - a.overall;
    return table;
}

std::string CompareTable::to_text(const EvalReport& a, const EvalReport& b) const {
    const auto groups = report_groups(a);
    std::string out = header_rows(groups);
    out += accuracy_row(a, groups, a.mode.empty() ? "a" : a.mode) + "\n";
    out += accuracy_row(b, groups, b.mode.empty() ? "b" : b.mode) + "\n";

    std::string row = "delta       ";
    for (const std::string& g : groups) {
        for (const char* type : {"text", "icon"}) {
            const auto it = cell_delta.find(CellKey{g, type});
            char buf[16];
            if (it == cell_delta.end()) {
                std::snprintf(buf, sizeof(buf), "      -");
            } else {
                std::snprintf(buf, sizeof(buf), " %+6.1f", 100.0 * it->second);
            }
            row += buf;
        }
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "  %+.3f", overall_delta);
    row += buf;
    out += row + "\n";
    return out;
}

} // namespace bami
