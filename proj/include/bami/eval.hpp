#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bami/geometry.hpp"
#include "bami/image.hpp"

namespace bami {

struct EvalSample {
    std::string id;
    std::string image_path;  // relative paths resolve against the dataset dir
    std::string instruction;
    BBox gt_box;
    std::string data_type;   // "text" | "icon"
    std::string group;       // e.g. Development / Creative / CAD / ...
};

enum class DatasetAdapter { native, screenspot };

// Native schema: JSON array of {"id","image","instruction","bbox":[x1,y1,x2,y2],
// "data_type","group"}. The screenspot adapter additionally accepts the common
// field aliases and [x,y,w,h] boxes (README lists the alias table).
std::vector<EvalSample> load_dataset(const std::filesystem::path& path, DatasetAdapter adapter);

struct EvalOutcome {
    std::string sample_id;
    std::optional<Point> predicted_point;
    bool correct = false;
    std::string failure;     // error kind name when the sample failed
    std::string trace_path;  // relative path, "" when absent

    std::string to_json_line() const;
};

struct RunnerResult {
    Point point;
    std::string trace_path;
};

// Per-sample pipeline invocation; throws bami::Error on failure.
using SampleRunner = std::function<RunnerResult(const EvalSample&, const Raster&)>;

// Runs every sample through `runner` on a bounded worker pool. Per-sample
// failures become incorrect outcomes; only dataset-level I/O aborts. The
// outcome order always matches the sample order.
std::vector<EvalOutcome> evaluate(const std::vector<EvalSample>& samples,
                                  const std::filesystem::path& image_root,
                                  const SampleRunner& runner, int jobs);

struct CellKey {
    std::string group;
    std::string data_type;

    auto operator<=>(const CellKey&) const = default;
};

struct CellStats {
    int n = 0;
    int n_correct = 0;
    double accuracy = 0.0;
};

struct EvalReport {
    std::map<CellKey, CellStats> cells;  // only observed (group, type) pairs
    int total = 0;
    int total_correct = 0;
    double overall = 0.0;  // micro-average over samples

    // Run metadata.
    std::string config_hash;
    std::string grounding_backend;
    std::string correction_backend;
    std::string mode;
    std::uint64_t seed = 0;
    std::string timestamp;

    std::string to_json(int indent = 2) const;
    std::string to_text() const;  // one header block + one accuracy row per group/type
};

EvalReport make_report(const std::vector<EvalOutcome>& outcomes,
                       const std::vector<EvalSample>& samples);

EvalReport report_from_json_text(const std::string& text);
EvalReport load_report(const std::filesystem::path& path);

struct CompareTable {
    std::map<CellKey, double> cell_delta;
    double overall_delta = 0.0;
    std::string to_text(const EvalReport& a, const EvalReport& b) const;
};

// Per-cell and overall accuracy deltas (b - a); the cell axes must match.
CompareTable compare_reports(const EvalReport& a, const EvalReport& b);

} // namespace bami
