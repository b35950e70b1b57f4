#include "bami/manifest.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>

#include <nlohmann/json.hpp>

#include "bami/error.hpp"
#include "bami/rng.hpp"

namespace bami {

std::string tool_version() { return "0.1.0"; }

std::string iso8601_utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string fnv1a_file_hex(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot hash file: " + path.string());
    std::uint64_t h = 0xCBF29CE484222325ULL;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001B3ULL;
        }
    }
    char hex[32];
    std::snprintf(hex, sizeof(hex), "fnv1a64:%016llx", static_cast<unsigned long long>(h));
    return hex;
}

void RunManifest::write(const std::filesystem::path& path) const {
    nlohmann::ordered_json j{{"tool_version", tool_version},
                             {"command", command},
                             {"config", nlohmann::json::parse(config_json.empty() ? "{}" : config_json)},
                             {"seed", seed},
                             {"dataset_path", dataset_path},
                             {"dataset_hash", dataset_hash},
                             {"grounding_backend", grounding_backend},
                             {"correction_backend", correction_backend},
                             {"started_at", started_at},
                             {"finished_at", finished_at}};
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot write manifest: " + path.string());
    out << j.dump(2) << "\n";
}

} // namespace bami
