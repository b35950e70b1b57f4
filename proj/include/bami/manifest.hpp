#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace bami {

// Reproducibility envelope written into every run directory before the first
// backend call and finalized when the run ends.
struct RunManifest {
    std::string tool_version;
    std::string command;          // subcommand name
    std::string config_json;      // flattened config snapshot
    std::uint64_t seed = 0;
    std::string dataset_path;     // "" for single-image commands
    std::string dataset_hash;     // fnv1a-64 of the dataset bytes
    std::string grounding_backend;
    std::string correction_backend;
    std::string started_at;       // ISO-8601 UTC
    std::string finished_at;      // "" until the run completes

    void write(const std::filesystem::path& path) const;
};

std::string iso8601_utc_now();
std::string fnv1a_file_hex(const std::filesystem::path& path);
std::string tool_version();

} // namespace bami
