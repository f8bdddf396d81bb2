#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace deffa {

inline constexpr const char* kToolVersion = "0.1.0";

struct RunManifest {
    std::string command;
    nlohmann::json config_snapshot = nlohmann::json::object();
    uint64_t seed = 0;
    std::map<std::string, std::string> input_digests;  ///< path -> sha256 hex
    std::vector<std::string> output_paths;
    std::string tool_version = kToolVersion;
    double wall_time = 0.0;
};

void to_json(nlohmann::json& j, const RunManifest& m);
void from_json(const nlohmann::json& j, RunManifest& m);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Digests a file, or every regular file below a directory (keyed by path).
void add_input_digests(RunManifest& manifest, const std::filesystem::path& path);

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);
RunManifest read_manifest(const std::filesystem::path& path);

}  // namespace deffa
