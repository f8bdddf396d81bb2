#include "deffa/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "deffa/errors.hpp"

namespace fs = std::filesystem;

namespace deffa {

void to_json(nlohmann::json& j, const RunManifest& m)
{
    j = nlohmann::json{{"command", m.command},           {"config_snapshot", m.config_snapshot},
                       {"seed", m.seed},                 {"input_digests", m.input_digests},
                       {"output_paths", m.output_paths}, {"tool_version", m.tool_version},
                       {"wall_time", m.wall_time}};
}

void from_json(const nlohmann::json& j, RunManifest& m)
{
    j.at("command").get_to(m.command);
    m.config_snapshot = j.at("config_snapshot");
    j.at("seed").get_to(m.seed);
    j.at("input_digests").get_to(m.input_digests);
    j.at("output_paths").get_to(m.output_paths);
    j.at("tool_version").get_to(m.tool_version);
    j.at("wall_time").get_to(m.wall_time);
}

std::string sha256_hex(const std::string& bytes)
{
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 failed");
    std::string out;
    for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", digest[i]);
    return out;
}

std::string sha256_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return sha256_hex(bytes);
}

void add_input_digests(RunManifest& manifest, const fs::path& path)
{
    if (fs::is_regular_file(path)) {
        manifest.input_digests[path.string()] = sha256_file(path);
        return;
    }
    if (!fs::is_directory(path)) throw IoError("input " + path.string() + " does not exist");
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(path))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) manifest.input_digests[f.string()] = sha256_file(f);
}

void write_manifest(const fs::path& path, const RunManifest& manifest)
{
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << nlohmann::json(manifest).dump(2) << '\n';
}

RunManifest read_manifest(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    return nlohmann::json::parse(in).get<RunManifest>();
}

}  // namespace deffa
