#include "flsim/manifest.hpp"

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace flsim {

using nlohmann::json;

ExperimentConfig RunManifest::resolved_config() const {
    std::string text;
    for (const auto& [k, v] : config) {
        if (v.empty()) continue;
        text += k + " = " + v + "\n";
    }
    return parse_config_text(text);
}

std::uint64_t fnv64_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checksum: cannot open " + path);
    std::uint64_t h = 0xCBF29CE484222325ull;
    char buf[1 << 16];
    while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
        const std::streamsize n = is.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001B3ull;
        }
        if (!is) break;
    }
    return h;
}

std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_manifest(const std::string& path, const RunManifest& m) {
    json j;
    j["tool_version"] = m.tool_version;
    j["config"] = m.config;
    j["dataset_checksums"] = m.dataset_checksums;
    j["started_utc"] = m.started_utc;
    j["finished_utc"] = m.finished_utc;
    j["metrics_csv"] = m.metrics_csv;
    j["round_strategies"] = m.round_strategies;
    j["round_acquisitions"] = m.round_acquisitions;
    j["checkpoints"] = m.checkpoints;

    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::trunc);
        if (!os) throw std::runtime_error("manifest: cannot write " + tmp);
        os << j.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, path);
}

RunManifest read_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("manifest: cannot open " + path);
    json j;
    is >> j;
    RunManifest m;
    m.tool_version = j.value("tool_version", "");
    m.config = j.value("config", std::map<std::string, std::string>{});
    m.dataset_checksums =
        j.value("dataset_checksums", std::map<std::string, std::string>{});
    m.started_utc = j.value("started_utc", "");
    m.finished_utc = j.value("finished_utc", "");
    m.metrics_csv = j.value("metrics_csv", "");
    m.round_strategies = j.value("round_strategies", std::vector<std::string>{});
    m.round_acquisitions = j.value("round_acquisitions", std::vector<int>{});
    m.checkpoints = j.value(
        "checkpoints", std::vector<std::map<std::string, std::string>>{});
    return m;
}

}  // namespace flsim
