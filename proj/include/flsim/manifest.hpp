#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "flsim/config.hpp"

namespace flsim {

// Everything needed to reproduce and post-analyze a run. Written atomically
// (temp file + rename) when the run completes.
struct RunManifest {
    std::string tool_version;
    std::map<std::string, std::string> config;
    std::map<std::string, std::string> dataset_checksums;  // path -> fnv64 hex
    std::string started_utc;
    std::string finished_utc;
    std::string metrics_csv;
    std::vector<std::string> round_strategies;
    std::vector<int> round_acquisitions;
    // checkpoints[round] maps model id ("d1".."dN", "ensemble") to file path
    std::vector<std::map<std::string, std::string>> checkpoints;

    ExperimentConfig resolved_config() const;
};

std::uint64_t fnv64_file(const std::string& path);
std::string utc_timestamp();

void write_manifest(const std::string& path, const RunManifest& m);
RunManifest read_manifest(const std::string& path);

}  // namespace flsim
