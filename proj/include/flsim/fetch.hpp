#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace flsim {

struct RemoteFile {
    std::string name;          // local file name (gzip)
    std::size_t gz_size;       // published compressed byte size
    std::size_t raw_size;      // published decompressed byte size
};

const std::vector<RemoteFile>& dataset_files();

// Downloads any missing canonical files into data_dir and verifies byte
// sizes; files already present (plain or .gz) with the right size are kept.
// Returns a human-readable status line per file.
std::vector<std::string> fetch_dataset(const std::string& data_dir);

}  // namespace flsim
