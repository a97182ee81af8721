#include "flsim/fetch.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "httplib.h"

namespace flsim {

namespace fs = std::filesystem;

const std::vector<RemoteFile>& dataset_files() {
    static const std::vector<RemoteFile> files = {
        {"train-images-idx3-ubyte", 26421880, 47040016},
        {"train-labels-idx1-ubyte", 29515, 60008},
        {"t10k-images-idx3-ubyte", 4422102, 7840016},
        {"t10k-labels-idx1-ubyte", 5148, 10008},
    };
    return files;
}

namespace {

constexpr const char* kHost = "fashion-mnist.s3-website.eu-central-1.amazonaws.com";

bool present_with_size(const fs::path& p, std::size_t expect) {
    return fs::exists(p) && fs::file_size(p) == expect;
}

}  // namespace

std::vector<std::string> fetch_dataset(const std::string& data_dir) {
    fs::create_directories(data_dir);
    std::vector<std::string> log;

    for (const RemoteFile& f : dataset_files()) {
        const fs::path plain = fs::path(data_dir) / f.name;
        const fs::path gz = fs::path(data_dir) / (f.name + ".gz");

        if (present_with_size(plain, f.raw_size)) {
            log.push_back(f.name + ": present (" + std::to_string(f.raw_size) + " bytes)");
            continue;
        }
        if (present_with_size(gz, f.gz_size)) {
            log.push_back(f.name + ".gz: present (" + std::to_string(f.gz_size) + " bytes)");
            continue;
        }

        httplib::Client cli(kHost);
        cli.set_connection_timeout(20);
        cli.set_read_timeout(120);
        const std::string url = "/" + f.name + ".gz";
        auto res = cli.Get(url);
        if (!res || res->status != 200)
            throw std::runtime_error("fetch: download failed for " + f.name +
                                     ".gz from " + kHost +
                                     (res ? " (status " + std::to_string(res->status) + ")"
                                          : " (no connection)"));
        if (res->body.size() != f.gz_size)
            throw std::runtime_error("fetch: size mismatch for " + f.name + ".gz: got " +
                                     std::to_string(res->body.size()) + ", expected " +
                                     std::to_string(f.gz_size));
        std::ofstream os(gz, std::ios::binary | std::ios::trunc);
        os.write(res->body.data(), static_cast<std::streamsize>(res->body.size()));
        if (!os) throw std::runtime_error("fetch: cannot write " + gz.string());
        log.push_back(f.name + ".gz: downloaded (" + std::to_string(f.gz_size) + " bytes)");
    }
    return log;
}

}  // namespace flsim
