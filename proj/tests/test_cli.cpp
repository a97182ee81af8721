#include "doctest.h"

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("flsim_cli_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

int run_cmd(const std::string& args) {
    const std::string cmd = std::string(FLSIM_BIN) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

void put_be32(std::ofstream& os, std::uint32_t x) {
    const unsigned char b[4] = {static_cast<unsigned char>(x >> 24),
                                static_cast<unsigned char>(x >> 16),
                                static_cast<unsigned char>(x >> 8),
                                static_cast<unsigned char>(x)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

// Minimal balanced IDX pair: n 28x28 images cycling over the 10 classes.
void write_micro_dataset(const fs::path& dir, const std::string& img_name,
                         const std::string& lab_name, int n) {
    std::ofstream img(dir / img_name, std::ios::binary);
    put_be32(img, 0x803);
    put_be32(img, static_cast<std::uint32_t>(n));
    put_be32(img, 28);
    put_be32(img, 28);
    for (int i = 0; i < n * 28 * 28; ++i)
        img.put(static_cast<char>((i * 37 + i / 784) % 256));
    std::ofstream lab(dir / lab_name, std::ios::binary);
    put_be32(lab, 0x801);
    put_be32(lab, static_cast<std::uint32_t>(n));
    for (int i = 0; i < n; ++i) lab.put(static_cast<char>(i % 10));
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("cli: invalid configs exit with code 1") {
    TempDir td;
    const fs::path cfg = td.path / "bad.cfg";
    std::ofstream(cfg) << "frequency=3\nacquisitions=10\n";
    CHECK(run_cmd("run " + cfg.string()) == 1);

    const fs::path cfg2 = td.path / "unknown.cfg";
    std::ofstream(cfg2) << "epohcs=45\n";
    CHECK(run_cmd("run " + cfg2.string()) == 1);
}

TEST_CASE("cli: missing dataset surfaces as a runtime error") {
    TempDir td;
    const fs::path cfg = td.path / "ok.cfg";
    std::ofstream(cfg) << "epochs=1\n";
    CHECK(run_cmd("--data-dir " + (td.path / "nowhere").string() + " run " +
                  cfg.string()) == 2);
}

TEST_CASE("cli: micro run produces deterministic artifacts and analyze works") {
    TempDir td;
    const fs::path data = td.path / "data";
    fs::create_directories(data);
    write_micro_dataset(data, "train-images-idx3-ubyte", "train-labels-idx1-ubyte", 300);
    write_micro_dataset(data, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", 100);

    const fs::path cfg = td.path / "micro.cfg";
    std::ofstream(cfg) << "epochs=1\nfrequency=1\nacquisitions=1\n"
                       << "acquisition_size=10\nbatch_size=5\ninitial_train_size=10\n"
                       << "mc_passes=2\n";

    const fs::path out1 = td.path / "run1";
    const fs::path out2 = td.path / "run2";
    const std::string base = "--data-dir " + data.string() + " run " + cfg.string();
    REQUIRE(run_cmd(base + " --out " + out1.string()) == 0);
    REQUIRE(run_cmd(base + " --out " + out2.string()) == 0);

    CHECK(fs::exists(out1 / "metrics.csv"));
    CHECK(fs::exists(out1 / "manifest.json"));
    CHECK(fs::exists(out1 / "ckpt_r0_ensemble.flck"));
    CHECK(fs::exists(out1 / "ckpt_r1_d4.flck"));
    CHECK(slurp(out1 / "metrics.csv") == slurp(out2 / "metrics.csv"));

    // different thread bound, same bytes
    const fs::path out3 = td.path / "run3";
    REQUIRE(run_cmd("--threads 3 " + base + " --out " + out3.string()) == 0);
    CHECK(slurp(out1 / "metrics.csv") == slurp(out3 / "metrics.csv"));

    REQUIRE(run_cmd("--data-dir " + data.string() + " analyze " +
                    (out1 / "manifest.json").string()) == 0);
    CHECK(fs::exists(out1 / "analysis" / "divergence.csv"));
    CHECK(fs::exists(out1 / "analysis" / "histograms.csv"));
    CHECK(fs::exists(out1 / "analysis" / "heatmap_class1_ensemble.csv"));
}

TEST_CASE("cli: sequential baseline writes a single record") {
    TempDir td;
    const fs::path data = td.path / "data";
    fs::create_directories(data);
    write_micro_dataset(data, "train-images-idx3-ubyte", "train-labels-idx1-ubyte", 300);
    write_micro_dataset(data, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", 100);

    const fs::path cfg = td.path / "seq.cfg";
    std::ofstream(cfg) << "regime=sequential-baseline\nepochs=1\nacquisitions=2\n"
                       << "frequency=2\nacquisition_size=10\nbatch_size=5\n";
    const fs::path out = td.path / "seq_run";
    REQUIRE(run_cmd("--data-dir " + data.string() + " run " + cfg.string() + " --out " +
                    out.string()) == 0);
    const std::string csv = slurp(out / "metrics.csv");
    CHECK(csv.find("sequential") != std::string::npos);
    // header + one record
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
}
