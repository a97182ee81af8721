#include "doctest.h"
#include "testutil.hpp"

#include <unistd.h>

#include <filesystem>
#include <fstream>

#include "flsim/checkpoint.hpp"

using namespace flsim;
using namespace testutil;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("flsim_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("checkpoint round-trips bit-exactly") {
    TempDir td;
    const std::string p = (td.path / "m.flck").string();
    const Model m = init_model(default_architecture(), 42);
    write_checkpoint(p, m);
    const Model back = model_from_checkpoint(p, default_architecture());
    REQUIRE(back.params.size() == m.params.size());
    for (std::size_t b = 0; b < m.params.size(); ++b) {
        CHECK(back.params[b].shape == m.params[b].shape);
        CHECK(back.params[b].data == m.params[b].data);
    }
    // writing the reread model reproduces the same bytes
    const std::string p2 = (td.path / "m2.flck").string();
    write_checkpoint(p2, back);
    std::ifstream f1(p, std::ios::binary), f2(p2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), {});
    const std::string b2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(b1 == b2);
}

TEST_CASE("checkpoint carries batchnorm running stats") {
    TempDir td;
    const std::string p = (td.path / "bn.flck").string();
    Model m = init_model(default_architecture(true), 7);
    m.bn_running[0].mean.data[3] = 1.5f;
    m.bn_running[2].var.data[1] = 9.0f;
    write_checkpoint(p, m);
    const Model back = model_from_checkpoint(p, default_architecture(true));
    CHECK(back.bn_running[0].mean.data[3] == 1.5f);
    CHECK(back.bn_running[2].var.data[1] == 9.0f);
}

TEST_CASE("corrupted checkpoints are rejected with named errors") {
    TempDir td;
    const std::string p = (td.path / "bad.flck").string();

    SUBCASE("bad magic") {
        std::ofstream os(p, std::ios::binary);
        os << "NOPE1234";
        os.close();
        CHECK_THROWS_WITH_AS(read_checkpoint_blocks(p),
                             doctest::Contains("bad magic"), std::runtime_error);
    }
    SUBCASE("truncated payload") {
        const Model m = init_model(tiny_specs(), 1, tiny_input());
        write_checkpoint(p, m);
        const auto full = fs::file_size(p);
        fs::resize_file(p, full - 64);
        CHECK_THROWS_WITH_AS(read_checkpoint_blocks(p),
                             doctest::Contains("truncated"), std::runtime_error);
    }
    SUBCASE("wrong architecture") {
        const Model m = init_model(tiny_specs(), 1, tiny_input());
        write_checkpoint(p, m);
        CHECK_THROWS(model_from_checkpoint(p, default_architecture()));
    }
}
