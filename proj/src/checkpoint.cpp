#include "flsim/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace flsim {

namespace {

static_assert(sizeof(float) == 4);

void put_u16(std::ostream& os, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xFF),
                          static_cast<unsigned char>(v >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint16_t get_u16(std::istream& is, const std::string& path) {
    unsigned char b[2];
    if (!is.read(reinterpret_cast<char*>(b), 2))
        throw std::runtime_error("checkpoint: truncated file " + path);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error("checkpoint: truncated file " + path);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

void put_block(std::ostream& os, const Tensor& t) {
    os.put(static_cast<char>(t.shape.size()));
    for (int d : t.shape) put_u32(os, static_cast<std::uint32_t>(d));
    // f32 little-endian; direct write on little-endian hosts
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * 4));
}

}  // namespace

void write_checkpoint(const std::string& path, const Model& model) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open for write: " + path);
    os.write("FLCK", 4);
    put_u16(os, kCheckpointVersion);
    const std::size_t n_blocks = model.params.size() + 2 * model.bn_running.size();
    put_u16(os, static_cast<std::uint16_t>(n_blocks));
    for (const Tensor& t : model.params) put_block(os, t);
    for (const BnRunning& r : model.bn_running) {
        put_block(os, r.mean);
        put_block(os, r.var);
    }
    if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

std::vector<Tensor> read_checkpoint_blocks(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "FLCK", 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    const std::uint16_t version = get_u16(is, path);
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version " +
                                 std::to_string(version) + " in " + path);
    const std::uint16_t n_blocks = get_u16(is, path);
    std::vector<Tensor> blocks;
    blocks.reserve(n_blocks);
    for (int b = 0; b < n_blocks; ++b) {
        const int rank = is.get();
        if (rank < 0) throw std::runtime_error("checkpoint: truncated file " + path);
        std::vector<int> shape(static_cast<std::size_t>(rank));
        for (int i = 0; i < rank; ++i)
            shape[static_cast<std::size_t>(i)] = static_cast<int>(get_u32(is, path));
        Tensor t(shape);
        if (!is.read(reinterpret_cast<char*>(t.data.data()),
                     static_cast<std::streamsize>(t.data.size() * 4)))
            throw std::runtime_error("checkpoint: truncated file " + path);
        blocks.push_back(std::move(t));
    }
    return blocks;
}

Model model_from_checkpoint(const std::string& path,
                            const std::vector<LayerSpec>& specs) {
    std::vector<Tensor> blocks = read_checkpoint_blocks(path);
    Model m = init_model(specs, 0);
    const std::size_t expected = m.params.size() + 2 * m.bn_running.size();
    if (blocks.size() != expected)
        throw std::runtime_error("checkpoint: expected " + std::to_string(expected) +
                                 " blocks, found " + std::to_string(blocks.size()) +
                                 " in " + path);
    for (std::size_t i = 0; i < m.params.size(); ++i) {
        if (!m.params[i].same_shape(blocks[i]))
            throw std::runtime_error("checkpoint: block " +
                                     m.layout.block_names[i] + " shape mismatch in " +
                                     path);
        m.params[i] = std::move(blocks[i]);
    }
    for (std::size_t s = 0; s < m.bn_running.size(); ++s) {
        m.bn_running[s].mean = std::move(blocks[m.params.size() + 2 * s]);
        m.bn_running[s].var = std::move(blocks[m.params.size() + 2 * s + 1]);
    }
    return m;
}

}  // namespace flsim
