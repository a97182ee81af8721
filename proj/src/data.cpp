#include "flsim/data.hpp"

#include <zlib.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "flsim/rng.hpp"

namespace flsim {

namespace {

std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("data: cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                     std::istreambuf_iterator<char>());
    return bytes;
}

std::vector<unsigned char> gunzip(const std::vector<unsigned char>& in,
                                  const std::string& path) {
    z_stream zs{};
    if (inflateInit2(&zs, 15 + 16) != Z_OK)
        throw std::runtime_error("data: zlib init failed for " + path);
    std::vector<unsigned char> out;
    out.reserve(in.size() * 4);
    unsigned char buf[1 << 16];
    zs.next_in = const_cast<Bytef*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = buf;
        zs.avail_out = sizeof(buf);
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw std::runtime_error("data: corrupt gzip stream in " + path);
        }
        out.insert(out.end(), buf, buf + (sizeof(buf) - zs.avail_out));
    }
    inflateEnd(&zs);
    return out;
}

std::vector<unsigned char> read_maybe_gz(const std::string& path) {
    std::vector<unsigned char> bytes = read_file_bytes(path);
    if (bytes.size() >= 2 && bytes[0] == 0x1F && bytes[1] == 0x8B)
        return gunzip(bytes, path);
    return bytes;
}

std::uint32_t be32(const unsigned char* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) |
           (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | p[3];
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    const std::vector<unsigned char> img = read_maybe_gz(images_path);
    const std::vector<unsigned char> lab = read_maybe_gz(labels_path);

    if (img.size() < 16 || be32(img.data()) != 0x00000803u)
        throw std::runtime_error("data: bad image magic in " + images_path);
    if (lab.size() < 8 || be32(lab.data()) != 0x00000801u)
        throw std::runtime_error("data: bad label magic in " + labels_path);

    const std::uint32_t n_img = be32(img.data() + 4);
    const std::uint32_t rows = be32(img.data() + 8);
    const std::uint32_t cols = be32(img.data() + 12);
    const std::uint32_t n_lab = be32(lab.data() + 4);

    if (n_img != n_lab)
        throw std::runtime_error("data: count mismatch: " + images_path + " has " +
                                 std::to_string(n_img) + " images but " +
                                 labels_path + " has " + std::to_string(n_lab) +
                                 " labels");
    const std::size_t need_img = 16 + static_cast<std::size_t>(n_img) * rows * cols;
    if (img.size() < need_img)
        throw std::runtime_error("data: truncated image payload in " + images_path);
    if (lab.size() < 8 + n_lab)
        throw std::runtime_error("data: truncated label payload in " + labels_path);

    Dataset d;
    d.images = Tensor({static_cast<int>(n_img), static_cast<int>(rows),
                       static_cast<int>(cols), 1});
    const unsigned char* px = img.data() + 16;
    const float inv = 1.0f / 255.0f;
    for (std::size_t i = 0; i < static_cast<std::size_t>(n_img) * rows * cols; ++i)
        d.images.data[i] = static_cast<float>(px[i]) * inv;
    d.labels.assign(lab.begin() + 8, lab.begin() + 8 + n_lab);
    return d;
}

Dataset subset(const Dataset& d, const std::vector<int>& indices) {
    Dataset out;
    const int isz = d.image_size();
    std::vector<int> shape = d.images.shape;
    shape[0] = static_cast<int>(indices.size());
    out.images = Tensor(shape);
    out.labels.reserve(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const int src = indices[i];
        if (src < 0 || src >= d.size())
            throw std::out_of_range("data: subset index out of range");
        std::memcpy(out.images.ptr() + i * static_cast<std::size_t>(isz),
                    d.images.ptr() + static_cast<std::size_t>(src) * isz,
                    static_cast<std::size_t>(isz) * sizeof(float));
        out.labels.push_back(d.labels[static_cast<std::size_t>(src)]);
    }
    return out;
}

Dataset concat(const Dataset& a, const Dataset& b) {
    if (a.size() == 0) return b;
    if (b.size() == 0) return a;
    if (a.image_size() != b.image_size())
        throw std::invalid_argument("data: concat of mismatched image sizes");
    Dataset out;
    std::vector<int> shape = a.images.shape;
    shape[0] = a.size() + b.size();
    out.images = Tensor(shape);
    std::memcpy(out.images.ptr(), a.images.ptr(),
                a.images.numel() * sizeof(float));
    std::memcpy(out.images.ptr() + a.images.numel(), b.images.ptr(),
                b.images.numel() * sizeof(float));
    out.labels = a.labels;
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    return out;
}

std::vector<int> label_histogram(const Dataset& d, int classes) {
    std::vector<int> h(static_cast<std::size_t>(classes), 0);
    for (int y : d.labels) {
        if (y < 0 || y >= classes)
            throw std::out_of_range("data: label outside class range");
        ++h[static_cast<std::size_t>(y)];
    }
    return h;
}

std::vector<std::set<int>> default_class_assignment() {
    return {{0, 1}, {2, 3}, {4, 5, 6}, {7, 8, 9}};
}

std::vector<Shard> partition_by_class(const Dataset& train,
                                      const std::vector<std::set<int>>& assignment,
                                      int classes) {
    std::vector<int> owner(static_cast<std::size_t>(classes), -1);
    for (std::size_t dev = 0; dev < assignment.size(); ++dev) {
        for (int c : assignment[dev]) {
            if (c < 0 || c >= classes)
                throw std::invalid_argument("partition: class out of range");
            if (owner[static_cast<std::size_t>(c)] != -1)
                throw std::invalid_argument("partition: class " + std::to_string(c) +
                                            " assigned to more than one device");
            owner[static_cast<std::size_t>(c)] = static_cast<int>(dev);
        }
    }
    for (int c = 0; c < classes; ++c)
        if (owner[static_cast<std::size_t>(c)] == -1)
            throw std::invalid_argument("partition: class " + std::to_string(c) +
                                        " not assigned to any device");

    std::vector<std::vector<int>> idx(assignment.size());
    for (int i = 0; i < train.size(); ++i)
        idx[static_cast<std::size_t>(owner[static_cast<std::size_t>(
                train.labels[static_cast<std::size_t>(i)])])]
            .push_back(i);

    std::vector<Shard> shards;
    shards.reserve(assignment.size());
    for (std::size_t dev = 0; dev < assignment.size(); ++dev) {
        Shard s;
        s.device_id = static_cast<int>(dev);
        s.allowed_classes = assignment[dev];
        s.data = subset(train, idx[dev]);
        shards.push_back(std::move(s));
    }
    return shards;
}

Dataset sample_from_shard(const Shard& shard, int n, std::uint64_t seed) {
    if (n > shard.data.size())
        throw std::invalid_argument("sample: requested " + std::to_string(n) +
                                    " items from shard of " +
                                    std::to_string(shard.data.size()));
    rng::Stream rs(seed);
    return subset(shard.data, rng::sample_without_replacement(shard.data.size(), n, rs));
}

Dataset sample_uniform(const Dataset& d, int n, std::uint64_t seed) {
    if (n > d.size())
        throw std::invalid_argument("sample: requested more items than available");
    rng::Stream rs(seed);
    return subset(d, rng::sample_without_replacement(d.size(), n, rs));
}

std::vector<int> stratified_indices(const Dataset& d, int per_class,
                                    std::uint64_t seed, int classes) {
    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(classes));
    for (int i = 0; i < d.size(); ++i)
        by_class[static_cast<std::size_t>(d.labels[static_cast<std::size_t>(i)])]
            .push_back(i);
    std::vector<int> chosen;
    for (int c = 0; c < classes; ++c) {
        const auto& pool = by_class[static_cast<std::size_t>(c)];
        if (static_cast<int>(pool.size()) < per_class)
            throw std::invalid_argument("sample: class " + std::to_string(c) +
                                        " has only " + std::to_string(pool.size()) +
                                        " items, need " + std::to_string(per_class));
        rng::Stream rs(rng::derive(seed, c));
        for (int j : rng::sample_without_replacement(
                 static_cast<int>(pool.size()), per_class, rs))
            chosen.push_back(pool[static_cast<std::size_t>(j)]);
    }
    return chosen;
}

Dataset sample_stratified(const Dataset& d, int per_class, std::uint64_t seed,
                          int classes) {
    return subset(d, stratified_indices(d, per_class, seed, classes));
}

std::vector<Dataset> deal_parts(const Dataset& d, int parts, std::uint64_t seed) {
    std::vector<int> idx(static_cast<std::size_t>(d.size()));
    for (int i = 0; i < d.size(); ++i) idx[static_cast<std::size_t>(i)] = i;
    rng::Stream rs(seed);
    rng::shuffle(idx, rs);
    std::vector<std::vector<int>> part_idx(static_cast<std::size_t>(parts));
    for (std::size_t i = 0; i < idx.size(); ++i)
        part_idx[i % static_cast<std::size_t>(parts)].push_back(idx[i]);
    std::vector<Dataset> out;
    out.reserve(static_cast<std::size_t>(parts));
    for (auto& pi : part_idx) out.push_back(subset(d, pi));
    return out;
}

Pool build_pool(const Dataset& source, int pool_size, std::uint64_t seed,
                int device_id) {
    if (pool_size > source.size())
        throw std::invalid_argument("pool: size " + std::to_string(pool_size) +
                                    " exceeds source of " +
                                    std::to_string(source.size()));
    Pool p;
    p.device_id = device_id;
    p.data = sample_uniform(source, pool_size, seed);
    p.acquired.assign(static_cast<std::size_t>(pool_size), 0);
    return p;
}

ReplayBuffer build_replay(const Dataset& train, int per_class,
                          std::uint64_t seed) {
    ReplayBuffer rb;
    if (per_class == 0) {
        std::vector<int> shape = train.images.shape;
        shape[0] = 0;
        rb.data.images = Tensor(shape);
        return rb;
    }
    rb.data = sample_stratified(train, per_class, seed);
    return rb;
}

DataPaths locate_dataset(const std::string& data_dir) {
    namespace fs = std::filesystem;
    auto pick = [&](const std::string& stem) {
        const fs::path plain = fs::path(data_dir) / stem;
        const fs::path gz = fs::path(data_dir) / (stem + ".gz");
        if (fs::exists(plain)) return plain.string();
        if (fs::exists(gz)) return gz.string();
        throw std::runtime_error("data: missing " + plain.string() +
                                 " (run fetch-data or set the data directory)");
    };
    DataPaths p;
    p.train_images = pick("train-images-idx3-ubyte");
    p.train_labels = pick("train-labels-idx1-ubyte");
    p.test_images = pick("t10k-images-idx3-ubyte");
    p.test_labels = pick("t10k-labels-idx1-ubyte");
    return p;
}

}  // namespace flsim
