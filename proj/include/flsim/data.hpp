#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "flsim/tensor.hpp"

namespace flsim {

struct Dataset {
    Tensor images;            // N x H x W x 1, values in [0,1]
    std::vector<int> labels;  // class indices

    int size() const { return static_cast<int>(labels.size()); }
    int image_size() const {
        return size() == 0 ? 0
                           : static_cast<int>(images.numel()) / size();
    }
};

// IDX ubyte reader (big-endian headers, magic 0x803 for images and 0x801 for
// labels); transparently inflates gzip inputs. Pixels are scaled to [0,1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

Dataset subset(const Dataset& d, const std::vector<int>& indices);
Dataset concat(const Dataset& a, const Dataset& b);
std::vector<int> label_histogram(const Dataset& d, int classes = 10);

struct Shard {
    int device_id = 0;
    std::set<int> allowed_classes;
    Dataset data;
};

// Class-disjoint shards; assignment must partition {0..classes-1}.
std::vector<Shard> partition_by_class(const Dataset& train,
                                      const std::vector<std::set<int>>& assignment,
                                      int classes = 10);
std::vector<std::set<int>> default_class_assignment();

// n items uniformly without replacement from a shard, deterministic per seed.
Dataset sample_from_shard(const Shard& shard, int n, std::uint64_t seed);

// Uniform sample of n items from the whole dataset (initial server training).
Dataset sample_uniform(const Dataset& d, int n, std::uint64_t seed);

// Stratified sample: per_class items of every class.
Dataset sample_stratified(const Dataset& d, int per_class, std::uint64_t seed,
                          int classes = 10);
std::vector<int> stratified_indices(const Dataset& d, int per_class,
                                    std::uint64_t seed, int classes = 10);

// Seeded shuffle then round-robin deal into near-uniform parts.
std::vector<Dataset> deal_parts(const Dataset& d, int parts, std::uint64_t seed);

struct Pool {
    int device_id = 0;
    Dataset data;
    std::vector<std::uint8_t> acquired;

    int unacquired() const {
        int n = 0;
        for (std::uint8_t a : acquired) n += a == 0;
        return n;
    }
};

Pool build_pool(const Dataset& source, int pool_size, std::uint64_t seed,
                int device_id = 0);

struct ReplayBuffer {
    Dataset data;  // per_class items of every class, fixed after construction
};

ReplayBuffer build_replay(const Dataset& train, int per_class,
                          std::uint64_t seed);

// Canonical Fashion-MNIST file names under a data directory.
struct DataPaths {
    std::string train_images, train_labels, test_images, test_labels;
};
DataPaths locate_dataset(const std::string& data_dir);

}  // namespace flsim
