#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

// Counter-based deterministic randomness. Every draw is a pure function of a
// 64-bit key, so results do not depend on call order, thread count, or the
// standard library's distribution internals.
namespace flsim::rng {

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += kGamma;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    return splitmix64(a ^ (b + kGamma + (a << 6) + (a >> 2)));
}

// Hash a key from a root seed and any number of indices. Used to give every
// (device, round, epoch, batch, ...) coordinate its own independent stream.
template <typename... Ids>
inline std::uint64_t derive(std::uint64_t root, Ids... ids) {
    std::uint64_t h = splitmix64(root);
    ((h = mix(h, static_cast<std::uint64_t>(ids))), ...);
    return h;
}

// Compile-time FNV-1a, for tagging seed domains by name.
constexpr std::uint64_t tag(const char* s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    while (*s) {
        h ^= static_cast<std::uint64_t>(*s++);
        h *= 0x100000001B3ull;
    }
    return h;
}

// Uniform float in [0, 1) from a hashed key.
inline float u01(std::uint64_t h) {
    return static_cast<float>(h >> 40) * 0x1.0p-24f;
}

// Sequential stream for shuffles and sampling.
class Stream {
public:
    explicit Stream(std::uint64_t seed) : state_(splitmix64(seed)) {}

    std::uint64_t next() {
        state_ = state_ * 6364136223846793005ull + 1442695040888963407ull;
        return splitmix64(state_);
    }

    // Uniform integer in [0, n) via the multiply-shift reduction.
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next()) * n) >> 64);
    }

private:
    std::uint64_t state_;
};

// Fisher-Yates; portable replacement for std::shuffle.
template <typename T>
inline void shuffle(std::vector<T>& v, Stream& rs) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rs.below(i));
        std::swap(v[i - 1], v[j]);
    }
}

// k distinct indices from [0, n), uniform without replacement, in draw order.
inline std::vector<int> sample_without_replacement(int n, int k, Stream& rs) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        std::size_t j = i + static_cast<std::size_t>(rs.below(n - i));
        std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
        out.push_back(idx[static_cast<std::size_t>(i)]);
    }
    return out;
}

}  // namespace flsim::rng
