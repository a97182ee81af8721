#pragma once

#include <cstdint>
#include <vector>

#include "flsim/data.hpp"
#include "flsim/nn.hpp"
#include "flsim/rng.hpp"

namespace testutil {

inline std::vector<flsim::LayerSpec> tiny_specs(float dropout = 0.1f) {
    using flsim::LayerKind;
    return {
        {LayerKind::Conv2d, 2, 3, 0.0f},
        {LayerKind::Relu},
        {LayerKind::MaxPool},
        {LayerKind::Dropout, 0, 0, dropout},
        {LayerKind::SoftmaxOutput, 3},
    };
}

inline flsim::LayerDims tiny_input() { return {8, 8, 1, false}; }

inline flsim::Tensor random_images(int n, int h, int w, std::uint64_t seed) {
    flsim::Tensor t({n, h, w, 1});
    for (std::size_t i = 0; i < t.numel(); ++i)
        t.data[i] = flsim::rng::u01(flsim::rng::derive(seed, i));
    return t;
}

inline std::vector<int> random_labels(int n, int classes, std::uint64_t seed) {
    std::vector<int> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        y[static_cast<std::size_t>(i)] = static_cast<int>(
            flsim::rng::derive(seed, i) % static_cast<std::uint64_t>(classes));
    return y;
}

// Balanced synthetic image set: n items, labels cycling 0..classes-1.
inline flsim::Dataset synth_dataset(int n, std::uint64_t seed, int classes = 10,
                                    int hw = 28) {
    flsim::Dataset d;
    d.images = random_images(n, hw, hw, seed);
    d.labels.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) d.labels[static_cast<std::size_t>(i)] = i % classes;
    return d;
}

// Central finite difference of the training loss w.r.t. one parameter entry,
// with the dropout masks pinned by mask_seed.
inline double fd_loss_derivative(const flsim::Model& model,
                                 const flsim::Tensor& batch,
                                 const std::vector<int>& labels,
                                 std::uint64_t mask_seed, std::size_t block,
                                 std::size_t index, float h = 1e-3f) {
    flsim::Model pm = model;
    float& w = pm.params[block].data[index];
    const float orig = w;
    w = orig + h;
    const double lp = flsim::cross_entropy(
        flsim::forward(pm, batch, flsim::ForwardMode::training(mask_seed)).probs(),
        labels);
    w = orig - h;
    const double lm = flsim::cross_entropy(
        flsim::forward(pm, batch, flsim::ForwardMode::training(mask_seed)).probs(),
        labels);
    return (lp - lm) / (2.0 * h);
}

}  // namespace testutil
