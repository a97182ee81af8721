#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flsim/tensor.hpp"

namespace flsim {

enum class LayerKind {
    Conv2d,
    Relu,
    MaxPool,
    Dropout,
    Dense,
    BatchNorm,
    SoftmaxOutput,  // final dense projection followed by row softmax
};

struct LayerSpec {
    LayerKind kind;
    int units = 0;     // output channels (conv) or nodes (dense/output)
    int kernel = 0;    // square kernel size (conv)
    float rate = 0.0f; // dropout probability
};

// The 16-layer default architecture for 28x28x1 inputs; pass with_batchnorm
// to insert a BatchNorm after each convolution (ablation configuration).
std::vector<LayerSpec> default_architecture(bool with_batchnorm = false);

// Spatial dims per layer boundary; flat=true once a dense layer is reached.
struct LayerDims {
    int h = 0, w = 0, c = 0;
    bool flat = false;
    int size() const { return flat ? c : h * w * c; }
    int spatial() const { return flat ? 1 : h * w; }
    int channels() const { return c; }
};

struct ModelLayout {
    LayerDims input;
    std::vector<LayerDims> out;      // per layer
    std::vector<int> first_param;    // layer -> index of its first param block, -1 if none
    std::vector<int> bn_slot;        // layer -> batchnorm state slot, -1 if none
    std::vector<std::string> block_names;  // per param block
    int penultimate_layer = -1;      // relu right before the output projection
    int n_blocks = 0;
};

// Shape propagation; throws on non-positive spatial dims or invalid specs.
ModelLayout make_layout(const std::vector<LayerSpec>& specs,
                        const LayerDims& input = {28, 28, 1, false});

struct BnRunning {
    Tensor mean;
    Tensor var;
};

struct Model {
    std::vector<LayerSpec> specs;
    ModelLayout layout;
    std::vector<Tensor> params;        // conv w,b | dense w,b | bn gamma,beta
    std::vector<BnRunning> bn_running; // one per batchnorm layer
};

// Fan-in-scaled uniform init, biases zero, gamma=1/beta=0, running var=1;
// bit-deterministic in seed.
Model init_model(const std::vector<LayerSpec>& specs, std::uint64_t seed,
                 const LayerDims& input = {28, 28, 1, false});

struct ForwardMode {
    bool train = false;
    std::uint64_t mask_seed = 0;
    // Optional per-sample seed override (one per batch row); used by the
    // Monte-Carlo predictor so masks depend on item identity, not batch slot.
    const std::uint64_t* sample_seeds = nullptr;

    static ForwardMode eval() { return {}; }
    static ForwardMode training(std::uint64_t seed) { return {true, seed, nullptr}; }
};

struct ForwardTrace {
    Tensor input;
    std::vector<Tensor> acts;            // output of each layer
    std::vector<Tensor> dropout_mask;    // per layer; empty unless dropout
    std::vector<std::vector<std::int32_t>> pool_argmax;  // per layer; empty unless maxpool
    std::vector<Tensor> bn_xhat;         // per layer; train-mode batchnorm caches
    std::vector<Tensor> bn_invstd;
    std::vector<Tensor> bn_mean;
    std::vector<Tensor> bn_var;
    Tensor logits;
    int penultimate_layer = -1;
    int batch = 0;

    const Tensor& probs() const { return acts.back(); }
    const Tensor& penultimate() const {
        return acts[static_cast<std::size_t>(penultimate_layer)];
    }
};

struct GradientSet {
    std::vector<Tensor> grads;  // mean cross-entropy loss gradients, one per param block
};

ForwardTrace forward(const Model& model, const Tensor& batch,
                     const ForwardMode& mode);

GradientSet backward(const Model& model, const ForwardTrace& trace,
                     const std::vector<int>& labels);

// w <- w - lr*(g + lambda*w); decay applies to conv/dense weight matrices
// only (not biases, not batchnorm parameters).
void sgd_step(Model& model, const GradientSet& grads, float lr, float lambda);

// Fold the batch statistics captured in a train-mode trace into the model's
// running averages (kept out of forward() so forward stays pure).
void update_bn_running(Model& model, const ForwardTrace& trace, float momentum);

double cross_entropy(const Tensor& probs, const std::vector<int>& labels);

// Eval-mode probabilities without trace recording; parallel over items.
Tensor predict_probs(const Model& model, const Tensor& batch);

// Eval-mode probabilities plus penultimate activations (rows x 128).
struct EvalActivations {
    Tensor probs;
    Tensor penultimate;
};
EvalActivations predict_with_penultimate(const Model& model, const Tensor& batch);

// Train-mode probabilities for one batch with explicit per-sample mask seeds.
Tensor stochastic_probs(const Model& model, const Tensor& batch,
                        const std::uint64_t* sample_seeds);

bool congruent(const Model& a, const Model& b);

constexpr float kBnEps = 1e-5f;
constexpr float kBnMomentum = 0.9f;
constexpr float kProbFloor = 1e-12f;

}  // namespace flsim
