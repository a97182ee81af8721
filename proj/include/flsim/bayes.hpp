#pragma once

#include <cstdint>
#include <vector>

#include "flsim/data.hpp"
#include "flsim/nn.hpp"

namespace flsim {

// Monte-Carlo dropout predictive distribution: the mean over r stochastic
// forward passes, plus its elementwise log (floored at kProbFloor).
struct PredictiveDistribution {
    Tensor mean_probs;  // N x classes
    Tensor log_mean;    // N x classes
};

// Mask seeds are derived from (seed, item index, pass index) so the result
// does not depend on batching, chunking, or thread count.
PredictiveDistribution mc_predict(const Model& model, const Tensor& inputs,
                                  int r, std::uint64_t seed);

// Per-sample predictive entropy in nats: -sum_c p_c log p_c.
std::vector<double> predictive_entropy(const PredictiveDistribution& dist);

struct AcquisitionResult {
    Dataset selected;
    std::vector<double> scores;    // entropy per selected item, descending
    std::vector<int> pool_indices; // positions in the pool, aligned with selected
};

// Scores every unacquired pool item, keeps the k most uncertain (ties broken
// by lower pool index), and marks them acquired.
AcquisitionResult acquire_topk(const Model& model, Pool& pool, int k, int r,
                               std::uint64_t seed);

// Uniform random acquisition baseline; entropies of the selected items are
// still computed so logs stay comparable.
AcquisitionResult acquire_random(const Model& model, Pool& pool, int k, int r,
                                 std::uint64_t seed);

}  // namespace flsim
