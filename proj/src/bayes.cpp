#include "flsim/bayes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "flsim/rng.hpp"

namespace flsim {

PredictiveDistribution mc_predict(const Model& model, const Tensor& inputs,
                                  int r, std::uint64_t seed) {
    if (r < 1) throw std::invalid_argument("mc_predict: pass count must be >= 1");
    const int n = inputs.dim(0);
    const int classes = model.specs.back().units;

    PredictiveDistribution dist;
    dist.mean_probs = Tensor({n, classes});
    dist.log_mean = Tensor({n, classes});

    std::vector<std::uint64_t> seeds(static_cast<std::size_t>(n));
    for (int pass = 0; pass < r; ++pass) {
        for (int i = 0; i < n; ++i)
            seeds[static_cast<std::size_t>(i)] = rng::derive(seed, i, pass);
        const Tensor probs = stochastic_probs(model, inputs, seeds.data());
        float* acc = dist.mean_probs.ptr();
        const float* p = probs.ptr();
        for (std::size_t i = 0; i < probs.numel(); ++i) acc[i] += p[i];
    }
    const float inv = 1.0f / static_cast<float>(r);
    for (std::size_t i = 0; i < dist.mean_probs.numel(); ++i) {
        dist.mean_probs.data[i] *= inv;
        dist.log_mean.data[i] =
            std::log(std::max(dist.mean_probs.data[i], kProbFloor));
    }
    return dist;
}

std::vector<double> predictive_entropy(const PredictiveDistribution& dist) {
    const int n = dist.mean_probs.dim(0);
    const int classes = dist.mean_probs.dim(1);
    std::vector<double> out(static_cast<std::size_t>(n), 0.0);
    for (int s = 0; s < n; ++s) {
        double h = 0.0;
        for (int c = 0; c < classes; ++c) {
            const std::size_t i = static_cast<std::size_t>(s) * classes + c;
            h -= static_cast<double>(dist.mean_probs.data[i]) *
                 static_cast<double>(dist.log_mean.data[i]);
        }
        out[static_cast<std::size_t>(s)] = h;
    }
    return out;
}

namespace {

std::vector<int> unacquired_indices(const Pool& pool) {
    std::vector<int> idx;
    idx.reserve(pool.acquired.size());
    for (std::size_t i = 0; i < pool.acquired.size(); ++i)
        if (!pool.acquired[i]) idx.push_back(static_cast<int>(i));
    return idx;
}

AcquisitionResult finish(const Model& model, Pool& pool,
                         std::vector<int> chosen, int r, std::uint64_t seed,
                         std::vector<double> scores) {
    if (scores.empty() && !chosen.empty()) {
        // Random path: score only the selected items, for logging.
        const Dataset sel = subset(pool.data, chosen);
        scores = predictive_entropy(mc_predict(model, sel.images, r, seed));
        std::vector<int> order(chosen.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            if (scores[static_cast<std::size_t>(a)] != scores[static_cast<std::size_t>(b)])
                return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
            return chosen[static_cast<std::size_t>(a)] < chosen[static_cast<std::size_t>(b)];
        });
        std::vector<int> c2;
        std::vector<double> s2;
        for (int o : order) {
            c2.push_back(chosen[static_cast<std::size_t>(o)]);
            s2.push_back(scores[static_cast<std::size_t>(o)]);
        }
        chosen.swap(c2);
        scores.swap(s2);
    }
    AcquisitionResult res;
    res.selected = subset(pool.data, chosen);
    res.scores = std::move(scores);
    res.pool_indices = std::move(chosen);
    for (int i : res.pool_indices) pool.acquired[static_cast<std::size_t>(i)] = 1;
    return res;
}

}  // namespace

AcquisitionResult acquire_topk(const Model& model, Pool& pool, int k, int r,
                               std::uint64_t seed) {
    const std::vector<int> avail = unacquired_indices(pool);
    if (k > static_cast<int>(avail.size()))
        throw std::runtime_error("acquire: pool depleted: need " + std::to_string(k) +
                                 ", have " + std::to_string(avail.size()));

    const Dataset cands = subset(pool.data, avail);
    const std::vector<double> entropy =
        predictive_entropy(mc_predict(model, cands.images, r, seed));

    std::vector<int> order(avail.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (entropy[static_cast<std::size_t>(a)] != entropy[static_cast<std::size_t>(b)])
            return entropy[static_cast<std::size_t>(a)] > entropy[static_cast<std::size_t>(b)];
        return avail[static_cast<std::size_t>(a)] < avail[static_cast<std::size_t>(b)];
    });

    std::vector<int> chosen;
    std::vector<double> scores;
    chosen.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        chosen.push_back(avail[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
        scores.push_back(entropy[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
    }
    return finish(model, pool, std::move(chosen), r, seed, std::move(scores));
}

AcquisitionResult acquire_random(const Model& model, Pool& pool, int k, int r,
                                 std::uint64_t seed) {
    const std::vector<int> avail = unacquired_indices(pool);
    if (k > static_cast<int>(avail.size()))
        throw std::runtime_error("acquire: pool depleted: need " + std::to_string(k) +
                                 ", have " + std::to_string(avail.size()));
    rng::Stream rs(seed);
    std::vector<int> chosen;
    chosen.reserve(static_cast<std::size_t>(k));
    for (int j : rng::sample_without_replacement(static_cast<int>(avail.size()), k, rs))
        chosen.push_back(avail[static_cast<std::size_t>(j)]);
    return finish(model, pool, std::move(chosen), r, seed, {});
}

}  // namespace flsim
