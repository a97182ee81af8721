#include "doctest.h"
#include "testutil.hpp"

#include <cmath>
#include <numeric>
#include <set>

#include "flsim/bayes.hpp"
#include "flsim/rng.hpp"

using namespace flsim;
using namespace testutil;

TEST_CASE("mc_predict with zero dropout equals the eval forward") {
    const Model m = init_model(tiny_specs(0.0f), 1, tiny_input());
    const Tensor inputs = random_images(6, 8, 8, 10);
    const PredictiveDistribution d = mc_predict(m, inputs, 5, 99);
    const Tensor ev = predict_probs(m, inputs);
    for (std::size_t i = 0; i < ev.numel(); ++i)
        CHECK(d.mean_probs.data[i] == doctest::Approx(ev.data[i]).epsilon(1e-6));
}

TEST_CASE("mc_predict mean rows stay on the simplex") {
    const Model m = init_model(tiny_specs(0.4f), 2, tiny_input());
    const Tensor inputs = random_images(4, 8, 8, 20);
    for (int r : {1, 3, 16}) {
        const PredictiveDistribution d = mc_predict(m, inputs, r, 7);
        for (int s = 0; s < 4; ++s) {
            float sum = 0.0f;
            for (int c = 0; c < 3; ++c)
                sum += d.mean_probs.data[static_cast<std::size_t>(s) * 3 + c];
            CHECK(std::fabs(sum - 1.0f) < 1e-5f);
        }
    }
    CHECK_THROWS_AS(mc_predict(m, inputs, 0, 1), std::invalid_argument);
}

TEST_CASE("mc_predict is independent of batching") {
    const Model m = init_model(tiny_specs(0.5f), 3, tiny_input());
    const Tensor inputs = random_images(5, 8, 8, 30);
    const PredictiveDistribution whole = mc_predict(m, inputs, 4, 55);
    // item-by-item evaluation must agree exactly when seeded by item index
    for (int i = 0; i < 5; ++i) {
        Tensor one({1, 8, 8, 1});
        std::copy(inputs.data.begin() + i * 64, inputs.data.begin() + (i + 1) * 64,
                  one.data.begin());
        Tensor acc({1, 3});
        for (int p = 0; p < 4; ++p) {
            const std::uint64_t ss = rng::derive(55, i, p);
            const Tensor probs = stochastic_probs(m, one, &ss);
            for (int c = 0; c < 3; ++c) acc.data[c] += probs.data[c];
        }
        for (int c = 0; c < 3; ++c)
            CHECK(whole.mean_probs.data[static_cast<std::size_t>(i) * 3 + c] ==
                  doctest::Approx(acc.data[c] / 4.0f).epsilon(1e-6));
    }
}

TEST_CASE("predictive entropy reference values and bounds") {
    PredictiveDistribution d;
    d.mean_probs = Tensor({3, 10});
    for (int c = 0; c < 10; ++c) d.mean_probs.data[c] = 0.1f;
    d.mean_probs.data[10 + 2] = 1.0f;
    d.mean_probs.data[20 + 0] = 0.5f;
    d.mean_probs.data[20 + 1] = 0.5f;
    d.log_mean = Tensor({3, 10});
    for (std::size_t i = 0; i < d.mean_probs.numel(); ++i)
        d.log_mean.data[i] = std::log(std::max(d.mean_probs.data[i], kProbFloor));

    const auto s = predictive_entropy(d);
    CHECK(s[0] == doctest::Approx(std::log(10.0)).epsilon(1e-6));
    CHECK(s[1] == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(s[2] == doctest::Approx(std::log(2.0)).epsilon(1e-6));

    const Model m = init_model(tiny_specs(0.3f), 5, tiny_input());
    const Tensor inputs = random_images(20, 8, 8, 40);
    const auto ent = predictive_entropy(mc_predict(m, inputs, 8, 3));
    for (double e : ent) {
        CHECK(e >= 0.0);
        CHECK(e <= std::log(3.0) + 1e-9);
    }
}

TEST_CASE("mean variance shrinks like 1/r") {
    const Model m = init_model(tiny_specs(0.5f), 6, tiny_input());
    const Tensor input = random_images(1, 8, 8, 50);
    const int n_seeds = 48;
    auto var_at = [&](int r) {
        double s = 0.0, sq = 0.0;
        for (int seed = 0; seed < n_seeds; ++seed) {
            const PredictiveDistribution d = mc_predict(m, input, r, 1000 + seed);
            const double p = d.mean_probs.data[0];
            s += p;
            sq += p * p;
        }
        const double mean = s / n_seeds;
        return sq / n_seeds - mean * mean;
    };
    const double v1 = var_at(1), v8 = var_at(8), v64 = var_at(64);
    CHECK(v1 / v8 > 4.0);
    CHECK(v1 / v8 < 16.0);
    CHECK(v8 / v64 > 4.0);
    CHECK(v8 / v64 < 16.0);
}

TEST_CASE("acquire_topk matches an independent brute-force pass") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        const Model m = init_model(tiny_specs(0.2f), seed + 30, tiny_input());
        Dataset src;
        src.images = random_images(60, 8, 8, seed * 100);
        src.labels = random_labels(60, 3, seed * 101);
        Pool pool = build_pool(src, 60, seed);
        Pool copy = pool;

        const int k = 9, r = 4;
        const AcquisitionResult got = acquire_topk(m, pool, k, r, seed * 7);

        std::vector<std::pair<double, int>> scored;
        for (int i = 0; i < 60; ++i) {
            Tensor one({1, 8, 8, 1});
            std::copy(copy.data.images.data.begin() + i * 64,
                      copy.data.images.data.begin() + (i + 1) * 64, one.data.begin());
            Tensor acc({1, 3});
            for (int p = 0; p < r; ++p) {
                const std::uint64_t ss = rng::derive(seed * 7, i, p);
                const Tensor probs = stochastic_probs(m, one, &ss);
                for (int c = 0; c < 3; ++c) acc.data[c] += probs.data[c];
            }
            double h = 0.0;
            for (int c = 0; c < 3; ++c) {
                const double p = acc.data[c] / r;
                h -= p * std::log(std::max(p, 1e-12));
            }
            scored.push_back({h, i});
        }
        std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (int i = 0; i < k; ++i)
            CHECK(got.pool_indices[static_cast<std::size_t>(i)] ==
                  scored[static_cast<std::size_t>(i)].second);
        // scores descending
        for (int i = 1; i < k; ++i)
            CHECK(got.scores[static_cast<std::size_t>(i - 1)] >=
                  got.scores[static_cast<std::size_t>(i)]);
    }
}

TEST_CASE("constant-output model falls back to pool-index tie-break") {
    Model m = init_model(tiny_specs(0.2f), 44, tiny_input());
    for (Tensor& t : m.params)
        std::fill(t.data.begin(), t.data.end(), 0.0f);  // logits = biases = 0

    Dataset src;
    src.images = random_images(20, 8, 8, 5);
    src.labels = random_labels(20, 3, 6);
    Pool pool = build_pool(src, 20, 2);

    const AcquisitionResult res = acquire_topk(m, pool, 6, 3, 9);
    CHECK(res.pool_indices == std::vector<int>{0, 1, 2, 3, 4, 5});
}

TEST_CASE("acquisitions never return an item twice") {
    const Model m = init_model(tiny_specs(0.2f), 50, tiny_input());
    Dataset src;
    src.images = random_images(30, 8, 8, 60);
    src.labels = random_labels(30, 3, 61);
    Pool pool = build_pool(src, 30, 3);

    std::set<int> seen;
    for (int round = 0; round < 3; ++round) {
        const AcquisitionResult res = acquire_topk(m, pool, 8, 2, 70 + round);
        for (int idx : res.pool_indices) {
            CHECK(seen.count(idx) == 0);
            seen.insert(idx);
        }
    }
    CHECK(pool.unacquired() == 30 - 24);
    CHECK_THROWS_AS(acquire_topk(m, pool, 7, 2, 99), std::runtime_error);
}

TEST_CASE("random acquisition covers the pool and is seed-stable") {
    const Model m = init_model(tiny_specs(0.2f), 51, tiny_input());
    Dataset src;
    src.images = random_images(12, 8, 8, 62);
    src.labels = random_labels(12, 3, 63);

    Pool p1 = build_pool(src, 12, 4);
    Pool p2 = build_pool(src, 12, 4);
    const AcquisitionResult a = acquire_random(m, p1, 12, 2, 5);
    std::set<int> all(a.pool_indices.begin(), a.pool_indices.end());
    CHECK(all.size() == 12);

    Pool p3 = build_pool(src, 12, 4);
    const AcquisitionResult b = acquire_random(m, p2, 5, 2, 8);
    const AcquisitionResult c = acquire_random(m, p3, 5, 2, 8);
    CHECK(b.pool_indices == c.pool_indices);
}
