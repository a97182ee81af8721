#include "doctest.h"
#include "testutil.hpp"

#include <cmath>

#include "flsim/nn.hpp"
#include "flsim/rng.hpp"

using namespace flsim;
using namespace testutil;

TEST_CASE("default architecture shape chain on 28x28x1") {
    const auto specs = default_architecture();
    CHECK(specs.size() == 16);
    const ModelLayout lay = make_layout(specs);

    // spatial chain 28 -> 25 -> 21 -> 10 -> 7 -> 4 -> 2
    CHECK(lay.out[0].h == 25);
    CHECK(lay.out[0].c == 64);
    CHECK(lay.out[2].h == 21);
    CHECK(lay.out[4].h == 10);
    CHECK(lay.out[6].h == 7);
    CHECK(lay.out[6].c == 32);
    CHECK(lay.out[8].h == 4);
    CHECK(lay.out[10].h == 2);
    CHECK(lay.out[10].size() == 64);  // flatten feeding the dense layer
    CHECK(lay.out[12].size() == 128);
    CHECK(lay.out[15].size() == 10);
    CHECK(lay.penultimate_layer == 13);
    CHECK(lay.out[static_cast<std::size_t>(lay.penultimate_layer)].size() == 128);
}

TEST_CASE("batchnorm variant only differs by inserted layers") {
    const auto plain = default_architecture(false);
    const auto bn = default_architecture(true);
    CHECK(bn.size() == plain.size() + 4);
    int bn_count = 0;
    for (const auto& s : bn) bn_count += s.kind == LayerKind::BatchNorm;
    CHECK(bn_count == 4);
    int bn_plain = 0;
    for (const auto& s : plain) bn_plain += s.kind == LayerKind::BatchNorm;
    CHECK(bn_plain == 0);
}

TEST_CASE("init_model is deterministic, fan-in bounded, zero-bias") {
    const Model a = init_model(default_architecture(), 0);
    const Model b = init_model(default_architecture(), 0);
    REQUIRE(a.params.size() == b.params.size());
    for (std::size_t i = 0; i < a.params.size(); ++i)
        CHECK(a.params[i].data == b.params[i].data);

    const Model c = init_model(default_architecture(), 1);
    CHECK(a.params[0].data != c.params[0].data);

    // conv1: fan_in = 4*4*1
    const float bound = 1.0f / std::sqrt(16.0f);
    for (float v : a.params[0].data) {
        CHECK(v >= -bound);
        CHECK(v <= bound);
    }
    for (float v : a.params[1].data) CHECK(v == 0.0f);
}

TEST_CASE("impossible geometry is rejected") {
    std::vector<LayerSpec> bad = {{LayerKind::Conv2d, 4, 29, 0.0f},
                                  {LayerKind::SoftmaxOutput, 10}};
    CHECK_THROWS_AS(make_layout(bad), std::invalid_argument);
}

TEST_CASE("eval probabilities are normalized rows") {
    const Model m = init_model(default_architecture(), 3);
    const Tensor batch = random_images(5, 28, 28, 17);
    const ForwardTrace tr = forward(m, batch, ForwardMode::eval());
    for (int s = 0; s < 5; ++s) {
        float sum = 0.0f;
        for (int c = 0; c < 10; ++c) {
            const float p = tr.probs().data[static_cast<std::size_t>(s) * 10 + c];
            CHECK(p >= 0.0f);
            CHECK(p <= 1.0f);
            sum += p;
        }
        CHECK(std::fabs(sum - 1.0f) < 1e-5f);
    }
    CHECK(tr.penultimate().dim(1) == 128);
}

TEST_CASE("dropout rate zero makes train equal eval") {
    auto specs = default_architecture();
    for (auto& s : specs)
        if (s.kind == LayerKind::Dropout) s.rate = 0.0f;
    const Model m = init_model(specs, 5);
    const Tensor batch = random_images(3, 28, 28, 23);
    const ForwardTrace t1 = forward(m, batch, ForwardMode::training(99));
    const ForwardTrace t2 = forward(m, batch, ForwardMode::eval());
    CHECK(t1.logits.data == t2.logits.data);
}

TEST_CASE("train-mode forward is a pure function of the mask seed") {
    const Model m = init_model(default_architecture(), 6);
    const Tensor batch = random_images(4, 28, 28, 29);
    const ForwardTrace a = forward(m, batch, ForwardMode::training(1234));
    const ForwardTrace b = forward(m, batch, ForwardMode::training(1234));
    const ForwardTrace c = forward(m, batch, ForwardMode::training(1235));
    CHECK(a.probs().data == b.probs().data);
    CHECK(a.probs().data != c.probs().data);
}

TEST_CASE("dropout zeroes the expected fraction of activations") {
    const Model m = init_model(default_architecture(), 7);
    const Tensor batch = random_images(8, 28, 28, 31);
    std::size_t zeros = 0, total = 0;
    for (int seed = 0; seed < 20; ++seed) {
        const ForwardTrace tr = forward(m, batch, ForwardMode::training(seed));
        const Tensor& mask = tr.dropout_mask[5];  // rate 0.25 layer
        REQUIRE(mask.numel() > 0);
        for (float v : mask.data) zeros += v == 0.0f;
        total += mask.numel();
    }
    const double p = 0.25;
    const double sigma = std::sqrt(p * (1 - p) / static_cast<double>(total));
    const double frac = static_cast<double>(zeros) / static_cast<double>(total);
    CHECK(std::fabs(frac - p) < 3.0 * sigma + 1e-9);
}

TEST_CASE("cross entropy reference values") {
    Tensor probs({3, 10});
    for (int c = 0; c < 10; ++c) probs.data[c] = 0.1f;           // uniform
    probs.data[10 + 4] = 1.0f;                                   // one-hot
    for (int c = 0; c < 10; ++c) probs.data[20 + c] = c < 2 ? 0.5f : 0.0f;
    CHECK(cross_entropy(Tensor({1, 10}, {probs.data.begin(), probs.data.begin() + 10}),
                        {3}) == doctest::Approx(std::log(10.0)).epsilon(1e-5));
    CHECK(cross_entropy(probs, {0, 4, 1}) ==
          doctest::Approx((std::log(10.0) + 0.0 + std::log(2.0)) / 3.0).epsilon(1e-5));
}

TEST_CASE("gradient check against central finite differences") {
    for (std::uint64_t seed : {1ull, 2ull}) {
        const Model m = init_model(tiny_specs(), seed, tiny_input());
        const Tensor batch = random_images(2, 8, 8, seed * 31 + 1);
        const auto labels = random_labels(2, 3, seed * 17 + 2);
        const std::uint64_t mask_seed = seed * 1000;

        const ForwardTrace tr = forward(m, batch, ForwardMode::training(mask_seed));
        const GradientSet gs = backward(m, tr, labels);

        for (std::size_t b = 0; b < m.params.size(); ++b) {
            const std::size_t sz = m.params[b].numel();
            for (int probe = 0; probe < 8; ++probe) {
                const std::size_t i = rng::derive(7, seed, b, probe) % sz;
                const double fd =
                    fd_loss_derivative(m, batch, labels, mask_seed, b, i);
                const double an = gs.grads[b].data[i];
                const double err = std::fabs(fd - an);
                const double rel =
                    err / std::max(1e-12, std::max(std::fabs(fd), std::fabs(an)));
                const bool ok = rel < 1e-2 || err < 1e-4;
                CHECK_MESSAGE(ok, "block ", b, " idx ", i, " fd=", fd, " an=", an);
            }
        }
    }
}

TEST_CASE("gradient check with batchnorm enabled") {
    std::vector<LayerSpec> specs = {
        {LayerKind::Conv2d, 2, 3, 0.0f}, {LayerKind::BatchNorm},
        {LayerKind::Relu},               {LayerKind::MaxPool},
        {LayerKind::SoftmaxOutput, 3},
    };
    const Model m = init_model(specs, 4, tiny_input());
    const Tensor batch = random_images(4, 8, 8, 77);
    const auto labels = random_labels(4, 3, 78);

    const ForwardTrace tr = forward(m, batch, ForwardMode::training(5));
    const GradientSet gs = backward(m, tr, labels);
    for (std::size_t b = 0; b < m.params.size(); ++b) {
        const std::size_t sz = m.params[b].numel();
        for (int probe = 0; probe < 6; ++probe) {
            const std::size_t i = rng::derive(13, b, probe) % sz;
            const double fd = fd_loss_derivative(m, batch, labels, 5, b, i);
            const double an = gs.grads[b].data[i];
            const double err = std::fabs(fd - an);
            const double rel =
                err / std::max(1e-12, std::max(std::fabs(fd), std::fabs(an)));
            CHECK_MESSAGE((rel < 1e-2 || err < 1e-4), "bn block ", b, " fd=", fd,
                          " an=", an);
        }
    }
}

TEST_CASE("batchnorm train mode rejects single-row batches") {
    std::vector<LayerSpec> specs = {
        {LayerKind::Dense, 4}, {LayerKind::BatchNorm}, {LayerKind::SoftmaxOutput, 3}};
    const Model m = init_model(specs, 1, {0, 0, 6, true});
    Tensor one({1, 6});
    CHECK_THROWS(forward(m, one, ForwardMode::training(1)));
    CHECK_NOTHROW(forward(m, one, ForwardMode::eval()));
}

TEST_CASE("near-perfect prediction gives near-zero gradients") {
    Model m = init_model(tiny_specs(0.0f), 8, tiny_input());
    // crank the output bias so class 1 dominates everywhere
    m.params.back().data = {-40.0f, 40.0f, -40.0f};
    const Tensor batch = random_images(1, 8, 8, 33);
    const ForwardTrace tr = forward(m, batch, ForwardMode::training(2));
    CHECK(tr.probs().data[1] > 0.999f);
    const GradientSet gs = backward(m, tr, {1});
    double norm = 0.0;
    for (const Tensor& g : gs.grads)
        for (float v : g.data) norm += static_cast<double>(v) * v;
    CHECK(std::sqrt(norm) < 1e-3);
}

TEST_CASE("identical samples give the single-sample gradient") {
    const Model m = init_model(tiny_specs(0.0f), 9, tiny_input());
    const Tensor one = random_images(1, 8, 8, 41);
    Tensor two({2, 8, 8, 1});
    std::copy(one.data.begin(), one.data.end(), two.data.begin());
    std::copy(one.data.begin(), one.data.end(), two.data.begin() + one.numel());

    const ForwardTrace t1 = forward(m, one, ForwardMode::training(0));
    const ForwardTrace t2 = forward(m, two, ForwardMode::training(0));
    const GradientSet g1 = backward(m, t1, {2});
    const GradientSet g2 = backward(m, t2, {2, 2});
    for (std::size_t b = 0; b < g1.grads.size(); ++b)
        for (std::size_t i = 0; i < g1.grads[b].numel(); ++i)
            CHECK(g2.grads[b].data[i] ==
                  doctest::Approx(g1.grads[b].data[i]).epsilon(1e-5));
}

TEST_CASE("sgd_step contract") {
    std::vector<LayerSpec> specs = {{LayerKind::SoftmaxOutput, 1}};
    Model m = init_model(specs, 1, {0, 0, 1, true});
    m.params[0].data = {1.0f};  // out_w
    m.params[1].data = {0.5f};  // out_b

    GradientSet zero;
    zero.grads = {Tensor({1, 1}), Tensor({1})};

    SUBCASE("lambda=0, g=0 is a fixed point") {
        Model before = m;
        sgd_step(m, zero, 0.1f, 0.0f);
        CHECK(m.params[0].data == before.params[0].data);
        CHECK(m.params[1].data == before.params[1].data);
    }
    SUBCASE("decay shrinks weights but not biases") {
        sgd_step(m, zero, 1.0f, 0.1f);
        CHECK(m.params[0].data[0] == doctest::Approx(0.9f));
        CHECK(m.params[1].data[0] == doctest::Approx(0.5f));
    }
    SUBCASE("repeated decay steps strictly shrink the weight norm") {
        float prev = std::fabs(m.params[0].data[0]);
        for (int i = 0; i < 5; ++i) {
            sgd_step(m, zero, 0.5f, 0.1f);
            const float cur = std::fabs(m.params[0].data[0]);
            CHECK(cur < prev);
            prev = cur;
        }
    }
}

TEST_CASE("backward rejects out-of-range labels") {
    const Model m = init_model(tiny_specs(), 10, tiny_input());
    const Tensor batch = random_images(2, 8, 8, 55);
    const ForwardTrace tr = forward(m, batch, ForwardMode::training(1));
    CHECK_THROWS_AS(backward(m, tr, {0, 3}), std::invalid_argument);
    CHECK_THROWS_AS(backward(m, tr, {-1, 0}), std::invalid_argument);
}

TEST_CASE("stochastic_probs agrees with trace forward") {
    const Model m = init_model(tiny_specs(0.3f), 12, tiny_input());
    const Tensor batch = random_images(5, 8, 8, 60);
    std::vector<std::uint64_t> seeds(5);
    for (int i = 0; i < 5; ++i) seeds[static_cast<std::size_t>(i)] = rng::derive(91, i);

    ForwardMode mode;
    mode.train = true;
    mode.sample_seeds = seeds.data();
    const ForwardTrace tr = forward(m, batch, mode);
    const Tensor probs = stochastic_probs(m, batch, seeds.data());
    for (std::size_t i = 0; i < probs.numel(); ++i)
        CHECK(probs.data[i] == doctest::Approx(tr.probs().data[i]).epsilon(1e-6));
}
