#include "doctest.h"
#include "testutil.hpp"

#include <cmath>

#include "flsim/analytics.hpp"

using namespace flsim;
using namespace testutil;

namespace {

// bias-only predictor: always argmaxes to the given class
Model constant_predictor(int cls, std::uint64_t seed = 1) {
    Model m = init_model(tiny_specs(0.0f), seed, tiny_input());
    for (Tensor& t : m.params) std::fill(t.data.begin(), t.data.end(), 0.0f);
    m.params.back().data[static_cast<std::size_t>(cls)] = 10.0f;
    return m;
}

}  // namespace

TEST_CASE("accuracy equals a brute-force per-item loop") {
    const Model m = init_model(tiny_specs(0.1f), 3, tiny_input());
    Dataset d;
    d.images = random_images(50, 8, 8, 4);
    d.labels = random_labels(50, 3, 5);

    const double got = accuracy(m, d);
    const Tensor probs = predict_probs(m, d.images);
    int correct = 0;
    for (int i = 0; i < 50; ++i) {
        int best = 0;
        for (int c = 1; c < 3; ++c)
            if (probs.data[static_cast<std::size_t>(i) * 3 + c] >
                probs.data[static_cast<std::size_t>(i) * 3 + best])
                best = c;
        correct += best == d.labels[static_cast<std::size_t>(i)];
    }
    CHECK(got == doctest::Approx(correct / 50.0));
    CHECK_THROWS_AS(accuracy(m, Dataset{}), std::invalid_argument);
}

TEST_CASE("constant predictor scores the class share on a balanced set") {
    const Model m = constant_predictor(2);
    Dataset d;
    d.images = random_images(30, 8, 8, 6);
    d.labels.resize(30);
    for (int i = 0; i < 30; ++i) d.labels[static_cast<std::size_t>(i)] = i % 3;
    CHECK(accuracy(m, d) == doctest::Approx(1.0 / 3.0));

    const auto hist = per_class_histogram(m, d);
    CHECK(hist[2] == 10);
    CHECK(hist[0] == 0);
    CHECK(hist[1] == 0);
}

TEST_CASE("histogram totals equal accuracy times N exactly") {
    const Model m = init_model(tiny_specs(0.0f), 8, tiny_input());
    Dataset d;
    d.images = random_images(37, 8, 8, 9);
    d.labels = random_labels(37, 3, 10);
    const EvalReport er = evaluate(m, d);
    int total = 0;
    for (int c : er.per_class) total += c;
    CHECK(total == static_cast<int>(std::lround(er.acc * 37)));
}

TEST_CASE("divergence contract: zero, half, scale invariance, oracle") {
    const Model a = init_model(tiny_specs(0.0f), 11, tiny_input());
    const DivergenceReport self = layer_divergence(a, a);
    for (std::size_t b = 0; b < self.values.size(); ++b) {
        CHECK(self.defined[b]);
        CHECK(self.values[b] == 0.0);
    }

    Model doubled = a;
    for (Tensor& t : doubled.params)
        for (float& v : t.data) v *= 2.0f;
    const DivergenceReport half = layer_divergence(doubled, a);
    for (std::size_t b = 0; b < half.values.size(); ++b)
        if (half.defined[b]) CHECK(half.values[b] == doctest::Approx(0.5).epsilon(1e-6));

    Model sa = doubled, sb = a;
    for (Tensor& t : sa.params)
        for (float& v : t.data) v *= -7.0f;
    for (Tensor& t : sb.params)
        for (float& v : t.data) v *= -7.0f;
    const DivergenceReport scaled = layer_divergence(sa, sb);
    for (std::size_t b = 0; b < scaled.values.size(); ++b)
        if (scaled.defined[b] && half.defined[b])
            CHECK(scaled.values[b] == doctest::Approx(half.values[b]).epsilon(1e-9));

    // independent elementwise recomputation
    const Model c = init_model(tiny_specs(0.0f), 12, tiny_input());
    const DivergenceReport rep = layer_divergence(a, c);
    for (std::size_t b = 0; b < rep.values.size(); ++b) {
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < a.params[b].numel(); ++i) {
            const double diff =
                static_cast<double>(a.params[b].data[i]) - c.params[b].data[i];
            num += diff * diff;
            den += static_cast<double>(a.params[b].data[i]) * a.params[b].data[i];
        }
        CHECK(rep.values[b] ==
              doctest::Approx(std::sqrt(num) / std::sqrt(den)).epsilon(1e-9));
    }
}

TEST_CASE("zero-norm device block yields the undefined marker") {
    Model dev = init_model(tiny_specs(0.0f), 13, tiny_input());
    const Model ens = init_model(tiny_specs(0.0f), 14, tiny_input());
    std::fill(dev.params[0].data.begin(), dev.params[0].data.end(), 0.0f);
    const DivergenceReport rep = layer_divergence(dev, ens);
    CHECK_FALSE(rep.defined[0]);
    CHECK(rep.defined[2]);  // output weights still defined

    const std::vector<MetricsRow> rows = {{0, "d1", 0.5, rep, std::vector<int>(10, 0)}};
    const std::string csv = metrics_csv(rows);
    CHECK(csv.find("undef") != std::string::npos);
}

TEST_CASE("activation heatmap is nonnegative and constant for constant input") {
    const Model m = init_model(default_architecture(), 15);
    Dataset zeros;
    zeros.images = Tensor({10, 28, 28, 1});
    zeros.labels.assign(10, 1);
    const Tensor hm = activation_heatmap(m, zeros);
    CHECK(hm.shape == std::vector<int>{10, 128});
    for (float v : hm.data) CHECK(v >= 0.0f);
    for (int r = 1; r < 10; ++r)
        for (int c = 0; c < 128; ++c)
            CHECK(hm.data[static_cast<std::size_t>(r) * 128 + c] ==
                  hm.data[static_cast<std::size_t>(c)]);
}

TEST_CASE("metrics CSV layout is stable") {
    DivergenceReport div;
    div.block_names = {"c1_w", "c1_b"};
    div.values = {0.25, 0.0};
    div.defined = {true, true};
    std::vector<int> hist(10, 0);
    hist[4] = 7;
    const std::string csv = metrics_csv({{2, "d1", 0.125, div, hist}});
    CHECK(csv ==
          "round,model_id,accuracy,div_c1_w,div_c1_b,correct_0,correct_1,correct_2,"
          "correct_3,correct_4,correct_5,correct_6,correct_7,correct_8,correct_9\n"
          "2,d1,0.125000,0.250000,0.000000,0,0,0,0,7,0,0,0,0,0\n");
}

TEST_CASE("cosine similarity basics") {
    CHECK(cosine_similarity({1, 0, 0}, {1, 0, 0}) == doctest::Approx(1.0));
    CHECK(cosine_similarity({1, 0, 0}, {0, 1, 0}) == doctest::Approx(0.0));
    CHECK(cosine_similarity({1, 1, 0}, {-1, -1, 0}) == doctest::Approx(-1.0));
}
