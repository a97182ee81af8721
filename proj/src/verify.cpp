#include "flsim/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <utility>

#include "flsim/bayes.hpp"
#include "flsim/checkpoint.hpp"
#include "flsim/federation.hpp"
#include "flsim/rng.hpp"

namespace flsim {

namespace {

std::vector<LayerSpec> tiny_specs() {
    return {
        {LayerKind::Conv2d, 2, 3, 0.0f},
        {LayerKind::Relu},
        {LayerKind::MaxPool},
        {LayerKind::Dropout, 0, 0, 0.1f},
        {LayerKind::SoftmaxOutput, 3},
    };
}

Tensor random_images(int n, int h, int w, std::uint64_t seed) {
    Tensor t({n, h, w, 1});
    for (std::size_t i = 0; i < t.numel(); ++i)
        t.data[i] = rng::u01(rng::derive(seed, i));
    return t;
}

std::vector<int> random_labels(int n, int classes, std::uint64_t seed) {
    std::vector<int> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        y[static_cast<std::size_t>(i)] =
            static_cast<int>(rng::derive(seed, i) % static_cast<std::uint64_t>(classes));
    return y;
}

double train_loss(const Model& m, const Tensor& batch,
                  const std::vector<int>& labels, std::uint64_t mask_seed) {
    return cross_entropy(forward(m, batch, ForwardMode::training(mask_seed)).probs(),
                         labels);
}

CheckResult gradient_check() {
    CheckResult r{"gradient_check", true, ""};
    const LayerDims input{8, 8, 1, false};
    Model m = init_model(tiny_specs(), 77, input);
    const Tensor batch = random_images(2, 8, 8, 123);
    const std::vector<int> labels = random_labels(2, 3, 321);
    const std::uint64_t mask_seed = 999;

    const ForwardTrace tr = forward(m, batch, ForwardMode::training(mask_seed));
    const GradientSet gs = backward(m, tr, labels);

    const float h = 1e-3f;
    int checked = 0, failed = 0;
    double worst = 0.0;
    for (std::size_t b = 0; b < m.params.size(); ++b) {
        const std::size_t sz = m.params[b].numel();
        for (int probe = 0; probe < 8; ++probe) {
            const std::size_t i = rng::derive(55, b, probe) % sz;
            Model pm = m;
            float& w = pm.params[b].data[i];
            const float orig = w;
            w = orig + h;
            const double lp = train_loss(pm, batch, labels, mask_seed);
            w = orig - h;
            const double lm = train_loss(pm, batch, labels, mask_seed);
            const double fd = (lp - lm) / (2.0 * h);
            const double an = gs.grads[b].data[i];
            const double err = std::abs(fd - an);
            const double rel = err / std::max(1e-12, std::max(std::abs(fd), std::abs(an)));
            worst = std::max(worst, std::min(rel, err));
            if (rel > 1e-2 && err > 1e-4) ++failed;
            ++checked;
        }
    }
    std::ostringstream os;
    os << checked << " probes, " << failed << " out of tolerance, worst "
       << worst;
    r.detail = os.str();
    r.pass = failed == 0;
    return r;
}

CheckResult aggregation_identity() {
    CheckResult r{"aggregation_identity", true, ""};
    const LayerDims input{8, 8, 1, false};
    const Model w0 = init_model(tiny_specs(), 11, input);
    ExperimentConfig cfg;
    cfg.lr = 0.05f;

    const int n = 4;
    AggregationWeights alphas;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const double a = 0.1 + rng::u01(rng::derive(3, i));
        alphas.alphas.push_back(a);
        sum += a;
    }
    for (double& a : alphas.alphas) a /= sum;

    std::vector<Model> updated;
    std::vector<GradientSet> grads;
    for (int i = 0; i < n; ++i) {
        const Tensor batch = random_images(3, 8, 8, 1000 + i);
        const std::vector<int> labels = random_labels(3, 3, 2000 + i);
        const ForwardTrace tr =
            forward(w0, batch, ForwardMode::training(rng::derive(7, i)));
        GradientSet g = backward(w0, tr, labels);
        Model dev = w0;
        sgd_step(dev, g, cfg.lr, 0.0f);
        updated.push_back(std::move(dev));
        grads.push_back(std::move(g));
    }

    const Model via_weights = average_models(updated, alphas);
    const Model via_grads = aggregate_gradients(w0, grads, alphas, cfg.lr);

    double worst = 0.0;
    for (std::size_t b = 0; b < via_weights.params.size(); ++b)
        for (std::size_t e = 0; e < via_weights.params[b].numel(); ++e) {
            const double x = via_weights.params[b].data[e];
            const double y = via_grads.params[b].data[e];
            worst = std::max(worst,
                             std::abs(x - y) / std::max(1e-7, std::abs(x)));
        }
    std::ostringstream os;
    os << "worst relative gap " << worst;
    r.detail = os.str();
    r.pass = worst < 1e-6;
    return r;
}

CheckResult average_contract() {
    CheckResult r{"average_contract", true, ""};
    const LayerDims input{8, 8, 1, false};
    const Model a = init_model(tiny_specs(), 5, input);
    std::vector<Model> same(3, a);
    const Model avg = average_models(same, AggregationWeights::uniform(3));
    for (std::size_t b = 0; b < a.params.size() && r.pass; ++b)
        for (std::size_t e = 0; e < a.params[b].numel(); ++e) {
            const float x = a.params[b].data[e];
            const float y = avg.params[b].data[e];
            if (y != x && y != std::nextafterf(x, 1e30f) &&
                y != std::nextafterf(x, -1e30f)) {
                r.pass = false;
                r.detail = "identical-model average drifted";
                break;
            }
        }

    Model bmodel = init_model(tiny_specs(), 6, input);
    AggregationWeights pick;
    pick.alphas = {1.0, 0.0};
    const Model first = average_models({a, bmodel}, pick);
    for (std::size_t b = 0; b < a.params.size() && r.pass; ++b)
        if (first.params[b].data != a.params[b].data) {
            r.pass = false;
            r.detail = "alpha=(1,0) did not return the first model";
        }
    return r;
}

CheckResult entropy_contract() {
    CheckResult r{"entropy_contract", true, ""};
    PredictiveDistribution d;
    d.mean_probs = Tensor({2, 10});
    for (int c = 0; c < 10; ++c) d.mean_probs.data[c] = 0.1f;
    d.mean_probs.data[10] = 1.0f;  // one-hot second row
    d.log_mean = Tensor({2, 10});
    for (std::size_t i = 0; i < d.mean_probs.numel(); ++i)
        d.log_mean.data[i] = std::log(std::max(d.mean_probs.data[i], kProbFloor));
    const std::vector<double> s = predictive_entropy(d);
    if (std::abs(s[0] - std::log(10.0)) > 1e-6) {
        r.pass = false;
        r.detail = "uniform entropy " + std::to_string(s[0]);
    }
    if (std::abs(s[1]) > 1e-9) {
        r.pass = false;
        r.detail = "one-hot entropy " + std::to_string(s[1]);
    }
    return r;
}

CheckResult acquisition_matches_bruteforce() {
    CheckResult r{"acquisition_vs_bruteforce", true, ""};
    const LayerDims input{8, 8, 1, false};
    const Model m = init_model(tiny_specs(), 31, input);

    Dataset source;
    source.images = random_images(40, 8, 8, 4242);
    source.labels = random_labels(40, 3, 2424);
    Pool pool = build_pool(source, 40, 17);
    Pool pool_copy = pool;

    const int k = 7, passes = 4;
    const std::uint64_t seed = 900;
    const AcquisitionResult got = acquire_topk(m, pool, k, passes, seed);

    // independent scoring: one item at a time with the same seeding rule
    std::vector<std::pair<double, int>> scored;
    for (int i = 0; i < 40; ++i) {
        std::vector<int> one = {i};
        const Dataset item = subset(pool_copy.data, one);
        double sum = 0.0;
        Tensor acc({1, 3});
        for (int p = 0; p < passes; ++p) {
            const std::uint64_t ss = rng::derive(seed, i, p);
            const Tensor probs = stochastic_probs(m, item.images, &ss);
            for (int c = 0; c < 3; ++c) acc.data[c] += probs.data[c];
        }
        for (int c = 0; c < 3; ++c) {
            const double p = acc.data[c] / passes;
            if (p > 0) sum -= p * std::log(std::max(p, 1e-12));
        }
        scored.push_back({sum, i});
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (int i = 0; i < k; ++i) {
        if (got.pool_indices[static_cast<std::size_t>(i)] != scored[static_cast<std::size_t>(i)].second) {
            r.pass = false;
            r.detail = "selection differs from brute force at rank " + std::to_string(i);
            return r;
        }
    }
    return r;
}

CheckResult divergence_contract() {
    CheckResult r{"divergence_contract", true, ""};
    const LayerDims input{8, 8, 1, false};
    const Model a = init_model(tiny_specs(), 9, input);
    const DivergenceReport zero = layer_divergence(a, a);
    for (double v : zero.values)
        if (v != 0.0) {
            r.pass = false;
            r.detail = "self-divergence nonzero";
            return r;
        }

    Model doubled = a;
    for (Tensor& t : doubled.params)
        for (float& v : t.data) v *= 2.0f;
    const DivergenceReport half = layer_divergence(doubled, a);
    for (std::size_t b = 0; b < half.values.size(); ++b) {
        if (!half.defined[b]) continue;
        if (std::abs(half.values[b] - 0.5) > 1e-6) {
            r.pass = false;
            r.detail = "2x case gave " + std::to_string(half.values[b]);
            return r;
        }
    }

    Model sa = doubled, sb = a;
    for (Tensor& t : sa.params)
        for (float& v : t.data) v *= 3.0f;
    for (Tensor& t : sb.params)
        for (float& v : t.data) v *= 3.0f;
    const DivergenceReport scaled = layer_divergence(sa, sb);
    for (std::size_t b = 0; b < scaled.values.size(); ++b) {
        if (!scaled.defined[b] || !half.defined[b]) continue;
        if (std::abs(scaled.values[b] - half.values[b]) > 1e-6) {
            r.pass = false;
            r.detail = "not scale-invariant";
            return r;
        }
    }
    return r;
}

CheckResult checkpoint_roundtrip() {
    CheckResult r{"checkpoint_roundtrip", true, ""};
    const LayerDims input{8, 8, 1, false};
    const Model m = init_model(tiny_specs(), 41, input);
    const std::string path =
        (std::filesystem::temp_directory_path() / "flsim_verify_ckpt.flck").string();
    write_checkpoint(path, m);
    const Model back = model_from_checkpoint(path, tiny_specs());
    for (std::size_t b = 0; b < m.params.size(); ++b)
        if (back.params[b].data != m.params[b].data) {
            r.pass = false;
            r.detail = "round-trip not bit-exact";
        }
    std::filesystem::remove(path);
    return r;
}

CheckResult forward_determinism() {
    CheckResult r{"forward_determinism", true, ""};
    const LayerDims input{8, 8, 1, false};
    const Model m = init_model(tiny_specs(), 21, input);
    const Tensor batch = random_images(4, 8, 8, 77);
    const ForwardTrace a = forward(m, batch, ForwardMode::training(5));
    const ForwardTrace b = forward(m, batch, ForwardMode::training(5));
    if (a.probs().data != b.probs().data) {
        r.pass = false;
        r.detail = "same seed produced different outputs";
    }
    const Tensor ev1 = predict_probs(m, batch);
    const Tensor ev2 = predict_probs(m, batch);
    if (ev1.data != ev2.data) {
        r.pass = false;
        r.detail = "eval path not deterministic";
    }
    return r;
}

}  // namespace

std::vector<CheckResult> run_verification() {
    std::vector<CheckResult> out;
    out.push_back(gradient_check());
    out.push_back(aggregation_identity());
    out.push_back(average_contract());
    out.push_back(entropy_contract());
    out.push_back(acquisition_matches_bruteforce());
    out.push_back(divergence_contract());
    out.push_back(checkpoint_roundtrip());
    out.push_back(forward_determinism());
    return out;
}

bool all_passed(const std::vector<CheckResult>& results) {
    for (const CheckResult& r : results)
        if (!r.pass) return false;
    return true;
}

}  // namespace flsim
