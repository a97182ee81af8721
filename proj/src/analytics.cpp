#include "flsim/analytics.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace flsim {

EvalReport evaluate(const Model& model, const Dataset& dataset) {
    if (dataset.size() == 0)
        throw std::invalid_argument("evaluate: empty dataset");
    const Tensor probs = predict_probs(model, dataset.images);
    const int classes = probs.dim(1);
    EvalReport rep;
    rep.per_class.assign(static_cast<std::size_t>(classes), 0);
    int correct = 0;
    for (int i = 0; i < dataset.size(); ++i) {
        const float* p = probs.ptr() + static_cast<std::size_t>(i) * classes;
        int best = 0;
        for (int c = 1; c < classes; ++c)
            if (p[c] > p[best]) best = c;
        const int y = dataset.labels[static_cast<std::size_t>(i)];
        if (best == y) {
            ++correct;
            ++rep.per_class[static_cast<std::size_t>(y)];
        }
    }
    rep.acc = static_cast<double>(correct) / dataset.size();
    return rep;
}

double accuracy(const Model& model, const Dataset& dataset) {
    return evaluate(model, dataset).acc;
}

std::vector<int> per_class_histogram(const Model& model, const Dataset& dataset) {
    return evaluate(model, dataset).per_class;
}

DivergenceReport layer_divergence(const Model& device_model,
                                  const Model& ensemble_model) {
    if (!congruent(device_model, ensemble_model))
        throw std::invalid_argument("divergence: models are not shape-congruent");
    DivergenceReport rep;
    rep.block_names = device_model.layout.block_names;
    const std::size_t nb = device_model.params.size();
    rep.values.assign(nb, 0.0);
    rep.defined.assign(nb, true);
    for (std::size_t b = 0; b < nb; ++b) {
        const Tensor& wd = device_model.params[b];
        const Tensor& we = ensemble_model.params[b];
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < wd.numel(); ++i) {
            const double diff = static_cast<double>(wd.data[i]) - we.data[i];
            num += diff * diff;
            den += static_cast<double>(wd.data[i]) * wd.data[i];
        }
        if (den == 0.0) {
            rep.defined[b] = false;
            rep.values[b] = 0.0;
        } else {
            rep.values[b] = std::sqrt(num) / std::sqrt(den);
        }
    }
    return rep;
}

Tensor activation_heatmap(const Model& model, const Dataset& samples) {
    if (samples.size() == 0)
        throw std::invalid_argument("heatmap: empty sample set");
    return predict_with_penultimate(model, samples.images).penultimate;
}

double cosine_similarity(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("cosine: size mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<float> mean_rows(const Tensor& matrix) {
    const int n = matrix.dim(0), w = matrix.dim(1);
    std::vector<float> mean(static_cast<std::size_t>(w), 0.0f);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < w; ++c)
            mean[static_cast<std::size_t>(c)] +=
                matrix.data[static_cast<std::size_t>(r) * w + c];
    for (float& v : mean) v /= static_cast<float>(n);
    return mean;
}

namespace {

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
    if (rows.empty()) return "round,model_id,accuracy\n";
    std::string out = "round,model_id,accuracy";
    for (const std::string& b : rows[0].divergence.block_names)
        out += ",div_" + b;
    for (int c = 0; c < 10; ++c) out += ",correct_" + std::to_string(c);
    out += "\n";
    for (const MetricsRow& r : rows) {
        out += std::to_string(r.round) + "," + r.model_id + "," + fmt_double(r.acc);
        for (std::size_t b = 0; b < r.divergence.values.size(); ++b)
            out += "," + (r.divergence.defined[b] ? fmt_double(r.divergence.values[b])
                                                  : std::string("undef"));
        for (int c : r.per_class) out += "," + std::to_string(c);
        out += "\n";
    }
    return out;
}

std::string heatmap_csv(const Tensor& matrix) {
    const int n = matrix.dim(0), w = matrix.dim(1);
    std::string out;
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < w; ++c) {
            if (c) out += ",";
            out += fmt_double(matrix.data[static_cast<std::size_t>(r) * w + c]);
        }
        out += "\n";
    }
    return out;
}

}  // namespace flsim
