#pragma once

#include <array>
#include <string>
#include <vector>

#include "flsim/data.hpp"
#include "flsim/nn.hpp"

namespace flsim {

double accuracy(const Model& model, const Dataset& dataset);

// Correct predictions per true class (argmax, eval mode).
std::vector<int> per_class_histogram(const Model& model, const Dataset& dataset);

// One eval pass serving both of the above.
struct EvalReport {
    double acc = 0.0;
    std::vector<int> per_class;
};
EvalReport evaluate(const Model& model, const Dataset& dataset);

// Relative distance per parameter block: |W_dev - W_ens| / |W_dev| with
// Frobenius norms. A zero-norm device block yields an undefined entry.
struct DivergenceReport {
    std::vector<std::string> block_names;
    std::vector<double> values;
    std::vector<bool> defined;
};
DivergenceReport layer_divergence(const Model& device_model,
                                  const Model& ensemble_model);

// Penultimate-layer activations (rows = samples), eval mode.
Tensor activation_heatmap(const Model& model, const Dataset& samples);

double cosine_similarity(const std::vector<float>& a, const std::vector<float>& b);
std::vector<float> mean_rows(const Tensor& matrix);

// Metrics CSV: round, model_id, accuracy, one divergence column per block,
// ten per-class count columns.
struct MetricsRow {
    int round = 0;
    std::string model_id;
    double acc = 0.0;
    DivergenceReport divergence;
    std::vector<int> per_class;
};
std::string metrics_csv(const std::vector<MetricsRow>& rows);
std::string heatmap_csv(const Tensor& matrix);

}  // namespace flsim
