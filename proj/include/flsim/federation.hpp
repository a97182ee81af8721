#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "flsim/analytics.hpp"
#include "flsim/bayes.hpp"
#include "flsim/config.hpp"
#include "flsim/data.hpp"
#include "flsim/nn.hpp"

namespace flsim {

struct AggregationWeights {
    std::vector<double> alphas;

    static AggregationWeights uniform(int n) {
        AggregationWeights w;
        w.alphas.assign(static_cast<std::size_t>(n), 1.0 / n);
        return w;
    }
};

// Convex combination of parameter blocks (and batchnorm running stats).
Model average_models(const std::vector<Model>& models,
                     const AggregationWeights& weights);

// Index of the highest-accuracy model on the selection set; ties go to the
// lower device index.
int best_model_index(const std::vector<Model>& models, const Dataset& selection,
                     const ExperimentConfig& cfg);

struct MixOutcome {
    Model model;
    bool chose_average = false;
    int best_index = -1;
    double acc_average = 0.0;
    double acc_best = 0.0;
};
MixOutcome mixed_aggregate(const std::vector<Model>& models,
                           const Dataset& selection, const ExperimentConfig& cfg);

// W = W0 + beta * sum_i alpha_i * d_i, where d_i is the descent direction
// derived from device i's loss gradients.
Model aggregate_gradients(const Model& w0, const std::vector<GradientSet>& grads,
                          const AggregationWeights& weights, float beta);

// E passes over the chunk in seeded mini-batches; mutates the model.
void local_train(Model& model, const Dataset& chunk, int epochs,
                 const ExperimentConfig& cfg, std::uint64_t seed);

// Server warm-up on m IID items; returns the shared starting model.
Model train_initial(const Dataset& server_data, const ExperimentConfig& cfg);

struct RoundRecord {
    int round = 0;
    std::vector<MetricsRow> rows;      // devices then ensemble
    int acquisitions_consumed = 0;
    std::string strategy_chosen;       // "ave" / "opt:<i>" for mixed rounds
};

struct RunResult {
    std::vector<RoundRecord> rounds;
    Model final_ensemble;
    std::vector<Model> final_devices;
    std::vector<MetricsRow> all_rows() const;
};

// Called after each round's aggregation and evaluation with the fresh record
// and models; used for checkpoint writing and progress logging.
using CheckpointSink = std::function<void(
    const RoundRecord& record, const std::vector<Model>& devices, const Model& ensemble)>;

RunResult run_label_sharded(const ExperimentConfig& cfg, const Dataset& train,
                            const Dataset& test, const CheckpointSink& sink = {});

RunResult run_active_sampling(const ExperimentConfig& cfg, const Dataset& train,
                              const Dataset& test, bool random_acquisition,
                              const CheckpointSink& sink = {});

struct SequentialResult {
    double final_accuracy = 0.0;
    std::vector<int> per_class;
    Model final_model;
};
SequentialResult run_sequential_baseline(const ExperimentConfig& cfg,
                                         const Dataset& train, const Dataset& test);

RunResult run_experiment(const ExperimentConfig& cfg, const Dataset& train,
                         const Dataset& test, const CheckpointSink& sink = {});

}  // namespace flsim
