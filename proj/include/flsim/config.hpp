#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

namespace flsim {

// Raised for user-facing input problems (configs, CLI arguments); the CLI
// maps it to exit code 1.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Regime { LabelSharded, ActiveSampling, SequentialBaseline };
enum class Strategy { Average, BestDevice, Mixed };
enum class AggregateMode { Weights, Gradients };
enum class SelectionEval { Deterministic, Stochastic };
enum class Acquisition { Entropy, Random };

struct ExperimentConfig {
    Regime regime = Regime::LabelSharded;
    int devices = 4;
    int epochs = 45;              // E: passes over the local chunk
    int frequency = 10;           // F: aggregation events over the budget
    int acquisitions = 10;        // A: total acquisitions per device
    int acquisition_size = 400;   // k: items per acquisition
    int batch_size = 50;
    float lr = 0.01f;
    float lambda = 1e-4f;
    int mc_passes = 16;           // r: stochastic passes per prediction
    Strategy strategy = Strategy::Average;
    AggregateMode aggregate_mode = AggregateMode::Weights;
    bool batchnorm = false;
    std::uint64_t seed = 1;
    int initial_train_size = 400; // m: server warm-up sample
    int pool_size = 4000;
    int replay_per_class = 5;
    bool use_test_for_selection = false;
    SelectionEval selection_eval = SelectionEval::Deterministic;
    Acquisition acquisition = Acquisition::Entropy;
    int eval_subset = 0;          // 0 = full test set on every round
    std::string out_dir;          // empty = derived from settings

    int acquisitions_per_round() const { return acquisitions / frequency; }
    std::string canonical_name() const;
};

// Flat key=value format, one pair per line or comma-separated; '#' comments.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);
std::map<std::string, std::string> config_to_map(const ExperimentConfig& c);

std::string to_string(Regime r);
std::string to_string(Strategy s);
std::string to_string(AggregateMode m);
std::string to_string(SelectionEval e);
std::string to_string(Acquisition a);

}  // namespace flsim
