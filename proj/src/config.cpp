#include "flsim/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace flsim {

std::string to_string(Regime r) {
    switch (r) {
        case Regime::LabelSharded: return "type1";
        case Regime::ActiveSampling: return "type2";
        case Regime::SequentialBaseline: return "sequential-baseline";
    }
    return "?";
}

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::Average: return "ave";
        case Strategy::BestDevice: return "opt";
        case Strategy::Mixed: return "mix";
    }
    return "?";
}

std::string to_string(AggregateMode m) {
    return m == AggregateMode::Weights ? "weights" : "gradients";
}

std::string to_string(SelectionEval e) {
    return e == SelectionEval::Deterministic ? "eval" : "mc";
}

std::string to_string(Acquisition a) {
    return a == Acquisition::Entropy ? "entropy" : "random";
}

std::string ExperimentConfig::canonical_name() const {
    std::string n = to_string(regime) + "_E" + std::to_string(epochs) + "F" +
                    std::to_string(frequency) + "A" + std::to_string(acquisitions) +
                    "_" + to_string(strategy) + "_s" + std::to_string(seed);
    if (batchnorm) n += "_bn";
    if (regime == Regime::ActiveSampling) {
        n += "_p" + std::to_string(pool_size);
        if (acquisition == Acquisition::Random) n += "_rnd";
    }
    return n;
}

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

int parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long x = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return static_cast<int>(x);
    } catch (...) {
        throw ValidationError("config: invalid integer for key '" + key + "': " + v);
    }
}

float parse_float(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const float x = std::stof(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (...) {
        throw ValidationError("config: invalid number for key '" + key + "': " + v);
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ValidationError("config: invalid boolean for key '" + key + "': " + v);
}

void validate(const ExperimentConfig& c) {
    auto bad = [](const std::string& msg) { throw ValidationError("config: " + msg); };
    if (c.devices < 1) bad("devices must be >= 1");
    if (c.epochs < 0) bad("epochs must be >= 0");
    if (c.frequency < 1) bad("frequency must be >= 1");
    if (c.acquisitions < 1) bad("acquisitions must be >= 1");
    if (c.acquisitions % c.frequency != 0)
        bad("frequency must divide acquisitions (frequency=" +
            std::to_string(c.frequency) + ", acquisitions=" +
            std::to_string(c.acquisitions) + ")");
    if (c.acquisition_size < 0) bad("acquisition_size must be >= 0");
    if (c.batch_size < 1) bad("batch_size must be >= 1");
    if (!(c.lr > 0.0f)) bad("lr must be positive");
    if (c.lambda < 0.0f) bad("lambda must be >= 0");
    if (c.mc_passes < 1) bad("mc_passes must be >= 1");
    if (c.initial_train_size < 0) bad("initial_train_size must be >= 0");
    if (c.pool_size < 0) bad("pool_size must be >= 0");
    if (c.replay_per_class < 0) bad("replay_per_class must be >= 0");
    if (c.eval_subset < 0) bad("eval_subset must be >= 0");
    if (c.regime == Regime::ActiveSampling &&
        c.acquisitions * c.acquisition_size > c.pool_size)
        bad("pool_size " + std::to_string(c.pool_size) +
            " cannot cover acquisitions*acquisition_size = " +
            std::to_string(c.acquisitions * c.acquisition_size));
    if (c.aggregate_mode == AggregateMode::Gradients) {
        if (c.strategy != Strategy::Average)
            bad("aggregate_mode=gradients requires strategy=ave");
        if (c.regime != Regime::LabelSharded)
            bad("aggregate_mode=gradients requires regime=type1");
    }
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig c;
    std::vector<std::string> entries;
    std::string line;
    std::istringstream ls(text);
    while (std::getline(ls, line)) {
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream es(line);
        std::string entry;
        while (std::getline(es, entry, ',')) {
            entry = trim(entry);
            if (!entry.empty()) entries.push_back(entry);
        }
    }

    for (const std::string& e : entries) {
        const std::size_t eq = e.find('=');
        if (eq == std::string::npos)
            throw ValidationError("config: expected key=value, got '" + e + "'");
        const std::string key = trim(e.substr(0, eq));
        const std::string val = trim(e.substr(eq + 1));
        if (key.empty() || val.empty())
            throw ValidationError("config: empty key or value in '" + e + "'");

        if (key == "regime") {
            if (val == "type1") c.regime = Regime::LabelSharded;
            else if (val == "type2") c.regime = Regime::ActiveSampling;
            else if (val == "sequential-baseline") c.regime = Regime::SequentialBaseline;
            else throw ValidationError("config: invalid regime '" + val + "'");
        } else if (key == "devices") c.devices = parse_int(key, val);
        else if (key == "epochs") c.epochs = parse_int(key, val);
        else if (key == "frequency") c.frequency = parse_int(key, val);
        else if (key == "acquisitions") c.acquisitions = parse_int(key, val);
        else if (key == "acquisition_size") c.acquisition_size = parse_int(key, val);
        else if (key == "batch_size") c.batch_size = parse_int(key, val);
        else if (key == "lr") c.lr = parse_float(key, val);
        else if (key == "lambda") c.lambda = parse_float(key, val);
        else if (key == "mc_passes") c.mc_passes = parse_int(key, val);
        else if (key == "strategy") {
            if (val == "ave") c.strategy = Strategy::Average;
            else if (val == "opt") c.strategy = Strategy::BestDevice;
            else if (val == "mix") c.strategy = Strategy::Mixed;
            else throw ValidationError("config: invalid strategy '" + val + "'");
        } else if (key == "aggregate_mode") {
            if (val == "weights") c.aggregate_mode = AggregateMode::Weights;
            else if (val == "gradients") c.aggregate_mode = AggregateMode::Gradients;
            else throw ValidationError("config: invalid aggregate_mode '" + val + "'");
        } else if (key == "batchnorm") c.batchnorm = parse_bool(key, val);
        else if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_int(key, val));
        else if (key == "initial_train_size") c.initial_train_size = parse_int(key, val);
        else if (key == "pool_size") c.pool_size = parse_int(key, val);
        else if (key == "replay_per_class") c.replay_per_class = parse_int(key, val);
        else if (key == "use_test_for_selection") c.use_test_for_selection = parse_bool(key, val);
        else if (key == "selection_eval") {
            if (val == "eval") c.selection_eval = SelectionEval::Deterministic;
            else if (val == "mc") c.selection_eval = SelectionEval::Stochastic;
            else throw ValidationError("config: invalid selection_eval '" + val + "'");
        } else if (key == "acquisition") {
            if (val == "entropy") c.acquisition = Acquisition::Entropy;
            else if (val == "random") c.acquisition = Acquisition::Random;
            else throw ValidationError("config: invalid acquisition '" + val + "'");
        } else if (key == "eval_subset") c.eval_subset = parse_int(key, val);
        else if (key == "out") c.out_dir = val;
        else throw ValidationError("config: unknown key '" + key + "'");
    }

    validate(c);
    return c;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str());
}

std::map<std::string, std::string> config_to_map(const ExperimentConfig& c) {
    auto fmt_f = [](float v) {
        std::ostringstream os;
        os << v;
        return os.str();
    };
    return {
        {"regime", to_string(c.regime)},
        {"devices", std::to_string(c.devices)},
        {"epochs", std::to_string(c.epochs)},
        {"frequency", std::to_string(c.frequency)},
        {"acquisitions", std::to_string(c.acquisitions)},
        {"acquisition_size", std::to_string(c.acquisition_size)},
        {"batch_size", std::to_string(c.batch_size)},
        {"lr", fmt_f(c.lr)},
        {"lambda", fmt_f(c.lambda)},
        {"mc_passes", std::to_string(c.mc_passes)},
        {"strategy", to_string(c.strategy)},
        {"aggregate_mode", to_string(c.aggregate_mode)},
        {"batchnorm", c.batchnorm ? "true" : "false"},
        {"seed", std::to_string(c.seed)},
        {"initial_train_size", std::to_string(c.initial_train_size)},
        {"pool_size", std::to_string(c.pool_size)},
        {"replay_per_class", std::to_string(c.replay_per_class)},
        {"use_test_for_selection", c.use_test_for_selection ? "true" : "false"},
        {"selection_eval", to_string(c.selection_eval)},
        {"acquisition", to_string(c.acquisition)},
        {"eval_subset", std::to_string(c.eval_subset)},
        {"out", c.out_dir},
    };
}

}  // namespace flsim
