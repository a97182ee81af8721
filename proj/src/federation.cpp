#include "flsim/federation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "flsim/rng.hpp"

namespace flsim {

namespace {

using rng::derive;
using rng::tag;

constexpr auto kTagInit = tag("model-init");
constexpr auto kTagInitSample = tag("initial-sample");
constexpr auto kTagInitTrain = tag("initial-train");
constexpr auto kTagValidation = tag("validation");
constexpr auto kTagSample = tag("shard-sample");
constexpr auto kTagTrain = tag("local-train");
constexpr auto kTagShuffle = tag("epoch-shuffle");
constexpr auto kTagMask = tag("dropout-mask");
constexpr auto kTagQuarters = tag("quarters");
constexpr auto kTagPool = tag("pool");
constexpr auto kTagReplay = tag("replay");
constexpr auto kTagAcquire = tag("acquire");
constexpr auto kTagEval = tag("eval-subset");
constexpr auto kTagSelect = tag("selection");

double eval_accuracy(const Model& m, const Dataset& d, const ExperimentConfig& cfg) {
    if (cfg.selection_eval == SelectionEval::Deterministic) return accuracy(m, d);
    const PredictiveDistribution dist =
        mc_predict(m, d.images, cfg.mc_passes, derive(cfg.seed, kTagSelect));
    const int classes = dist.mean_probs.dim(1);
    int correct = 0;
    for (int i = 0; i < d.size(); ++i) {
        const float* p = dist.mean_probs.ptr() + static_cast<std::size_t>(i) * classes;
        int best = 0;
        for (int c = 1; c < classes; ++c)
            if (p[c] > p[best]) best = c;
        correct += best == d.labels[static_cast<std::size_t>(i)];
    }
    return static_cast<double>(correct) / d.size();
}

}  // namespace

Model average_models(const std::vector<Model>& models,
                     const AggregationWeights& weights) {
    if (models.empty())
        throw std::invalid_argument("aggregate: empty model list");
    if (weights.alphas.size() != models.size())
        throw std::invalid_argument("aggregate: weight count mismatch");
    double sum = 0.0;
    for (double a : weights.alphas) {
        if (a < 0.0) throw std::invalid_argument("aggregate: negative weight");
        sum += a;
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw std::invalid_argument("aggregate: weights sum to " +
                                    std::to_string(sum) + ", expected 1");
    for (std::size_t i = 1; i < models.size(); ++i)
        if (!congruent(models[0], models[i]))
            throw std::invalid_argument("aggregate: model " + std::to_string(i) +
                                        " is not shape-congruent");

    Model out = models[0];
    for (std::size_t b = 0; b < out.params.size(); ++b) {
        const std::size_t m = out.params[b].numel();
        for (std::size_t e = 0; e < m; ++e) {
            double acc = 0.0;
            for (std::size_t i = 0; i < models.size(); ++i)
                acc += weights.alphas[i] * models[i].params[b].data[e];
            out.params[b].data[e] = static_cast<float>(acc);
        }
    }
    for (std::size_t s = 0; s < out.bn_running.size(); ++s) {
        for (std::size_t e = 0; e < out.bn_running[s].mean.numel(); ++e) {
            double am = 0.0, av = 0.0;
            for (std::size_t i = 0; i < models.size(); ++i) {
                am += weights.alphas[i] * models[i].bn_running[s].mean.data[e];
                av += weights.alphas[i] * models[i].bn_running[s].var.data[e];
            }
            out.bn_running[s].mean.data[e] = static_cast<float>(am);
            out.bn_running[s].var.data[e] = static_cast<float>(av);
        }
    }
    return out;
}

int best_model_index(const std::vector<Model>& models, const Dataset& selection,
                     const ExperimentConfig& cfg) {
    if (models.empty())
        throw std::invalid_argument("aggregate: empty model list");
    if (selection.size() == 0)
        throw std::invalid_argument("aggregate: empty selection set");
    int best = 0;
    double best_acc = -1.0;
    for (std::size_t i = 0; i < models.size(); ++i) {
        const double a = eval_accuracy(models[i], selection, cfg);
        if (a > best_acc) {
            best_acc = a;
            best = static_cast<int>(i);
        }
    }
    return best;
}

MixOutcome mixed_aggregate(const std::vector<Model>& models,
                           const Dataset& selection, const ExperimentConfig& cfg) {
    MixOutcome out;
    Model ave = average_models(models, AggregationWeights::uniform(
                                           static_cast<int>(models.size())));
    out.best_index = best_model_index(models, selection, cfg);
    out.acc_average = eval_accuracy(ave, selection, cfg);
    out.acc_best =
        eval_accuracy(models[static_cast<std::size_t>(out.best_index)], selection, cfg);
    out.chose_average = out.acc_average >= out.acc_best;
    out.model = out.chose_average
                    ? std::move(ave)
                    : models[static_cast<std::size_t>(out.best_index)];
    return out;
}

Model aggregate_gradients(const Model& w0, const std::vector<GradientSet>& grads,
                          const AggregationWeights& weights, float beta) {
    if (grads.empty())
        throw std::invalid_argument("aggregate: empty gradient list");
    if (weights.alphas.size() != grads.size())
        throw std::invalid_argument("aggregate: weight count mismatch");
    for (const GradientSet& g : grads) {
        if (g.grads.size() != w0.params.size())
            throw std::invalid_argument("aggregate: gradient block count mismatch");
        for (std::size_t b = 0; b < g.grads.size(); ++b)
            if (!g.grads[b].same_shape(w0.params[b]))
                throw std::invalid_argument("aggregate: gradient shape mismatch");
    }
    Model out = w0;
    for (std::size_t b = 0; b < out.params.size(); ++b) {
        const std::size_t m = out.params[b].numel();
        for (std::size_t e = 0; e < m; ++e) {
            // descent direction: the negated loss gradient
            double acc = 0.0;
            for (std::size_t i = 0; i < grads.size(); ++i)
                acc -= weights.alphas[i] * grads[i].grads[b].data[e];
            out.params[b].data[e] =
                static_cast<float>(w0.params[b].data[e] + beta * acc);
        }
    }
    return out;
}

void local_train(Model& model, const Dataset& chunk, int epochs,
                 const ExperimentConfig& cfg, std::uint64_t seed) {
    if (chunk.size() == 0)
        throw std::invalid_argument("local_train: empty chunk");
    const int n = chunk.size();
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int e = 0; e < epochs; ++e) {
        for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
        rng::Stream shuffle_rs(derive(seed, kTagShuffle, e));
        rng::shuffle(order, shuffle_rs);
        int batch_no = 0;
        for (int start = 0; start < n; start += cfg.batch_size, ++batch_no) {
            const int bsz = std::min(cfg.batch_size, n - start);
            const std::vector<int> idx(order.begin() + start,
                                       order.begin() + start + bsz);
            const Dataset batch = subset(chunk, idx);
            const ForwardTrace trace =
                forward(model, batch.images,
                        ForwardMode::training(derive(seed, kTagMask, e, batch_no)));
            if (!model.bn_running.empty())
                update_bn_running(model, trace, kBnMomentum);
            const GradientSet grads = backward(model, trace, batch.labels);
            sgd_step(model, grads, cfg.lr, cfg.lambda);
        }
    }
}

Model train_initial(const Dataset& server_data, const ExperimentConfig& cfg) {
    Model model = init_model(default_architecture(cfg.batchnorm),
                             derive(cfg.seed, kTagInit));
    if (cfg.epochs > 0 && server_data.size() > 0)
        local_train(model, server_data, cfg.epochs, cfg,
                    derive(cfg.seed, kTagInitTrain));
    return model;
}

std::vector<MetricsRow> RunResult::all_rows() const {
    std::vector<MetricsRow> rows;
    for (const RoundRecord& r : rounds)
        rows.insert(rows.end(), r.rows.begin(), r.rows.end());
    return rows;
}

namespace {

struct EvalSets {
    Dataset subset_eval;  // used on intermediate rounds when eval_subset > 0
    const Dataset* full = nullptr;

    const Dataset& for_round(int round, int last_round) const {
        if (round == last_round || subset_eval.size() == 0) return *full;
        return subset_eval;
    }
};

EvalSets make_eval_sets(const ExperimentConfig& cfg, const Dataset& test) {
    EvalSets ev;
    ev.full = &test;
    if (cfg.eval_subset > 0) {
        const int per_class = std::max(1, cfg.eval_subset / 10);
        ev.subset_eval =
            sample_stratified(test, per_class, derive(cfg.seed, kTagEval));
    }
    return ev;
}

// Selection data for opt/mix plus the shard/pool source. The validation
// split is carved out of train so model selection never sees training or
// test items; use_test_for_selection restores the protocol that selects
// directly on the test set.
struct SelectionSplit {
    Dataset selection;
    Dataset remainder;
    const Dataset* shard_source = nullptr;
};

SelectionSplit make_selection_split(const ExperimentConfig& cfg,
                                    const Dataset& train, const Dataset& test) {
    SelectionSplit sp;
    if (cfg.strategy == Strategy::Average) {
        sp.shard_source = &train;
        return sp;
    }
    if (cfg.use_test_for_selection) {
        sp.selection = test;
        sp.shard_source = &train;
        return sp;
    }
    const std::vector<int> vi =
        stratified_indices(train, 500, derive(cfg.seed, kTagValidation));
    std::vector<std::uint8_t> in_val(static_cast<std::size_t>(train.size()), 0);
    for (int i : vi) in_val[static_cast<std::size_t>(i)] = 1;
    std::vector<int> rest;
    rest.reserve(static_cast<std::size_t>(train.size()) - vi.size());
    for (int i = 0; i < train.size(); ++i)
        if (!in_val[static_cast<std::size_t>(i)]) rest.push_back(i);
    sp.selection = subset(train, vi);
    sp.remainder = subset(train, rest);
    sp.shard_source = &sp.remainder;
    return sp;
}

RoundRecord make_round_record(int round, const std::vector<Model>& devices,
                              const Model& ensemble, const Dataset& eval_set,
                              int acq_consumed, const std::string& strategy_chosen) {
    RoundRecord rec;
    rec.round = round;
    rec.acquisitions_consumed = acq_consumed;
    rec.strategy_chosen = strategy_chosen;
    for (std::size_t i = 0; i < devices.size(); ++i) {
        const EvalReport er = evaluate(devices[i], eval_set);
        MetricsRow row;
        row.round = round;
        row.model_id = "d" + std::to_string(i + 1);
        row.acc = er.acc;
        row.per_class = er.per_class;
        row.divergence = layer_divergence(devices[i], ensemble);
        rec.rows.push_back(std::move(row));
    }
    const EvalReport er = evaluate(ensemble, eval_set);
    MetricsRow row;
    row.round = round;
    row.model_id = "ensemble";
    row.acc = er.acc;
    row.per_class = er.per_class;
    row.divergence = layer_divergence(ensemble, ensemble);
    rec.rows.push_back(std::move(row));
    return rec;
}

Model aggregate_round(const ExperimentConfig& cfg, const std::vector<Model>& trained,
                      const Dataset& selection, std::string& strategy_chosen) {
    switch (cfg.strategy) {
        case Strategy::Average:
            strategy_chosen = "ave";
            return average_models(trained, AggregationWeights::uniform(cfg.devices));
        case Strategy::BestDevice: {
            const int best = best_model_index(trained, selection, cfg);
            strategy_chosen = "opt:" + std::to_string(best + 1);
            return trained[static_cast<std::size_t>(best)];
        }
        case Strategy::Mixed: {
            MixOutcome mo = mixed_aggregate(trained, selection, cfg);
            strategy_chosen = mo.chose_average
                                  ? "mix->ave"
                                  : "mix->opt:" + std::to_string(mo.best_index + 1);
            return std::move(mo.model);
        }
    }
    throw std::logic_error("unreachable");
}

}  // namespace

RunResult run_label_sharded(const ExperimentConfig& cfg, const Dataset& train,
                            const Dataset& test, const CheckpointSink& sink) {
    if (cfg.regime != Regime::LabelSharded)
        throw ValidationError("run: config regime is not type1");

    const SelectionSplit split = make_selection_split(cfg, train, test);
    const EvalSets ev = make_eval_sets(cfg, test);

    std::vector<std::set<int>> assignment;
    if (cfg.devices == 4) {
        assignment = default_class_assignment();
    } else {
        assignment.resize(static_cast<std::size_t>(cfg.devices));
        for (int c = 0; c < 10; ++c)
            assignment[static_cast<std::size_t>(c % cfg.devices)].insert(c);
    }
    const std::vector<Shard> shards = partition_by_class(*split.shard_source, assignment);

    Model global = train_initial(
        sample_uniform(train, cfg.initial_train_size, derive(cfg.seed, kTagInitSample)),
        cfg);

    RunResult res;
    {
        const std::vector<Model> devices(static_cast<std::size_t>(cfg.devices), global);
        RoundRecord rec = make_round_record(0, devices, global,
                                            ev.for_round(0, cfg.frequency), 0, "none");
        if (sink) sink(rec, devices, global);
        res.rounds.push_back(std::move(rec));
    }

    const int per_round = cfg.acquisitions_per_round();
    for (int round = 1; round <= cfg.frequency; ++round) {
        std::vector<Model> trained;
        trained.reserve(static_cast<std::size_t>(cfg.devices));
        std::vector<GradientSet> grads;

        for (int dev = 0; dev < cfg.devices; ++dev) {
            Dataset chunk;
            for (int a = 0; a < per_round; ++a) {
                chunk = concat(chunk, sample_from_shard(
                                          shards[static_cast<std::size_t>(dev)],
                                          cfg.acquisition_size,
                                          derive(cfg.seed, kTagSample, dev, round, a)));
            }
            Model local = global;
            if (cfg.aggregate_mode == AggregateMode::Weights) {
                local_train(local, chunk, cfg.epochs, cfg,
                            derive(cfg.seed, kTagTrain, dev, round));
            } else {
                // One-batch gradient from the shared broadcast model.
                const int bsz = std::min(cfg.batch_size, chunk.size());
                std::vector<int> idx(static_cast<std::size_t>(bsz));
                for (int i = 0; i < bsz; ++i) idx[static_cast<std::size_t>(i)] = i;
                const Dataset batch = subset(chunk, idx);
                const ForwardTrace trace = forward(
                    local, batch.images,
                    ForwardMode::training(derive(cfg.seed, kTagMask, dev, round)));
                grads.push_back(backward(local, trace, batch.labels));
            }
            trained.push_back(std::move(local));
        }

        std::string strategy_chosen;
        Model ensemble =
            cfg.aggregate_mode == AggregateMode::Weights
                ? aggregate_round(cfg, trained, split.selection, strategy_chosen)
                : aggregate_gradients(global, grads,
                                      AggregationWeights::uniform(cfg.devices),
                                      cfg.lr);
        if (cfg.aggregate_mode == AggregateMode::Gradients) strategy_chosen = "grad-ave";

        RoundRecord rec =
            make_round_record(round, trained, ensemble,
                              ev.for_round(round, cfg.frequency),
                              per_round, strategy_chosen);
        if (sink) sink(rec, trained, ensemble);
        res.rounds.push_back(std::move(rec));

        global = std::move(ensemble);
        if (round == cfg.frequency) {
            res.final_devices = std::move(trained);
        }
    }
    res.final_ensemble = std::move(global);
    return res;
}

RunResult run_active_sampling(const ExperimentConfig& cfg, const Dataset& train,
                              const Dataset& test, bool random_acquisition,
                              const CheckpointSink& sink) {
    if (cfg.regime != Regime::ActiveSampling)
        throw ValidationError("run: config regime is not type2");

    const SelectionSplit split = make_selection_split(cfg, train, test);
    const EvalSets ev = make_eval_sets(cfg, test);

    const std::vector<Dataset> quarters =
        deal_parts(*split.shard_source, cfg.devices, derive(cfg.seed, kTagQuarters));
    std::vector<Pool> pools;
    pools.reserve(static_cast<std::size_t>(cfg.devices));
    for (int dev = 0; dev < cfg.devices; ++dev)
        pools.push_back(build_pool(quarters[static_cast<std::size_t>(dev)],
                                   cfg.pool_size, derive(cfg.seed, kTagPool, dev), dev));
    const ReplayBuffer replay =
        build_replay(train, cfg.replay_per_class, derive(cfg.seed, kTagReplay));

    Model global = train_initial(
        sample_uniform(train, cfg.initial_train_size, derive(cfg.seed, kTagInitSample)),
        cfg);

    RunResult res;
    {
        const std::vector<Model> devices(static_cast<std::size_t>(cfg.devices), global);
        RoundRecord rec = make_round_record(0, devices, global,
                                            ev.for_round(0, cfg.frequency), 0, "none");
        if (sink) sink(rec, devices, global);
        res.rounds.push_back(std::move(rec));
    }

    const int per_round = cfg.acquisitions_per_round();
    for (int round = 1; round <= cfg.frequency; ++round) {
        std::vector<Model> trained;
        trained.reserve(static_cast<std::size_t>(cfg.devices));

        for (int dev = 0; dev < cfg.devices; ++dev) {
            Model local = global;
            for (int a = 0; a < per_round; ++a) {
                if (cfg.acquisition_size == 0) break;
                const std::uint64_t acq_seed = derive(cfg.seed, kTagAcquire, dev, round, a);
                AcquisitionResult acq =
                    random_acquisition
                        ? acquire_random(local, pools[static_cast<std::size_t>(dev)],
                                         cfg.acquisition_size, cfg.mc_passes, acq_seed)
                        : acquire_topk(local, pools[static_cast<std::size_t>(dev)],
                                       cfg.acquisition_size, cfg.mc_passes, acq_seed);
                // train on the fresh batch plus the shared replay set, then
                // drop the batch
                const Dataset chunk = concat(acq.selected, replay.data);
                local_train(local, chunk, cfg.epochs, cfg,
                            derive(cfg.seed, kTagTrain, dev, round, a));
            }
            trained.push_back(std::move(local));
        }

        std::string strategy_chosen;
        Model ensemble = aggregate_round(cfg, trained, split.selection, strategy_chosen);

        RoundRecord rec =
            make_round_record(round, trained, ensemble,
                              ev.for_round(round, cfg.frequency),
                              cfg.acquisition_size == 0 ? 0 : per_round,
                              strategy_chosen);
        if (sink) sink(rec, trained, ensemble);
        res.rounds.push_back(std::move(rec));

        global = std::move(ensemble);
        if (round == cfg.frequency) res.final_devices = std::move(trained);
    }
    res.final_ensemble = std::move(global);
    return res;
}

SequentialResult run_sequential_baseline(const ExperimentConfig& cfg,
                                         const Dataset& train, const Dataset& test) {
    if (cfg.regime != Regime::SequentialBaseline)
        throw ValidationError("run: config regime is not sequential-baseline");

    const std::vector<Shard> shards =
        partition_by_class(train, default_class_assignment());

    Model model =
        init_model(default_architecture(cfg.batchnorm), derive(cfg.seed, kTagInit));
    for (std::size_t stage = 0; stage < shards.size(); ++stage) {
        for (int a = 0; a < cfg.acquisitions; ++a) {
            const Dataset chunk = sample_from_shard(
                shards[stage], cfg.acquisition_size,
                derive(cfg.seed, kTagSample, stage, a));
            local_train(model, chunk, cfg.epochs, cfg,
                        derive(cfg.seed, kTagTrain, stage, a));
        }
    }

    SequentialResult res;
    const EvalReport er = evaluate(model, test);
    res.final_accuracy = er.acc;
    res.per_class = er.per_class;
    res.final_model = std::move(model);
    return res;
}

RunResult run_experiment(const ExperimentConfig& cfg, const Dataset& train,
                         const Dataset& test, const CheckpointSink& sink) {
    switch (cfg.regime) {
        case Regime::LabelSharded:
            return run_label_sharded(cfg, train, test, sink);
        case Regime::ActiveSampling:
            return run_active_sampling(cfg, train, test,
                                       cfg.acquisition == Acquisition::Random, sink);
        case Regime::SequentialBaseline:
            throw ValidationError("run: sequential-baseline has a dedicated entry point");
    }
    throw std::logic_error("unreachable");
}

}  // namespace flsim
