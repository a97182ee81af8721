#include <omp.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "CLI11.hpp"
#include "flsim/analytics.hpp"
#include "flsim/checkpoint.hpp"
#include "flsim/config.hpp"
#include "flsim/federation.hpp"
#include "flsim/fetch.hpp"
#include "flsim/manifest.hpp"
#include "flsim/verify.hpp"

namespace fs = std::filesystem;
using namespace flsim;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string default_data_dir() {
    const char* env = std::getenv("FLSIM_DATA_DIR");
    return env && *env ? env : "data";
}

std::string to_hex(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

struct LoadedData {
    Dataset train, test;
    DataPaths paths;
};

LoadedData load_dataset(const std::string& data_dir) {
    LoadedData d;
    d.paths = locate_dataset(data_dir);
    d.train = load_idx(d.paths.train_images, d.paths.train_labels);
    d.test = load_idx(d.paths.test_images, d.paths.test_labels);
    return d;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::trunc | std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << text;
}

int cmd_run(const std::string& config_path, const std::string& data_dir,
            const std::string& out_override) {
    ExperimentConfig cfg = parse_config_file(config_path);
    if (!out_override.empty()) cfg.out_dir = out_override;

    const LoadedData data = load_dataset(data_dir);

    const fs::path run_dir =
        cfg.out_dir.empty() ? fs::path("runs") / cfg.canonical_name() : fs::path(cfg.out_dir);
    fs::create_directories(run_dir);

    RunManifest man;
    man.tool_version = kVersion;
    man.config = config_to_map(cfg);
    man.started_utc = utc_timestamp();
    for (const std::string& p : {data.paths.train_images, data.paths.train_labels,
                                 data.paths.test_images, data.paths.test_labels})
        man.dataset_checksums[p] = to_hex(fnv64_file(p));

    if (cfg.regime == Regime::SequentialBaseline) {
        const SequentialResult res = run_sequential_baseline(cfg, data.train, data.test);
        MetricsRow row;
        row.round = cfg.acquisitions * 4;
        row.model_id = "sequential";
        row.acc = res.final_accuracy;
        row.per_class = res.per_class;
        const std::string csv = metrics_csv({row});
        write_text(run_dir / "metrics.csv", csv);
        const std::string ckpt = (run_dir / "ckpt_final_sequential.flck").string();
        write_checkpoint(ckpt, res.final_model);
        man.checkpoints.push_back({{"sequential", ckpt}});
        man.metrics_csv = (run_dir / "metrics.csv").string();
        man.finished_utc = utc_timestamp();
        write_manifest((run_dir / "manifest.json").string(), man);
        std::printf("final_accuracy=%.6f\n", res.final_accuracy);
        return 0;
    }

    CheckpointSink sink = [&](const RoundRecord& rec, const std::vector<Model>& devices,
                              const Model& ensemble) {
        std::map<std::string, std::string> paths;
        for (std::size_t i = 0; i < devices.size(); ++i) {
            const std::string p =
                (run_dir / ("ckpt_r" + std::to_string(rec.round) + "_d" +
                            std::to_string(i + 1) + ".flck"))
                    .string();
            write_checkpoint(p, devices[i]);
            paths["d" + std::to_string(i + 1)] = p;
        }
        const std::string p =
            (run_dir / ("ckpt_r" + std::to_string(rec.round) + "_ensemble.flck")).string();
        write_checkpoint(p, ensemble);
        paths["ensemble"] = p;
        man.checkpoints.push_back(std::move(paths));
        man.round_strategies.push_back(rec.strategy_chosen);
        man.round_acquisitions.push_back(rec.acquisitions_consumed);
        std::fprintf(stderr, "[%s] round %d/%d ensemble_acc=%.4f (%s)\n",
                     cfg.canonical_name().c_str(), rec.round, cfg.frequency,
                     rec.rows.back().acc, rec.strategy_chosen.c_str());
    };

    const RunResult res = run_experiment(cfg, data.train, data.test, sink);

    write_text(run_dir / "metrics.csv", metrics_csv(res.all_rows()));
    man.metrics_csv = (run_dir / "metrics.csv").string();
    man.finished_utc = utc_timestamp();
    write_manifest((run_dir / "manifest.json").string(), man);
    std::printf("final_ensemble_accuracy=%.6f\n", res.rounds.back().rows.back().acc);
    return 0;
}

int cmd_verify() {
    const std::vector<CheckResult> results = run_verification();
    for (const CheckResult& r : results)
        std::printf("[%s] %s%s%s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                    r.detail.empty() ? "" : ": ", r.detail.c_str());
    if (!all_passed(results)) {
        std::fprintf(stderr, "verification failed\n");
        return 3;
    }
    std::printf("all checks passed\n");
    return 0;
}

int cmd_analyze(const std::string& manifest_path, const std::string& data_dir,
                int heatmap_class) {
    const RunManifest man = read_manifest(manifest_path);
    const ExperimentConfig cfg = man.resolved_config();
    const std::vector<LayerSpec> specs = default_architecture(cfg.batchnorm);

    const fs::path out_dir = fs::path(manifest_path).parent_path() / "analysis";
    fs::create_directories(out_dir);

    // recomputed per-round divergence from the stored checkpoints
    std::string div_csv = "round,model_id,block,divergence\n";
    for (std::size_t round = 0; round < man.checkpoints.size(); ++round) {
        const auto& paths = man.checkpoints[round];
        const auto ens_it = paths.find("ensemble");
        if (ens_it == paths.end()) continue;
        const Model ensemble = model_from_checkpoint(ens_it->second, specs);
        for (const auto& [id, path] : paths) {
            if (id == "ensemble") continue;
            const Model dev = model_from_checkpoint(path, specs);
            const DivergenceReport rep = layer_divergence(dev, ensemble);
            for (std::size_t b = 0; b < rep.values.size(); ++b) {
                char buf[64];
                std::snprintf(buf, sizeof(buf), "%.6f", rep.values[b]);
                div_csv += std::to_string(round) + "," + id + "," +
                           rep.block_names[b] + "," +
                           (rep.defined[b] ? buf : "undef") + "\n";
            }
        }
    }
    write_text(out_dir / "divergence.csv", div_csv);

    if (man.checkpoints.empty()) {
        std::fprintf(stderr, "analyze: manifest lists no checkpoints\n");
        return 2;
    }

    const LoadedData data = load_dataset(data_dir);

    // final-round histograms and class-conditional activation heatmaps
    const auto& final_paths = man.checkpoints.back();
    std::string hist_csv = "model_id";
    for (int c = 0; c < 10; ++c) hist_csv += ",correct_" + std::to_string(c);
    hist_csv += "\n";

    std::vector<int> class_rows;
    for (int i = 0; i < data.test.size() && static_cast<int>(class_rows.size()) < 10; ++i)
        if (data.test.labels[static_cast<std::size_t>(i)] == heatmap_class)
            class_rows.push_back(i);
    const Dataset heat_samples = subset(data.test, class_rows);

    for (const auto& [id, path] : final_paths) {
        const Model m = model_from_checkpoint(path, specs);
        const EvalReport er = evaluate(m, data.test);
        hist_csv += id;
        for (int c : er.per_class) hist_csv += "," + std::to_string(c);
        hist_csv += "\n";
        write_text(out_dir / ("heatmap_class" + std::to_string(heatmap_class) +
                              "_" + id + ".csv"),
                   heatmap_csv(activation_heatmap(m, heat_samples)));
    }
    write_text(out_dir / "histograms.csv", hist_csv);
    std::printf("analysis written to %s\n", out_dir.string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flsim: deterministic federated-learning simulator"};
    app.set_version_flag("--version", kVersion);

    int threads = 0;
    std::string data_dir = default_data_dir();
    app.add_option("--threads", threads, "bound worker parallelism (0 = library default)");
    app.add_option("--data-dir", data_dir, "dataset directory (env FLSIM_DATA_DIR)");

    std::string config_path, out_override, manifest_path;
    int heatmap_class = 1;

    CLI::App* fetch = app.add_subcommand("fetch-data", "download and verify the dataset files");
    CLI::App* run = app.add_subcommand("run", "execute an experiment from a config file");
    run->add_option("config", config_path, "flat key=value config file")->required();
    run->add_option("--out", out_override, "output directory override");
    CLI::App* verify = app.add_subcommand("verify", "run the fast property suite");
    CLI::App* analyze =
        app.add_subcommand("analyze", "recompute divergence/histograms/heatmaps from a manifest");
    analyze->add_option("manifest", manifest_path, "manifest.json of a finished run")->required();
    analyze->add_option("--heatmap-class", heatmap_class, "class for activation heatmaps");

    app.require_subcommand(1);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    if (threads > 0) omp_set_num_threads(threads);

    try {
        if (fetch->parsed()) {
            for (const std::string& line : fetch_dataset(data_dir))
                std::printf("%s\n", line.c_str());
            return 0;
        }
        if (run->parsed()) return cmd_run(config_path, data_dir, out_override);
        if (verify->parsed()) return cmd_verify();
        if (analyze->parsed()) return cmd_analyze(manifest_path, data_dir, heatmap_class);
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
