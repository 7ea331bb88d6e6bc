#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lgvf/data.hpp"
#include "lgvf/errors.hpp"
#include "lgvf/metrics.hpp"
#include "lgvf/model.hpp"
#include "lgvf/train.hpp"

#ifndef LGVF_BUILD_ID
#define LGVF_BUILD_ID "dev"
#endif

namespace lgvf {

inline std::string timestamp_utc() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm_utc;
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

// Every command drops a manifest with the fully resolved configuration, seed
// and paths, enough to replay the run exactly. Timestamps live only here so
// data artifacts stay byte-identical across reruns.
struct RunManifest {
    std::string command;
    nlohmann::json resolved_config;
    std::uint64_t seed = 0;
    std::vector<std::string> inputs, outputs;
    std::string started_at, finished_at;

    void write(const std::string& path) const {
        nlohmann::json j{{"command", command},
                         {"build_id", LGVF_BUILD_ID},
                         {"seed", seed},
                         {"resolved_config", resolved_config},
                         {"inputs", inputs},
                         {"outputs", outputs},
                         {"started_at", started_at},
                         {"finished_at", finished_at}};
        std::ofstream out(path);
        if (!out) throw FormatError("cannot write run manifest: " + path);
        out << j.dump(2) << "\n";
    }
};

// ---------------------------------------------------------------------------
// generate: synthesize the Lorenz spiking dataset
// ---------------------------------------------------------------------------

struct GenerateArgs {
    LorenzConfig config;
    std::string out_dir;
};

inline void cmd_generate(const GenerateArgs& args, std::ostream& out = std::cout) {
    RunManifest manifest;
    manifest.command = "generate";
    manifest.started_at = timestamp_utc();
    manifest.seed = args.config.seed;
    manifest.resolved_config = args.config;

    Dataset ds = make_dataset(args.config);
    std::filesystem::create_directories(args.out_dir);
    std::string train_path = args.out_dir + "/train.lgvf";
    std::string val_path = args.out_dir + "/val.lgvf";
    write_trials(train_path, ds.train);
    write_trials(val_path, ds.val);

    double total_spikes = 0.0;
    std::size_t total_bins = 0;
    for (const auto& group : {std::cref(ds.train), std::cref(ds.val)})
        for (const TrialBatch& t : group.get()) {
            for (std::uint32_t s : t.spikes) total_spikes += s;
            total_bins += t.bins * t.n_neurons;
        }
    double mean_rate = total_spikes / static_cast<double>(total_bins);

    nlohmann::json dsm{{"config", args.config},
                       {"n_train_trials", ds.train.size()},
                       {"n_val_trials", ds.val.size()},
                       {"held_in", ds.train.empty() ? std::vector<std::uint32_t>{} : ds.train[0].held_in},
                       {"held_out", ds.train.empty() ? std::vector<std::uint32_t>{} : ds.train[0].held_out},
                       {"total_spikes", total_spikes},
                       {"mean_spikes_per_bin", mean_rate},
                       {"lorenz_equations", "dy1 = sigma(y2 - y1); dy2 = y1(rho - y3) - y2; dy3 = y1 y2 - beta y3"}};
    std::ofstream dsm_out(args.out_dir + "/manifest.json");
    if (!dsm_out) throw FormatError("cannot write dataset manifest");
    dsm_out << dsm.dump(2) << "\n";

    out << "generated " << ds.train.size() << " train / " << ds.val.size() << " val trials, "
        << "mean " << mean_rate << " spikes/bin, " << static_cast<long long>(total_spikes)
        << " spikes total\n";

    manifest.outputs = {train_path, val_path, args.out_dir + "/manifest.json"};
    manifest.finished_at = timestamp_utc();
    manifest.write(args.out_dir + "/run_manifest.json");
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string data_dir;
    std::string out_dir;
    ModelConfig model;
    TrainConfig train;
    std::string resume_path;  // optional checkpoint to continue from
};

inline Dataset load_dataset(const std::string& data_dir) {
    Dataset ds;
    std::string train_path = data_dir + "/train.lgvf";
    std::string val_path = data_dir + "/val.lgvf";
    if (!std::filesystem::exists(train_path))
        throw FormatError("dataset not found: " + train_path);
    ds.train = read_trials(train_path);
    if (std::filesystem::exists(val_path)) ds.val = read_trials(val_path);
    std::ifstream m(data_dir + "/manifest.json");
    if (m) {
        nlohmann::json j = nlohmann::json::parse(m);
        if (j.contains("config")) ds.config = j.at("config").get<LorenzConfig>();
    }
    return ds;
}

inline FitResult cmd_train(const TrainArgs& args, std::ostream& out = std::cout) {
    RunManifest manifest;
    manifest.command = "train";
    manifest.started_at = timestamp_utc();

    Dataset ds = load_dataset(args.data_dir);
    if (ds.train.empty()) throw DataError("train: dataset has no training trials");

    LangevinFlowModel model;
    TrainConfig train_cfg = args.train;
    std::optional<Checkpoint> resume;
    if (!args.resume_path.empty()) {
        resume = load_checkpoint(args.resume_path);
        model = restore_model(*resume);
        // Resuming replays the stored schedule bit-exactly; only the horizon
        // comes from the current invocation.
        std::size_t horizon = args.train.epochs;
        train_cfg = resume->train_config;
        train_cfg.epochs = horizon;
    } else {
        ModelConfig mc = args.model;
        mc.n_neurons = ds.train[0].n_neurons;
        mc.n_inputs = ds.train[0].held_in.size();
        model = LangevinFlowModel(mc);
    }

    manifest.seed = train_cfg.seed;
    manifest.resolved_config =
        nlohmann::json{{"model", model.config()}, {"train", train_cfg}};
    manifest.inputs = {args.data_dir + "/train.lgvf", args.data_dir + "/val.lgvf"};

    FitResult result = fit(model, ds, train_cfg, args.out_dir,
                           resume ? &*resume : nullptr, &out);

    out << "best val co_bps " << result.best_co_bps << " at epoch " << result.best_epoch << "\n";
    manifest.outputs = {args.out_dir + "/train_log.tsv", result.best_checkpoint_path,
                        result.latest_checkpoint_path};
    manifest.finished_at = timestamp_utc();
    manifest.write(args.out_dir + "/run_manifest.json");
    return result;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string data_dir;      // dataset directory (uses val.lgvf) or a direct .lgvf path
    std::string checkpoint;    // ignored when oracle_rates is set
    std::string report_path;   // report written here (.txt) and alongside (.tsv)
    bool oracle_rates = false; // substitute the generator's true rates
    EvalOptions options;
};

inline std::vector<TrialBatch> load_eval_trials(const std::string& data_arg) {
    std::string path = data_arg;
    if (std::filesystem::is_directory(path)) path += "/val.lgvf";
    return read_trials(path);
}

inline EvalReport cmd_eval(const EvalArgs& args, std::ostream& out = std::cout) {
    RunManifest manifest;
    manifest.command = "eval";
    manifest.started_at = timestamp_utc();

    std::vector<TrialBatch> trials = load_eval_trials(args.data_dir);
    if (trials.empty()) throw DataError("eval: no trials");

    EvalReport report;
    if (args.oracle_rates) {
        std::vector<std::vector<double>> rates;
        for (const TrialBatch& t : trials) {
            if (!t.has_rates()) throw DataError("eval: oracle rates requested but dataset has none");
            rates.push_back(t.true_rates);
        }
        report = evaluate_rates(rates, trials, args.options);
        manifest.resolved_config = nlohmann::json{{"oracle_rates", true}};
    } else {
        Checkpoint ck = load_checkpoint(args.checkpoint);
        LangevinFlowModel model = restore_model(ck);
        if (model.config().n_neurons != trials[0].n_neurons ||
            model.config().n_inputs != trials[0].held_in.size())
            throw ConfigError("eval: checkpoint geometry does not match the dataset");
        report = run_eval(model, trials, args.options);
        manifest.resolved_config = nlohmann::json{{"model", model.config()}};
        manifest.inputs.push_back(args.checkpoint);
        manifest.seed = model.config().seed;
    }

    std::ofstream txt(args.report_path);
    if (!txt) throw FormatError("cannot write report: " + args.report_path);
    txt << report.to_text();
    std::string tsv_path = args.report_path + ".tsv";
    std::ofstream tsv(tsv_path);
    tsv << report.to_tsv();

    out << "co_bps " << report.co_bps << "\n";

    manifest.outputs = {args.report_path, tsv_path};
    manifest.finished_at = timestamp_utc();
    manifest.write(args.report_path + ".run_manifest.json");
    return report;
}

// ---------------------------------------------------------------------------
// export-latents: one table per trial for wave-raster plotting
// ---------------------------------------------------------------------------

struct ExportArgs {
    std::string data_dir;
    std::string checkpoint;
    std::string out_dir;
};

inline void cmd_export_latents(const ExportArgs& args, std::ostream& out = std::cout) {
    RunManifest manifest;
    manifest.command = "export-latents";
    manifest.started_at = timestamp_utc();

    std::vector<TrialBatch> trials = load_eval_trials(args.data_dir);
    Checkpoint ck = load_checkpoint(args.checkpoint);
    LangevinFlowModel model = restore_model(ck);
    const ModelConfig& cfg = model.config();
    if (cfg.variant == Variant::no_langevin)
        throw ConfigError("export-latents: the no-langevin variant has no latent trajectories");

    std::filesystem::create_directories(args.out_dir);
    std::size_t group_len = cfg.latent_dim / cfg.groups;
    for (std::size_t i = 0; i < trials.size(); ++i) {
        auto pred = model.predict(trials[i]);
        std::ostringstream name;
        name << args.out_dir << "/latents_trial" << i << ".tsv";
        std::ofstream f(name.str());
        if (!f) throw FormatError("cannot write " + name.str());
        f << "t\tgroup\tindex\tz\tv\n";
        f.precision(10);
        for (std::size_t t = 0; t < pred.z_traj.size(); ++t)
            for (std::size_t d = 0; d < cfg.latent_dim; ++d) {
                double v = t < pred.v_traj.size() && !pred.v_traj.empty()
                               ? pred.v_traj[t][d]
                               : std::numeric_limits<double>::quiet_NaN();
                f << t << "\t" << d / group_len << "\t" << d % group_len << "\t"
                  << pred.z_traj[t][d] << "\t" << v << "\n";
            }
        manifest.outputs.push_back(name.str());
    }

    out << "exported latents for " << trials.size() << " trials\n";
    manifest.resolved_config = nlohmann::json{{"model", model.config()}};
    manifest.inputs = {args.checkpoint};
    manifest.seed = cfg.seed;
    manifest.finished_at = timestamp_utc();
    manifest.write(args.out_dir + "/run_manifest.json");
}

}  // namespace lgvf
