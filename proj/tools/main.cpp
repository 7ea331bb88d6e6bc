// Command line entry point: dataset generation, training, evaluation and
// latent export for the langevinflow model.

#include <exception>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "lgvf/langevinflow.hpp"

namespace {

nlohmann::json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw lgvf::ConfigError("cannot open config file: " + path);
    return nlohmann::json::parse(in);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"langevinflow: latent Langevin dynamics for spiking data"};
    app.require_subcommand(1);

    // ---- generate ----
    auto* gen = app.add_subcommand("generate", "synthesize the Lorenz spiking dataset");
    std::string gen_config, gen_out;
    lgvf::LorenzConfig lorenz;
    long long gen_trials = -1, gen_neurons = -1, gen_bins = -1, gen_seed = -1;
    double gen_rate_scale = -1.0;
    gen->add_option("--config", gen_config, "JSON file with generator settings");
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--n-trials", gen_trials, "number of trials");
    gen->add_option("--n-neurons", gen_neurons, "number of synthetic neurons");
    gen->add_option("--bins", gen_bins, "bins per trial");
    gen->add_option("--rate-scale", gen_rate_scale, "target mean spikes per bin");
    gen->add_option("--seed", gen_seed, "generator seed");

    // ---- train ----
    auto* train = app.add_subcommand("train", "fit the model on a generated dataset");
    std::string train_data, train_out, train_config, train_variant, train_resume;
    lgvf::ModelConfig model_cfg;
    lgvf::TrainConfig train_cfg;
    long long tr_epochs = -1, tr_batch = -1, tr_warmup = -1, tr_seed = -1, tr_patience = -1,
              tr_interval = -1, tr_threads = -1, tr_latent = -1, tr_hidden = -1;
    double tr_lr = -1.0, tr_klmax = -1.0, tr_gamma = -1.0, tr_dropout = -1.0;
    train->add_option("--data", train_data, "dataset directory from `generate`")->required();
    train->add_option("--out", train_out, "output directory")->required();
    train->add_option("--config", train_config, "JSON file with {model, train} sections");
    train->add_option("--variant", train_variant,
                      "full | baseline1_linear_decoder | baseline2_linear_encoder | "
                      "baseline3_no_langevin | baseline4_input_potential | baseline5_first_order");
    train->add_option("--resume", train_resume, "checkpoint to continue from");
    train->add_option("--epochs", tr_epochs, "training epochs");
    train->add_option("--batch-size", tr_batch, "trials per optimizer step");
    train->add_option("--lr", tr_lr, "Adam learning rate");
    train->add_option("--kl-max", tr_klmax, "final KL weight");
    train->add_option("--kl-warmup", tr_warmup, "KL warm-up steps");
    train->add_option("--gamma", tr_gamma, "damping coefficient");
    train->add_option("--dropout", tr_dropout, "coordinated dropout rate");
    train->add_option("--latent-dim", tr_latent, "latent dimensionality");
    train->add_option("--hidden-dim", tr_hidden, "encoder hidden dimensionality");
    train->add_option("--patience", tr_patience, "early-stop patience (epochs)");
    train->add_option("--ckpt-interval", tr_interval, "save latest checkpoint every N epochs");
    train->add_option("--threads", tr_threads, "worker threads (0 = auto)");
    train->add_option("--seed", tr_seed, "run seed");

    // ---- eval ----
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    lgvf::EvalArgs eval_args;
    ev->add_option("--data", eval_args.data_dir, "dataset directory or .lgvf file")->required();
    ev->add_option("--ckpt", eval_args.checkpoint, "checkpoint path");
    ev->add_option("--report", eval_args.report_path, "report output path")->required();
    ev->add_flag("--oracle-rates", eval_args.oracle_rates,
                 "score the generator's true rates instead of a checkpoint");
    ev->add_option("--ridge-alpha", eval_args.options.ridge_alpha, "ridge regularizer");

    // ---- export-latents ----
    auto* ex = app.add_subcommand("export-latents", "dump per-trial latent trajectories");
    lgvf::ExportArgs export_args;
    ex->add_option("--data", export_args.data_dir, "dataset directory or .lgvf file")->required();
    ex->add_option("--ckpt", export_args.checkpoint, "checkpoint path")->required();
    ex->add_option("--out", export_args.out_dir, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            if (!gen_config.empty()) lorenz = load_json_file(gen_config).get<lgvf::LorenzConfig>();
            if (gen_trials >= 0) lorenz.n_trials = static_cast<std::size_t>(gen_trials);
            if (gen_neurons >= 0) lorenz.n_neurons = static_cast<std::size_t>(gen_neurons);
            if (gen_bins >= 0) lorenz.bins = static_cast<std::size_t>(gen_bins);
            if (gen_rate_scale >= 0.0) lorenz.rate_scale = gen_rate_scale;
            if (gen_seed >= 0) lorenz.seed = static_cast<std::uint64_t>(gen_seed);
            lgvf::cmd_generate({lorenz, gen_out});
        } else if (train->parsed()) {
            if (!train_config.empty()) {
                nlohmann::json j = load_json_file(train_config);
                if (j.contains("model")) model_cfg = j.at("model").get<lgvf::ModelConfig>();
                if (j.contains("train")) train_cfg = j.at("train").get<lgvf::TrainConfig>();
            }
            if (!train_variant.empty()) model_cfg.variant = lgvf::parse_variant(train_variant);
            if (tr_epochs >= 0) train_cfg.epochs = static_cast<std::size_t>(tr_epochs);
            if (tr_batch >= 0) train_cfg.batch_size = static_cast<std::size_t>(tr_batch);
            if (tr_lr >= 0.0) train_cfg.learning_rate = tr_lr;
            if (tr_klmax >= 0.0) {
                train_cfg.kl_weight_max = tr_klmax;
                model_cfg.kl_weight_max = tr_klmax;
            }
            if (tr_warmup >= 0) {
                train_cfg.kl_warmup_steps = static_cast<std::size_t>(tr_warmup);
                model_cfg.kl_warmup_steps = static_cast<std::size_t>(tr_warmup);
            }
            if (tr_gamma >= 0.0) model_cfg.gamma = tr_gamma;
            if (tr_dropout >= 0.0) model_cfg.coordinated_dropout_rate = tr_dropout;
            if (tr_latent > 0) model_cfg.latent_dim = static_cast<std::size_t>(tr_latent);
            if (tr_hidden > 0) model_cfg.hidden_dim = static_cast<std::size_t>(tr_hidden);
            if (tr_patience > 0) train_cfg.patience = static_cast<std::size_t>(tr_patience);
            if (tr_interval >= 0) train_cfg.checkpoint_interval = static_cast<std::size_t>(tr_interval);
            if (tr_threads >= 0) train_cfg.threads = static_cast<std::size_t>(tr_threads);
            if (tr_seed >= 0) {
                train_cfg.seed = static_cast<std::uint64_t>(tr_seed);
                model_cfg.seed = static_cast<std::uint64_t>(tr_seed);
            }
            lgvf::cmd_train({train_data, train_out, model_cfg, train_cfg, train_resume});
        } else if (ev->parsed()) {
            if (!eval_args.oracle_rates && eval_args.checkpoint.empty())
                throw lgvf::ConfigError("eval: --ckpt required unless --oracle-rates is set");
            lgvf::cmd_eval(eval_args);
        } else if (ex->parsed()) {
            lgvf::cmd_export_latents(export_args);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
