#include "lgvf/cli.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "support/toy.hpp"

using namespace lgvf;

namespace {

std::string temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p.string();
}

std::vector<char> file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

LorenzConfig small_lorenz(std::uint64_t seed = 7) {
    LorenzConfig cfg;
    cfg.n_trials = 12;
    cfg.bins = 16;
    cfg.n_neurons = 8;
    cfg.rate_scale = 0.5;
    cfg.seed = seed;
    return cfg;
}

ModelConfig small_model() {
    ModelConfig cfg;
    cfg.latent_dim = 8;
    cfg.hidden_dim = 12;
    cfg.model_dim = 8;
    cfg.groups = 2;
    cfg.kernel_size = 3;
    cfg.seed = 3;
    return cfg;
}

TrainConfig small_train(std::size_t epochs = 2) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = 4;
    cfg.patience = 100;
    cfg.seed = 3;
    cfg.threads = 1;
    cfg.checkpoint_interval = 1;
    return cfg;
}

}  // namespace

TEST(CmdGenerate, DatasetIsByteIdenticalForFixedSeed) {
    std::ostringstream sink;
    std::string d1 = temp_dir("cli_gen1"), d2 = temp_dir("cli_gen2");
    cmd_generate({small_lorenz(), d1}, sink);
    cmd_generate({small_lorenz(), d2}, sink);
    EXPECT_EQ(file_bytes(d1 + "/train.lgvf"), file_bytes(d2 + "/train.lgvf"));
    EXPECT_EQ(file_bytes(d1 + "/val.lgvf"), file_bytes(d2 + "/val.lgvf"));
    EXPECT_EQ(file_bytes(d1 + "/manifest.json"), file_bytes(d2 + "/manifest.json"));
    // summary statistics are printed
    EXPECT_NE(sink.str().find("spikes/bin"), std::string::npos);
}

TEST(CmdGenerate, SeedChangesDataSameShapes) {
    std::ostringstream sink;
    std::string d1 = temp_dir("cli_gen3"), d2 = temp_dir("cli_gen4");
    cmd_generate({small_lorenz(7), d1}, sink);
    cmd_generate({small_lorenz(8), d2}, sink);
    EXPECT_NE(file_bytes(d1 + "/train.lgvf"), file_bytes(d2 + "/train.lgvf"));
    auto a = read_trials(d1 + "/train.lgvf");
    auto b = read_trials(d2 + "/train.lgvf");
    ASSERT_EQ(a.size(), b.size());
    EXPECT_EQ(a[0].bins, b[0].bins);
    EXPECT_EQ(a[0].n_neurons, b[0].n_neurons);
}

TEST(CmdGenerate, InvalidConfigRejected) {
    std::ostringstream sink;
    LorenzConfig bad = small_lorenz();
    bad.n_trials = 0;
    EXPECT_THROW(cmd_generate({bad, temp_dir("cli_gen5")}, sink), ConfigError);
}

TEST(CmdGenerate, WritesRunManifest) {
    std::ostringstream sink;
    std::string dir = temp_dir("cli_gen6");
    cmd_generate({small_lorenz(), dir}, sink);
    std::ifstream in(dir + "/run_manifest.json");
    ASSERT_TRUE(in.good());
    nlohmann::json j = nlohmann::json::parse(in);
    EXPECT_EQ(j.at("command"), "generate");
    EXPECT_TRUE(j.contains("resolved_config"));
    EXPECT_TRUE(j.contains("seed"));
    EXPECT_TRUE(j.contains("outputs"));
}

TEST(CmdTrain, TrainsAndWritesArtifacts) {
    std::ostringstream sink;
    std::string data = temp_dir("cli_train_data");
    cmd_generate({small_lorenz(), data}, sink);
    std::string out = temp_dir("cli_train_out");
    FitResult result = cmd_train({data, out, small_model(), small_train(), ""}, sink);
    EXPECT_EQ(result.log.size(), 2u);
    EXPECT_TRUE(std::filesystem::exists(out + "/train_log.tsv"));
    EXPECT_TRUE(std::filesystem::exists(out + "/latest.lgvc"));
    EXPECT_TRUE(std::filesystem::exists(out + "/latest.lgvc.card.txt"));
    EXPECT_TRUE(std::filesystem::exists(out + "/run_manifest.json"));
}

TEST(CmdTrain, FirstOrderVariantTrainsEndToEnd) {
    std::ostringstream sink;
    std::string data = temp_dir("cli_b5_data");
    cmd_generate({small_lorenz(), data}, sink);
    ModelConfig mc = small_model();
    mc.variant = Variant::first_order;
    std::string out = temp_dir("cli_b5_out");
    FitResult result = cmd_train({data, out, mc, small_train(2), ""}, sink);
    for (const EpochLog& e : result.log) EXPECT_TRUE(std::isfinite(e.train_loss));
    // the stored checkpoint restores to the same variant
    Checkpoint ck = load_checkpoint(out + "/latest.lgvc");
    EXPECT_EQ(ck.model_config.variant, Variant::first_order);
}

TEST(CmdTrain, MissingDataPathFails) {
    std::ostringstream sink;
    EXPECT_THROW(cmd_train({"/nonexistent/dataset", temp_dir("cli_train_x"), small_model(),
                            small_train(), ""},
                           sink),
                 FormatError);
}

TEST(CmdTrain, ResumeMatchesUninterrupted) {
    std::ostringstream sink;
    std::string data = temp_dir("cli_resume_data");
    cmd_generate({small_lorenz(), data}, sink);

    std::string full_out = temp_dir("cli_resume_full");
    cmd_train({data, full_out, small_model(), small_train(2), ""}, sink);

    // train one epoch, then resume to the two-epoch horizon
    std::string part_out = temp_dir("cli_resume_part");
    cmd_train({data, part_out, small_model(), small_train(1), ""}, sink);
    std::string resumed_out = temp_dir("cli_resume_cont");
    FitResult resumed = cmd_train({data, resumed_out, small_model(), small_train(2),
                                   part_out + "/latest.lgvc"},
                                  sink);
    EXPECT_EQ(resumed.log.back().epoch, 1u);

    Checkpoint full_ck = load_checkpoint(full_out + "/latest.lgvc");
    Checkpoint res_ck = load_checkpoint(resumed_out + "/latest.lgvc");
    ASSERT_EQ(full_ck.params.size(), res_ck.params.size());
    for (std::size_t i = 0; i < full_ck.params.size(); ++i)
        EXPECT_EQ(full_ck.params[i].second, res_ck.params[i].second)
            << full_ck.params[i].first;
}

TEST(CmdEval, RepeatedEvaluationIsIdentical) {
    std::ostringstream sink;
    std::string data = temp_dir("cli_eval_data");
    cmd_generate({small_lorenz(), data}, sink);
    std::string out = temp_dir("cli_eval_out");
    cmd_train({data, out, small_model(), small_train(1), ""}, sink);

    std::string r1 = temp_dir("cli_eval_r1") + "/report.txt";
    std::string r2 = temp_dir("cli_eval_r2") + "/report.txt";
    cmd_eval({data, out + "/latest.lgvc", r1, false, {}}, sink);
    cmd_eval({data, out + "/latest.lgvc", r2, false, {}}, sink);
    EXPECT_EQ(file_bytes(r1), file_bytes(r2));
    EXPECT_EQ(file_bytes(r1 + ".tsv"), file_bytes(r2 + ".tsv"));
    // co_bps printed to stdout
    EXPECT_NE(sink.str().find("co_bps"), std::string::npos);
}

TEST(CmdEval, OracleRatesScorePerfectRateR2) {
    std::ostringstream sink;
    std::string data = temp_dir("cli_oracle_data");
    cmd_generate({small_lorenz(), data}, sink);
    std::string report = temp_dir("cli_oracle_out") + "/report.txt";
    EvalReport r = cmd_eval({data, "", report, true, {}}, sink);
    EXPECT_DOUBLE_EQ(r.rate_r2, 1.0);
    EXPECT_GT(r.co_bps, 0.0);
}

TEST(CmdEval, ReportIsParseableTabularSchema) {
    std::ostringstream sink;
    std::string data = temp_dir("cli_schema_data");
    cmd_generate({small_lorenz(), data}, sink);
    std::string report = temp_dir("cli_schema_out") + "/report.txt";
    cmd_eval({data, "", report, true, {}}, sink);
    std::ifstream tsv(report + ".tsv");
    std::string header;
    std::getline(tsv, header);
    EXPECT_EQ(header, "metric\tscope\tvalue");
    std::string line;
    std::size_t rows = 0;
    while (std::getline(tsv, line)) {
        EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 2);
        ++rows;
    }
    EXPECT_GT(rows, 4u);
}

TEST(CmdExportLatents, RowCountAndDeterminism) {
    std::ostringstream sink;
    std::string data = temp_dir("cli_export_data");
    cmd_generate({small_lorenz(), data}, sink);
    std::string out = temp_dir("cli_export_train");
    cmd_train({data, out, small_model(), small_train(1), ""}, sink);

    std::string e1 = temp_dir("cli_export_1"), e2 = temp_dir("cli_export_2");
    cmd_export_latents({data, out + "/latest.lgvc", e1}, sink);
    cmd_export_latents({data, out + "/latest.lgvc", e2}, sink);

    auto trials = read_trials(data + "/val.lgvf");
    std::ifstream f(e1 + "/latents_trial0.tsv");
    std::string line;
    std::getline(f, line);  // header
    EXPECT_EQ(line, "t\tgroup\tindex\tz\tv");
    std::size_t rows = 0;
    while (std::getline(f, line)) ++rows;
    EXPECT_EQ(rows, trials[0].bins * small_model().latent_dim);
    EXPECT_EQ(file_bytes(e1 + "/latents_trial0.tsv"), file_bytes(e2 + "/latents_trial0.tsv"));
}

TEST(CmdExportLatents, FreeFlightLatentsAreLinearInTime) {
    // zero kernel and gamma = 0: velocities are constant in eval mode, so the
    // exported positions advance by exactly v per step
    std::ostringstream sink;
    std::string data = temp_dir("cli_ff_data");
    cmd_generate({small_lorenz(), data}, sink);
    Dataset ds = load_dataset(data);

    ModelConfig mc = small_model();
    mc.n_neurons = ds.train[0].n_neurons;
    mc.n_inputs = ds.train[0].held_in.size();
    mc.gamma = 0.0;
    LangevinFlowModel model(mc);
    std::fill(model.potential().kernel_half.value.begin(),
              model.potential().kernel_half.value.end(), 0.0);

    auto pred = model.predict(ds.val[0]);
    std::size_t d = mc.latent_dim;
    for (std::size_t t = 2; t < pred.z_traj.size(); ++t)
        for (std::size_t i = 0; i < d; ++i) {
            double step1 = pred.z_traj[t][i] - pred.z_traj[t - 1][i];
            double step0 = pred.z_traj[t - 1][i] - pred.z_traj[t - 2][i];
            EXPECT_NEAR(step1, step0, 1e-12);
        }
}
