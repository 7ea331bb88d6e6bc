#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "lgvf/data.hpp"
#include "lgvf/errors.hpp"
#include "lgvf/metrics.hpp"
#include "lgvf/model.hpp"
#include "lgvf/rng.hpp"
#include "lgvf/tensor.hpp"

namespace lgvf {

struct TrainConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    double clip_norm = 200.0;
    double kl_weight_max = 0.01;
    std::size_t kl_warmup_steps = 200;
    std::size_t patience = 10;            // early stop on validation co-bps
    std::size_t checkpoint_interval = 0;  // save latest every N epochs; 0 = end only
    std::uint64_t seed = 1;
    std::size_t threads = 0;              // 0: LANGEVIN_THREADS or hardware count

    void validate() const {
        if (epochs == 0 || batch_size == 0) throw ConfigError("train: epochs and batch size must be positive");
        if (learning_rate <= 0.0) throw ConfigError("train: learning rate must be positive");
        if (clip_norm <= 0.0) throw ConfigError("train: clip norm must be positive");
        if (kl_weight_max < 0.0) throw ConfigError("train: kl weight must be >= 0");
        if (patience == 0) throw ConfigError("train: patience must be positive");
    }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"epochs", c.epochs},
                       {"batch_size", c.batch_size},
                       {"learning_rate", c.learning_rate},
                       {"clip_norm", c.clip_norm},
                       {"kl_weight_max", c.kl_weight_max},
                       {"kl_warmup_steps", c.kl_warmup_steps},
                       {"patience", c.patience},
                       {"checkpoint_interval", c.checkpoint_interval},
                       {"seed", c.seed},
                       {"threads", c.threads}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.kl_weight_max = j.value("kl_weight_max", c.kl_weight_max);
    c.kl_warmup_steps = j.value("kl_warmup_steps", c.kl_warmup_steps);
    c.patience = j.value("patience", c.patience);
    c.checkpoint_interval = j.value("checkpoint_interval", c.checkpoint_interval);
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
}

// ---------------------------------------------------------------------------
// Adam with global-norm gradient clipping.
// ---------------------------------------------------------------------------

struct OptimizerState {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double clip_norm = 200.0;
    std::uint64_t step = 0;
    std::uint32_t consecutive_skips = 0;
    std::vector<std::vector<double>> m, v;  // aligned with the parameter list

    static OptimizerState init(const std::vector<Parameter*>& params, double lr, double clip) {
        OptimizerState st;
        st.learning_rate = lr;
        st.clip_norm = clip;
        st.m.reserve(params.size());
        st.v.reserve(params.size());
        for (const Parameter* p : params) {
            st.m.emplace_back(p->size(), 0.0);
            st.v.emplace_back(p->size(), 0.0);
        }
        return st;
    }
};

// Apply one Adam update from the gradients stored on the parameters. Returns
// false when the step was skipped because a gradient was non-finite; ten
// consecutive skips abort.
inline bool adam_step(std::vector<Parameter*>& params, OptimizerState& st) {
    if (st.m.size() != params.size())
        throw ContractError("adam_step: optimizer state does not match parameter list");

    double sq_norm = 0.0;
    bool finite = true;
    for (const Parameter* p : params)
        for (double g : p->grad) {
            if (!std::isfinite(g)) finite = false;
            sq_norm += g * g;
        }
    if (!finite || !std::isfinite(sq_norm)) {
        ++st.consecutive_skips;
        std::cerr << "[train] non-finite gradient, skipping step (" << st.consecutive_skips
                  << " consecutive)\n";
        if (st.consecutive_skips >= 10)
            throw NumericError("adam: 10 consecutive non-finite gradients");
        return false;
    }
    st.consecutive_skips = 0;

    double norm = std::sqrt(sq_norm);
    double scale = norm > st.clip_norm ? st.clip_norm / norm : 1.0;

    st.step += 1;
    double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Parameter& p = *params[i];
        if (st.m[i].size() != p.size()) throw ContractError("adam_step: moment shape mismatch");
        for (std::size_t j = 0; j < p.size(); ++j) {
            double g = p.grad[j] * scale;
            st.m[i][j] = st.beta1 * st.m[i][j] + (1.0 - st.beta1) * g;
            st.v[i][j] = st.beta2 * st.v[i][j] + (1.0 - st.beta2) * g * g;
            double mhat = st.m[i][j] / bc1;
            double vhat = st.v[i][j] / bc2;
            p.value[j] -= st.learning_rate * mhat / (std::sqrt(vhat) + st.epsilon);
        }
    }
    return true;
}

// Linear warm-up to the full KL weight, then constant.
inline double kl_schedule(std::uint64_t step, std::size_t warmup_steps, double lambda_max) {
    if (warmup_steps == 0) return lambda_max;
    double frac = static_cast<double>(step) / static_cast<double>(warmup_steps);
    return lambda_max * std::min(1.0, frac);
}

// ---------------------------------------------------------------------------
// Checkpoints: magic "LGVC", embedded configs, named parameter blobs, Adam
// moments, and the training progress needed for bit-exact resume.
// ---------------------------------------------------------------------------

struct TrainProgress {
    std::uint32_t next_epoch = 0;
    std::uint64_t global_step = 0;
    double best_co_bps = -std::numeric_limits<double>::infinity();
    std::uint32_t epochs_since_best = 0;
};

struct Checkpoint {
    ModelConfig model_config;
    TrainConfig train_config;
    std::vector<std::pair<std::string, std::vector<double>>> params;  // name -> flat values
    OptimizerState optimizer;
    TrainProgress progress;
};

namespace detail {

inline void write_string(ByteWriter& w, const std::string& s) {
    w.u32(static_cast<std::uint32_t>(s.size()));
    w.raw(s.data(), s.size());
}

inline std::string read_string(ByteReader& r) {
    std::uint32_t n = r.u32();
    std::string s(n, '\0');
    r.raw(s.data(), n);
    return s;
}

inline void write_blob(ByteWriter& w, const std::vector<double>& v) {
    w.u32(static_cast<std::uint32_t>(v.size()));
    for (double x : v) w.f64(x);
}

inline std::vector<double> read_blob(ByteReader& r) {
    std::uint32_t n = r.u32();
    std::vector<double> v(n);
    for (auto& x : v) x = r.f64();
    return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const LangevinFlowModel& model,
                            const std::vector<Parameter*>& params, const OptimizerState& opt,
                            const TrainConfig& train_cfg, const TrainProgress& progress) {
    detail::ByteWriter w(path);
    w.raw("LGVC", 4);
    w.u32(1);
    nlohmann::json mj = model.config();
    std::string mdump = mj.dump();
    detail::write_string(w, mdump);
    // Hash binds the parameter payload to the configuration it was trained with.
    std::uint64_t hash = Rng::hash_tag(mdump);
    w.u32(static_cast<std::uint32_t>(hash));
    w.u32(static_cast<std::uint32_t>(hash >> 32));
    nlohmann::json tj = train_cfg;
    detail::write_string(w, tj.dump());

    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const Parameter* p : params) {
        detail::write_string(w, p->name);
        w.u32(static_cast<std::uint32_t>(p->shape.size()));
        for (std::size_t d : p->shape) w.u32(static_cast<std::uint32_t>(d));
        detail::write_blob(w, p->value);
    }

    w.f64(opt.learning_rate);
    w.f64(opt.beta1);
    w.f64(opt.beta2);
    w.f64(opt.epsilon);
    w.f64(opt.clip_norm);
    w.u32(static_cast<std::uint32_t>(opt.step));
    w.u32(static_cast<std::uint32_t>(opt.step >> 32));
    w.u32(opt.consecutive_skips);
    for (std::size_t i = 0; i < params.size(); ++i) {
        detail::write_blob(w, opt.m[i]);
        detail::write_blob(w, opt.v[i]);
    }

    w.u32(progress.next_epoch);
    w.u32(static_cast<std::uint32_t>(progress.global_step));
    w.u32(static_cast<std::uint32_t>(progress.global_step >> 32));
    w.f64(progress.best_co_bps);
    w.u32(progress.epochs_since_best);

    std::ofstream card(path + ".card.txt");
    if (card) card << model_card_text(model.config());
}

inline Checkpoint load_checkpoint(const std::string& path) {
    detail::ByteReader r(path);
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, "LGVC", 4) != 0) throw FormatError("bad magic, expected LGVC", 0);
    std::uint32_t version = r.u32();
    if (version != 1) throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);

    Checkpoint ck;
    std::string mdump = detail::read_string(r);
    std::uint64_t stored_hash = r.u32();
    stored_hash |= static_cast<std::uint64_t>(r.u32()) << 32;
    if (stored_hash != Rng::hash_tag(mdump))
        throw FormatError("checkpoint config hash mismatch", r.offset());
    ck.model_config = nlohmann::json::parse(mdump).get<ModelConfig>();
    ck.train_config = nlohmann::json::parse(detail::read_string(r)).get<TrainConfig>();

    std::uint32_t n_params = r.u32();
    ck.params.reserve(n_params);
    for (std::uint32_t i = 0; i < n_params; ++i) {
        std::string name = detail::read_string(r);
        std::uint32_t ndim = r.u32();
        for (std::uint32_t d = 0; d < ndim; ++d) r.u32();  // shape is re-derived from the config
        ck.params.emplace_back(std::move(name), detail::read_blob(r));
    }

    ck.optimizer.learning_rate = r.f64();
    ck.optimizer.beta1 = r.f64();
    ck.optimizer.beta2 = r.f64();
    ck.optimizer.epsilon = r.f64();
    ck.optimizer.clip_norm = r.f64();
    ck.optimizer.step = r.u32();
    ck.optimizer.step |= static_cast<std::uint64_t>(r.u32()) << 32;
    ck.optimizer.consecutive_skips = r.u32();
    for (std::uint32_t i = 0; i < n_params; ++i) {
        ck.optimizer.m.push_back(detail::read_blob(r));
        ck.optimizer.v.push_back(detail::read_blob(r));
    }

    ck.progress.next_epoch = r.u32();
    ck.progress.global_step = r.u32();
    ck.progress.global_step |= static_cast<std::uint64_t>(r.u32()) << 32;
    ck.progress.best_co_bps = r.f64();
    ck.progress.epochs_since_best = r.u32();
    return ck;
}

// Instantiate the model a checkpoint describes and load its weights.
inline LangevinFlowModel restore_model(const Checkpoint& ck) {
    LangevinFlowModel model(ck.model_config);
    auto params = model.parameters();
    if (params.size() != ck.params.size())
        throw FormatError("checkpoint parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->name != ck.params[i].first)
            throw FormatError("checkpoint parameter order mismatch at " + ck.params[i].first);
        if (params[i]->value.size() != ck.params[i].second.size())
            throw FormatError("checkpoint parameter size mismatch at " + ck.params[i].first);
        params[i]->value = ck.params[i].second;
    }
    return model;
}

// Require that a checkpoint matches a configuration the caller expects.
inline void check_config_match(const Checkpoint& ck, const ModelConfig& expected) {
    if (config_hash(ck.model_config) != config_hash(expected))
        throw ConfigError("checkpoint config hash does not match the requested configuration");
}

// ---------------------------------------------------------------------------
// Fit loop
// ---------------------------------------------------------------------------

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_nll = 0.0;
    double val_co_bps = 0.0;
    double lambda = 0.0;

    std::string line() const {
        std::ostringstream os;
        os.precision(10);
        os << epoch << "\t" << train_loss << "\t" << val_nll << "\t" << val_co_bps << "\t" << lambda;
        return os.str();
    }
};

struct FitResult {
    std::vector<EpochLog> log;
    double best_co_bps = -std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;
    bool early_stopped = false;
    std::string best_checkpoint_path;
    std::string latest_checkpoint_path;
};

inline std::size_t resolve_thread_count(std::size_t requested, std::size_t batch) {
    std::size_t n = requested;
    if (n == 0) {
        if (const char* env = std::getenv("LANGEVIN_THREADS")) {
            long v = std::strtol(env, nullptr, 10);
            if (v > 0) n = static_cast<std::size_t>(v);
        }
    }
    if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
    return std::max<std::size_t>(1, std::min(n, batch));
}

namespace detail {

struct TrialResult {
    std::unordered_map<const void*, std::vector<double>> grads;
    double loss = 0.0;
    bool finite = true;
};

// Forward/backward one trial on its own tape and collect parameter gradients.
inline TrialResult process_trial(const LangevinFlowModel& model, const TrialBatch& trial,
                                 const NoiseBundle& noise, double lambda) {
    TrialResult res;
    Tape tape;
    auto tl = model.training_loss(tape, trial, noise, lambda);
    res.loss = tl.loss_value;
    if (!std::isfinite(res.loss)) {
        res.finite = false;
        return res;
    }
    tape.backward(tl.loss);
    for (const auto& [param, node] : tape.param_nodes()) {
        const auto& g = tape.grad_buffer(node);
        auto [it, inserted] = res.grads.try_emplace(param, g);
        if (!inserted)
            for (std::size_t i = 0; i < g.size(); ++i) it->second[i] += g[i];
    }
    return res;
}

}  // namespace detail

// Run one optimizer step over a batch of trials: data-parallel
// forward/backward on separate tapes, gradients merged in trial order and
// averaged over the batch. Returns the mean trial loss.
inline double train_batch(LangevinFlowModel& model, std::vector<Parameter*>& params,
                          OptimizerState& opt, const std::vector<TrialBatch>& trials,
                          const std::vector<std::size_t>& batch_ids,
                          const std::vector<std::size_t>& dataset_ids, std::uint64_t run_seed,
                          std::uint64_t epoch, double lambda, std::size_t threads) {
    std::size_t batch = batch_ids.size();
    std::vector<detail::TrialResult> results(batch);

    auto work = [&](std::size_t worker, std::size_t stride) {
        for (std::size_t i = worker; i < batch; i += stride) {
            const TrialBatch& trial = trials[batch_ids[i]];
            NoiseBundle noise =
                model.draw_noise(run_seed, epoch, dataset_ids[batch_ids[i]], trial.bins);
            results[i] = detail::process_trial(model, trial, noise, lambda);
        }
    };

    std::size_t n_threads = resolve_thread_count(threads, batch);
    if (n_threads <= 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (std::size_t w = 0; w < n_threads; ++w) pool.emplace_back(work, w, n_threads);
        for (auto& t : pool) t.join();
    }

    for (std::size_t i = 0; i < batch; ++i)
        if (!results[i].finite)
            throw NumericError("train: non-finite loss in epoch " + std::to_string(epoch) +
                               ", dataset trial " + std::to_string(dataset_ids[batch_ids[i]]));

    for (Parameter* p : params) p->zero_grad();
    double inv_batch = 1.0 / static_cast<double>(batch);
    double loss_sum = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
        loss_sum += results[i].loss;
        for (Parameter* p : params) {
            auto it = results[i].grads.find(p);
            if (it == results[i].grads.end()) continue;
            for (std::size_t j = 0; j < p->size(); ++j) p->grad[j] += inv_batch * it->second[j];
        }
    }
    adam_step(params, opt);
    return loss_sum * inv_batch;
}

inline FitResult fit(LangevinFlowModel& model, const Dataset& data, const TrainConfig& cfg,
                     const std::string& out_dir = "", const Checkpoint* resume = nullptr,
                     std::ostream* console = nullptr) {
    cfg.validate();
    if (data.train.empty()) throw ContractError("fit: empty training set");

    auto params = model.parameters();
    OptimizerState opt = OptimizerState::init(params, cfg.learning_rate, cfg.clip_norm);
    TrainProgress progress;
    if (resume) {
        opt = resume->optimizer;
        progress = resume->progress;
    }

    bool to_disk = !out_dir.empty();
    std::ofstream log_file;
    if (to_disk) {
        std::filesystem::create_directories(out_dir);
        bool fresh = !resume;
        log_file.open(out_dir + "/train_log.tsv", fresh ? std::ios::trunc : std::ios::app);
        if (fresh) log_file << "epoch\ttrain_loss\tval_nll\tval_co_bps\tlambda\n";
    }

    std::vector<std::size_t> dataset_ids(data.train.size());
    for (std::size_t i = 0; i < dataset_ids.size(); ++i) dataset_ids[i] = i;

    FitResult result;
    result.best_co_bps = progress.best_co_bps;

    for (std::size_t epoch = progress.next_epoch; epoch < cfg.epochs; ++epoch) {
        // Seeded shuffle, a pure function of (seed, epoch).
        std::vector<std::size_t> order(data.train.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng = Rng::substream(cfg.seed, "shuffle", epoch);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.next_u64() % i]);

        double loss_sum = 0.0;
        std::size_t n_batches = 0;
        double lambda = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::size_t end = std::min(start + cfg.batch_size, order.size());
            std::vector<std::size_t> batch_ids(order.begin() + static_cast<std::ptrdiff_t>(start),
                                               order.begin() + static_cast<std::ptrdiff_t>(end));
            lambda = kl_schedule(progress.global_step, cfg.kl_warmup_steps, cfg.kl_weight_max);
            loss_sum += train_batch(model, params, opt, data.train, batch_ids, dataset_ids,
                                    cfg.seed, epoch, lambda, cfg.threads);
            ++n_batches;
            ++progress.global_step;
        }

        ValidationScore val = co_smoothing(model, data.val);

        EpochLog entry;
        entry.epoch = epoch;
        entry.train_loss = loss_sum / static_cast<double>(n_batches);
        entry.val_nll = val.nll;
        entry.val_co_bps = val.co_bps;
        entry.lambda = lambda;
        result.log.push_back(entry);
        if (to_disk) log_file << entry.line() << "\n" << std::flush;
        if (console)
            (*console) << "epoch " << epoch << "  loss " << entry.train_loss << "  val_nll "
                       << entry.val_nll << "  val_co_bps " << entry.val_co_bps << "  lambda "
                       << lambda << "\n";

        bool improved = std::isfinite(val.co_bps) && val.co_bps > progress.best_co_bps;
        if (improved) {
            progress.best_co_bps = val.co_bps;
            progress.epochs_since_best = 0;
            result.best_co_bps = val.co_bps;
            result.best_epoch = epoch;
            if (to_disk) {
                result.best_checkpoint_path = out_dir + "/best.lgvc";
                TrainProgress saved = progress;
                saved.next_epoch = static_cast<std::uint32_t>(epoch + 1);
                save_checkpoint(result.best_checkpoint_path, model, params, opt, cfg, saved);
            }
        } else {
            ++progress.epochs_since_best;
        }

        progress.next_epoch = static_cast<std::uint32_t>(epoch + 1);
        if (to_disk && cfg.checkpoint_interval > 0 && (epoch + 1) % cfg.checkpoint_interval == 0) {
            result.latest_checkpoint_path = out_dir + "/latest.lgvc";
            save_checkpoint(result.latest_checkpoint_path, model, params, opt, cfg, progress);
        }

        if (progress.epochs_since_best >= cfg.patience) {
            result.early_stopped = true;
            break;
        }
    }

    if (to_disk) {
        result.latest_checkpoint_path = out_dir + "/latest.lgvc";
        save_checkpoint(result.latest_checkpoint_path, model, params, opt, cfg, progress);
        if (result.best_checkpoint_path.empty()) result.best_checkpoint_path = result.latest_checkpoint_path;
    }
    return result;
}

}  // namespace lgvf
