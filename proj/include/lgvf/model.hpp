#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lgvf/data.hpp"
#include "lgvf/decoder.hpp"
#include "lgvf/encoder.hpp"
#include "lgvf/errors.hpp"
#include "lgvf/langevin.hpp"
#include "lgvf/potential.hpp"
#include "lgvf/rng.hpp"
#include "lgvf/tensor.hpp"

namespace lgvf {

// Architecture variants; the baselines swap exactly one component each.
enum class Variant {
    full,
    linear_decoder,   // baseline 1
    linear_encoder,   // baseline 2
    no_langevin,      // baseline 3
    input_potential,  // baseline 4
    first_order,      // baseline 5
};

inline std::string variant_name(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::linear_decoder: return "baseline1_linear_decoder";
        case Variant::linear_encoder: return "baseline2_linear_encoder";
        case Variant::no_langevin: return "baseline3_no_langevin";
        case Variant::input_potential: return "baseline4_input_potential";
        case Variant::first_order: return "baseline5_first_order";
    }
    return "full";
}

inline Variant parse_variant(const std::string& s) {
    for (Variant v : {Variant::full, Variant::linear_decoder, Variant::linear_encoder,
                      Variant::no_langevin, Variant::input_potential, Variant::first_order})
        if (variant_name(v) == s) return v;
    throw ConfigError("unknown variant: " + s);
}

struct ModelConfig {
    std::size_t n_neurons = 29;  // readout width (held-in + held-out)
    std::size_t n_inputs = 22;   // held-in spike channels seen by the encoder
    std::size_t latent_dim = 32;
    std::size_t hidden_dim = 64;
    std::size_t model_dim = 64;
    std::size_t heads = 4;
    std::size_t groups = 4;
    std::size_t kernel_size = 7;
    double gamma = 0.67;
    double dt = 1.0;
    double kl_weight_max = 0.01;
    std::size_t kl_warmup_steps = 200;
    double coordinated_dropout_rate = 0.25;
    Variant variant = Variant::full;
    std::uint64_t seed = 1;
    bool positional_encoding = true;
    bool forward_zero_input = true;  // extend hidden states with zero spikes (vs freezing)
    double rate_clamp_lo = 1e-7;
    double rate_clamp_hi = 1e4;

    void validate() const {
        if (n_neurons == 0 || n_inputs == 0 || latent_dim == 0 || hidden_dim == 0 || model_dim == 0)
            throw ConfigError("model: dimensions must be positive");
        if (n_inputs > n_neurons) throw ConfigError("model: more inputs than neurons");
        if (heads == 0 || model_dim % heads != 0)
            throw ConfigError("model: model_dim must be divisible by heads");
        if (groups == 0 || latent_dim % groups != 0)
            throw ConfigError("model: latent_dim must be divisible by groups");
        if (kernel_size % 2 == 0) throw ConfigError("model: kernel size must be odd");
        if (gamma < 0.0 || gamma > 1.0) throw ConfigError("model: gamma must lie in [0, 1]");
        if (dt <= 0.0) throw ConfigError("model: dt must be positive");
        if (kl_weight_max < 0.0) throw ConfigError("model: kl_weight_max must be >= 0");
        if (coordinated_dropout_rate < 0.0 || coordinated_dropout_rate >= 1.0)
            throw ConfigError("model: coordinated dropout rate must lie in [0, 1)");
        if (rate_clamp_lo <= 0.0 || rate_clamp_hi <= rate_clamp_lo)
            throw ConfigError("model: invalid rate clamp range");
    }

    LangevinParams langevin_params() const {
        LangevinParams p;
        p.gamma = gamma;
        p.dt = dt;
        return p;
    }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"n_neurons", c.n_neurons},
                       {"n_inputs", c.n_inputs},
                       {"latent_dim", c.latent_dim},
                       {"hidden_dim", c.hidden_dim},
                       {"model_dim", c.model_dim},
                       {"heads", c.heads},
                       {"groups", c.groups},
                       {"kernel_size", c.kernel_size},
                       {"gamma", c.gamma},
                       {"dt", c.dt},
                       {"kl_weight_max", c.kl_weight_max},
                       {"kl_warmup_steps", c.kl_warmup_steps},
                       {"coordinated_dropout_rate", c.coordinated_dropout_rate},
                       {"variant", variant_name(c.variant)},
                       {"seed", c.seed},
                       {"positional_encoding", c.positional_encoding},
                       {"forward_zero_input", c.forward_zero_input},
                       {"rate_clamp_lo", c.rate_clamp_lo},
                       {"rate_clamp_hi", c.rate_clamp_hi}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    c.n_neurons = j.value("n_neurons", c.n_neurons);
    c.n_inputs = j.value("n_inputs", c.n_inputs);
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.model_dim = j.value("model_dim", c.model_dim);
    c.heads = j.value("heads", c.heads);
    c.groups = j.value("groups", c.groups);
    c.kernel_size = j.value("kernel_size", c.kernel_size);
    c.gamma = j.value("gamma", c.gamma);
    c.dt = j.value("dt", c.dt);
    c.kl_weight_max = j.value("kl_weight_max", c.kl_weight_max);
    c.kl_warmup_steps = j.value("kl_warmup_steps", c.kl_warmup_steps);
    c.coordinated_dropout_rate = j.value("coordinated_dropout_rate", c.coordinated_dropout_rate);
    if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
    c.seed = j.value("seed", c.seed);
    c.positional_encoding = j.value("positional_encoding", c.positional_encoding);
    c.forward_zero_input = j.value("forward_zero_input", c.forward_zero_input);
    c.rate_clamp_lo = j.value("rate_clamp_lo", c.rate_clamp_lo);
    c.rate_clamp_hi = j.value("rate_clamp_hi", c.rate_clamp_hi);
}

inline std::uint64_t config_hash(const ModelConfig& c) {
    nlohmann::json j = c;
    return Rng::hash_tag(j.dump());
}

// ---------------------------------------------------------------------------
// Coordinated dropout: zero independent input entries, remember exactly which
// so the reconstruction loss can be restricted to unseen entries.
// ---------------------------------------------------------------------------

struct DropoutMask {
    std::vector<std::uint8_t> dropped;  // rows x cols, 1 = dropped
    std::size_t rows = 0, cols = 0;
    bool empty() const { return dropped.empty(); }
};

inline std::pair<std::vector<double>, DropoutMask> coordinated_dropout(
    const std::vector<double>& spikes, std::size_t rows, std::size_t cols, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0)
        throw ConfigError("coordinated dropout rate must lie in [0, 1), got " + std::to_string(rate));
    if (spikes.size() != rows * cols)
        throw DimensionError("coordinated_dropout: matrix size mismatch");
    std::vector<double> masked = spikes;
    DropoutMask mask;
    mask.rows = rows;
    mask.cols = cols;
    if (rate == 0.0) return {std::move(masked), std::move(mask)};
    mask.dropped.assign(rows * cols, 0);
    for (std::size_t i = 0; i < rows * cols; ++i)
        if (rng.uniform() < rate) {
            mask.dropped[i] = 1;
            masked[i] = 0.0;
        }
    return {std::move(masked), std::move(mask)};
}

// ---------------------------------------------------------------------------
// Poisson negative log-likelihood, sum over masked entries of
// r - x ln r + ln x!. Tape flavor for training, plain flavor for evaluation.
// ---------------------------------------------------------------------------

inline Tensor poisson_nll(const Tensor& rates, const std::vector<double>& spikes,
                          const std::vector<double>& mask = {}) {
    if (spikes.size() != rates.size())
        throw DimensionError("poisson_nll: spikes size does not match rates");
    if (!mask.empty() && mask.size() != rates.size())
        throw DimensionError("poisson_nll: mask size does not match rates");
    double log_fact = 0.0;
    for (std::size_t i = 0; i < spikes.size(); ++i) {
        if (spikes[i] < 0.0) throw DataError("poisson_nll: negative spike count");
        double m = mask.empty() ? 1.0 : mask[i];
        log_fact += m * std::lgamma(spikes[i] + 1.0);
    }
    Tensor x(rates.shape(), spikes);
    Tensor per_entry = sub(rates, mul(x, log(rates)));
    if (!mask.empty()) per_entry = mul(per_entry, Tensor(rates.shape(), mask));
    return add_const(sum(per_entry), log_fact);
}

inline double poisson_nll_value(const std::vector<double>& rates, const std::vector<double>& spikes,
                                const std::vector<double>& mask = {}) {
    if (spikes.size() != rates.size()) throw DimensionError("poisson_nll: size mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < rates.size(); ++i) {
        double m = mask.empty() ? 1.0 : mask[i];
        if (m == 0.0) continue;
        if (spikes[i] < 0.0) throw DataError("poisson_nll: negative spike count");
        double r = rates[i], x = spikes[i];
        double term;
        if (r <= 0.0) {
            if (x > 0.0) throw DomainError("poisson_nll: zero rate with positive count");
            term = 0.0;  // r -> 0 limit with x = 0
        } else {
            term = r - x * std::log(r) + std::lgamma(x + 1.0);
        }
        total += m * term;
    }
    return total;
}

// Pre-drawn randomness for one trial pass; with the bundle fixed, the forward
// pass is a deterministic function of the parameters, which is what the
// finite-difference checks and the resume-exactness guarantee rely on.
struct NoiseBundle {
    DropoutMask cd_mask;
    std::vector<double> eps_z0, eps_v0;
    std::vector<std::vector<double>> eps_ou;  // one row per rollout step
};

struct ForwardPass {
    Tensor rates;     // [bins x n_neurons]
    Tensor kl_total;  // scalar (constant zero for the no-latent variant)
    double kl_z0 = 0.0, kl_v0 = 0.0;
    std::vector<double> kl_vel;                      // per-step velocity KLs
    std::vector<std::vector<double>> z_traj, v_traj; // latent values for export
    DropoutMask cd_mask;                             // the mask actually applied
};

struct ForwardRequest {
    const std::vector<double>* input = nullptr;  // input_rows x n_inputs, unmasked
    std::size_t input_rows = 0;                  // bins the encoder sees
    std::size_t total_bins = 0;                  // sequence length to decode
    const NoiseBundle* noise = nullptr;          // null: evaluation (posterior mean)
    bool train_mode = false;
};

// ---------------------------------------------------------------------------
// The assembled sequential model: recurrent encoder, latent dynamics with the
// coupled-oscillator potential, self-attention decoder.
// ---------------------------------------------------------------------------

class LangevinFlowModel {
public:
    LangevinFlowModel() = default;

    explicit LangevinFlowModel(const ModelConfig& cfg) : cfg_(cfg) {
        cfg.validate();
        Rng init = Rng::substream(cfg.seed, "init");

        if (cfg.variant == Variant::linear_encoder)
            lin_enc_.emplace(cfg.n_inputs, cfg.hidden_dim, init);
        else
            gru_.emplace(cfg.n_inputs, cfg.hidden_dim, init);

        std::size_t head_blocks = latent_blocks();
        if (head_blocks > 0) head_.emplace(cfg.hidden_dim, cfg.latent_dim, head_blocks, init);

        if (cfg.variant != Variant::no_langevin) {
            std::size_t wx_dim = cfg.variant == Variant::input_potential ? cfg.n_inputs : 0;
            potential_.emplace(cfg.latent_dim, cfg.groups, cfg.kernel_size, init, wx_dim);
        }

        if (cfg.variant == Variant::linear_decoder)
            lin_dec_.emplace(decoder_input_dim(), cfg.n_neurons, init);
        else
            attn_.emplace(decoder_input_dim(), cfg.model_dim, cfg.heads, cfg.n_neurons, init,
                          cfg.positional_encoding);
    }

    const ModelConfig& config() const { return cfg_; }

    std::size_t latent_blocks() const {
        switch (cfg_.variant) {
            case Variant::no_langevin: return 0;
            case Variant::first_order: return 2;  // (mu_z, logvar_z) only
            default: return 4;
        }
    }

    std::size_t decoder_input_dim() const {
        switch (cfg_.variant) {
            case Variant::no_langevin: return cfg_.hidden_dim;
            case Variant::first_order: return cfg_.latent_dim + cfg_.hidden_dim;
            default: return 2 * cfg_.latent_dim + cfg_.hidden_dim;
        }
    }

    std::vector<Parameter*> parameters() {
        std::vector<Parameter*> out;
        if (gru_) gru_->collect(out);
        if (lin_enc_) lin_enc_->collect(out);
        if (head_) head_->collect(out);
        if (potential_) {
            out.push_back(&potential_->kernel_half);
            if (potential_->input_coupling) out.push_back(&*potential_->input_coupling);
        }
        if (attn_) attn_->collect(out);
        if (lin_dec_) lin_dec_->collect(out);
        return out;
    }

    OscillatorPotential& potential() { return *potential_; }
    const OscillatorPotential& potential() const { return *potential_; }

    // Draw the full randomness bundle for one training pass of a trial.
    NoiseBundle draw_noise(std::uint64_t run_seed, std::uint64_t epoch, std::uint64_t trial_id,
                           std::size_t bins) const {
        NoiseBundle nb;
        if (cfg_.coordinated_dropout_rate > 0.0) {
            Rng rng = Rng::substream(run_seed, "dropout", epoch, trial_id);
            nb.cd_mask.rows = bins;
            nb.cd_mask.cols = cfg_.n_inputs;
            nb.cd_mask.dropped.assign(bins * cfg_.n_inputs, 0);
            for (auto& m : nb.cd_mask.dropped)
                m = rng.uniform() < cfg_.coordinated_dropout_rate ? 1 : 0;
        }
        std::size_t blocks = latent_blocks();
        if (blocks > 0) {
            Rng rng = Rng::substream(run_seed, "latent-noise", epoch, trial_id);
            nb.eps_z0 = rng.normal_vector(cfg_.latent_dim);
            if (blocks >= 4) nb.eps_v0 = rng.normal_vector(cfg_.latent_dim);
        }
        if (blocks >= 4 && cfg_.variant != Variant::first_order && bins > 1) {
            Rng rng = Rng::substream(run_seed, "ou-noise", epoch, trial_id);
            nb.eps_ou.resize(bins - 1);
            for (auto& row : nb.eps_ou) row = rng.normal_vector(cfg_.latent_dim);
        }
        return nb;
    }

    ForwardPass forward(Tape* tape, const ForwardRequest& req) const {
        if (!req.input) throw ContractError("forward: null input");
        if (req.input_rows == 0) throw ContractError("forward: empty trial");
        if (req.total_bins < req.input_rows)
            throw ContractError("forward: total bins smaller than input rows");
        if (req.input->size() != req.input_rows * cfg_.n_inputs)
            throw DimensionError("forward: input matrix shape mismatch, expected " +
                                 std::to_string(req.input_rows) + " x " + std::to_string(cfg_.n_inputs));
        if (req.train_mode && !req.noise)
            throw ContractError("forward: train mode requires a noise bundle");

        ForwardPass fp;

        // Coordinated dropout on the encoder input.
        std::vector<double> input = *req.input;
        if (req.train_mode && !req.noise->cd_mask.empty()) {
            const DropoutMask& m = req.noise->cd_mask;
            if (m.cols != cfg_.n_inputs || m.rows < req.input_rows)
                throw DimensionError("forward: dropout mask shape mismatch");
            for (std::size_t t = 0; t < req.input_rows; ++t)
                for (std::size_t j = 0; j < cfg_.n_inputs; ++j)
                    if (m.dropped[t * cfg_.n_inputs + j]) input[t * cfg_.n_inputs + j] = 0.0;
            fp.cd_mask = m;
        }

        // Encoder pass over the observed window, zero-input extension beyond.
        std::vector<Tensor> hs = encode(tape, input, req.input_rows, req.total_bins);

        // Latent initialization and rollout.
        const std::vector<double>* eps_z = req.noise && !req.noise->eps_z0.empty() ? &req.noise->eps_z0 : nullptr;
        const std::vector<double>* eps_v = req.noise && !req.noise->eps_v0.empty() ? &req.noise->eps_v0 : nullptr;

        std::vector<Tensor> zs, vs;
        Tensor kl_total = Tensor::scalar(0.0);
        std::size_t steps = req.total_bins - 1;

        if (latent_blocks() > 0) {
            auto head_bound = tape ? head_->bind(*tape) : head_->bind_const();
            auto init = head_->init_latents(head_bound, hs[0], eps_z, eps_v);
            fp.kl_z0 = init.kl_z0.value();
            kl_total = init.kl_z0;
            OscillatorPotential::Context pot = tape ? potential_->bind(*tape) : potential_->bind_const();

            if (cfg_.variant == Variant::first_order) {
                zs.push_back(init.z0);
                for (std::size_t i = 0; i < steps; ++i) zs.push_back(first_order_step(zs.back(), pot));
            } else {
                fp.kl_v0 = init.kl_v0.value();
                kl_total = add(kl_total, init.kl_v0);
                LangevinParams params = cfg_.langevin_params();
                const std::vector<std::vector<double>>* noise =
                    req.noise && !req.noise->eps_ou.empty() ? &req.noise->eps_ou : nullptr;
                std::vector<Tensor> pot_inputs;
                const std::vector<Tensor>* pot_inputs_ptr = nullptr;
                if (cfg_.variant == Variant::input_potential && steps > 0) {
                    pot_inputs.reserve(steps);
                    for (std::size_t i = 0; i < steps; ++i)
                        pot_inputs.push_back(input_row_tensor(input, req.input_rows, i));
                    pot_inputs_ptr = &pot_inputs;
                }
                RolloutResult roll = rollout(init.z0, init.v0, params, pot, steps, noise, pot_inputs_ptr);
                zs = std::move(roll.zs);
                vs = std::move(roll.vs);
                for (const Tensor& mu_q : roll.mu_qs) {
                    Tensor kl = kl_velocity_step(mu_q, params);
                    fp.kl_vel.push_back(kl.value());
                    kl_total = add(kl_total, kl);
                }
            }
            for (const Tensor& z : zs) fp.z_traj.push_back(z.data());
            for (const Tensor& v : vs) fp.v_traj.push_back(v.data());
        }

        // Decoder input: [z_t, v_t, h_t] per timestep (variants drop pieces).
        std::vector<Tensor> rows;
        rows.reserve(req.total_bins);
        for (std::size_t t = 0; t < req.total_bins; ++t) {
            std::vector<Tensor> parts;
            if (!zs.empty()) parts.push_back(reshape(zs[t], Shape{1, cfg_.latent_dim}));
            if (!vs.empty()) parts.push_back(reshape(vs[t], Shape{1, cfg_.latent_dim}));
            parts.push_back(hs[t]);
            rows.push_back(parts.size() == 1 ? parts[0] : concat(parts, 1));
        }
        Tensor dec_in = rows.size() == 1 ? rows[0] : concat(rows, 0);

        if (lin_dec_) {
            auto bound = tape ? lin_dec_->bind(*tape) : lin_dec_->bind_const();
            fp.rates = lin_dec_->decode(bound, dec_in, cfg_.rate_clamp_lo, cfg_.rate_clamp_hi);
        } else {
            auto bound = tape ? attn_->bind(*tape) : attn_->bind_const();
            fp.rates = attn_->decode(bound, dec_in, cfg_.rate_clamp_lo, cfg_.rate_clamp_hi);
        }
        fp.kl_total = kl_total;
        return fp;
    }

    // Loss-bearing forward pass for one trial. The loss mask restricts the
    // reconstruction to entries the encoder did not see: coordinated-dropout
    // positions among held-in neurons plus every held-out entry. Without
    // dropout the full likelihood is used.
    struct TrialLoss {
        Tensor loss;         // scalar, on tape
        Tensor nll;          // scalar, on tape
        ForwardPass fp;
        double loss_value = 0.0, nll_value = 0.0, kl_value = 0.0;
    };

    TrialLoss training_loss(Tape& tape, const TrialBatch& trial, const NoiseBundle& noise,
                            double lambda) const {
        check_trial(trial);
        std::vector<double> input = trial.input_matrix(trial.observed_bins);
        ForwardRequest req;
        req.input = &input;
        req.input_rows = trial.observed_bins;
        req.total_bins = trial.bins;
        req.noise = &noise;
        req.train_mode = true;
        ForwardPass fp = forward(&tape, req);

        std::vector<double> spikes(trial.spikes.begin(), trial.spikes.end());
        std::vector<double> mask = training_mask(trial, fp.cd_mask);
        Tensor nll = poisson_nll(fp.rates, spikes, mask);
        Tensor loss = add(nll, scale(fp.kl_total, lambda));

        TrialLoss out;
        out.loss_value = loss.value();
        out.nll_value = nll.value();
        out.kl_value = fp.kl_total.value();
        out.loss = std::move(loss);
        out.nll = std::move(nll);
        out.fp = std::move(fp);
        return out;
    }

    // Deterministic evaluation pass: held-in spikes over the observed window
    // in, posterior-mean dynamics, rates for the whole sequence out.
    struct Prediction {
        std::vector<double> rates;  // bins x n_neurons
        std::vector<std::vector<double>> z_traj, v_traj;
    };

    Prediction predict(const TrialBatch& trial) const {
        check_trial(trial);
        std::vector<double> input = trial.input_matrix(trial.observed_bins);
        ForwardRequest req;
        req.input = &input;
        req.input_rows = trial.observed_bins;
        req.total_bins = trial.bins;
        ForwardPass fp = forward(nullptr, req);
        Prediction pred;
        pred.rates = fp.rates.data();
        pred.z_traj = std::move(fp.z_traj);
        pred.v_traj = std::move(fp.v_traj);
        return pred;
    }

    std::vector<double> training_mask(const TrialBatch& trial, const DropoutMask& cd) const {
        std::vector<double> mask(trial.bins * trial.n_neurons, 1.0);
        if (cd.empty()) return mask;
        for (std::size_t t = 0; t < trial.observed_bins; ++t)
            for (std::size_t j = 0; j < trial.held_in.size(); ++j)
                mask[t * trial.n_neurons + trial.held_in[j]] =
                    cd.dropped[t * cd.cols + j] ? 1.0 : 0.0;
        return mask;
    }

private:
    void check_trial(const TrialBatch& trial) const {
        if (trial.bins == 0) throw ContractError("model: empty trial");
        if (trial.n_neurons != cfg_.n_neurons)
            throw ContractError("model: trial has " + std::to_string(trial.n_neurons) +
                                " neurons, model expects " + std::to_string(cfg_.n_neurons));
        if (trial.held_in.size() != cfg_.n_inputs)
            throw ContractError("model: trial has " + std::to_string(trial.held_in.size()) +
                                " held-in neurons, model expects " + std::to_string(cfg_.n_inputs));
        if (trial.observed_bins == 0 || trial.observed_bins > trial.bins)
            throw ContractError("model: invalid observed window");
    }

    Tensor input_row_tensor(const std::vector<double>& input, std::size_t input_rows,
                            std::size_t t) const {
        std::vector<double> row(cfg_.n_inputs, 0.0);
        if (t < input_rows)
            std::copy(input.begin() + static_cast<std::ptrdiff_t>(t * cfg_.n_inputs),
                      input.begin() + static_cast<std::ptrdiff_t>((t + 1) * cfg_.n_inputs), row.begin());
        return Tensor(Shape{cfg_.n_inputs}, std::move(row));
    }

    std::vector<Tensor> encode(Tape* tape, const std::vector<double>& input, std::size_t input_rows,
                               std::size_t total_bins) const {
        std::vector<Tensor> hs;
        hs.reserve(total_bins);
        auto row_at = [&](std::size_t t) {
            std::vector<double> row(cfg_.n_inputs, 0.0);
            if (t < input_rows)
                std::copy(input.begin() + static_cast<std::ptrdiff_t>(t * cfg_.n_inputs),
                          input.begin() + static_cast<std::ptrdiff_t>((t + 1) * cfg_.n_inputs),
                          row.begin());
            return Tensor(Shape{1, cfg_.n_inputs}, std::move(row));
        };
        if (lin_enc_) {
            auto bound = tape ? lin_enc_->bind(*tape) : lin_enc_->bind_const();
            for (std::size_t t = 0; t < total_bins; ++t) hs.push_back(lin_enc_->step(bound, row_at(t)));
            return hs;
        }
        auto bound = tape ? gru_->bind(*tape) : gru_->bind_const();
        Tensor h = Tensor::zeros(Shape{1, cfg_.hidden_dim});
        for (std::size_t t = 0; t < total_bins; ++t) {
            if (t >= input_rows && !cfg_.forward_zero_input) {
                hs.push_back(h);  // frozen hidden state beyond the observed window
                continue;
            }
            h = gru_->step(bound, row_at(t), h);
            hs.push_back(h);
        }
        return hs;
    }

    ModelConfig cfg_;
    std::optional<GruCell> gru_;
    std::optional<LinearEncoder> lin_enc_;
    std::optional<InitialLatentHead> head_;
    std::optional<OscillatorPotential> potential_;
    std::optional<TransformerLayer> attn_;
    std::optional<LinearDecoder> lin_dec_;
};

// Human-readable record of everything a checkpoint's behavior depends on.
inline std::string model_card_text(const ModelConfig& cfg) {
    std::ostringstream os;
    nlohmann::json j = cfg;
    os << "langevinflow model card\n";
    os << "variant: " << variant_name(cfg.variant) << "\n";
    os << "config_hash: " << config_hash(cfg) << "\n";
    os << "config: " << j.dump(2) << "\n";
    os << "notes:\n";
    os << "  - decoder: single self-attention layer, residual around attention,"
          " no feed-forward sublayer, no layer norm\n";
    os << "  - positional encoding: " << (cfg.positional_encoding ? "sinusoidal" : "disabled") << "\n";
    os << "  - evaluation uses the velocity transition mean (noise off)\n";
    os << "  - forward-window hidden states: "
       << (cfg.forward_zero_input ? "zero-spike input extension" : "frozen at last observed state")
       << "\n";
    os << "  - coordinated dropout rate " << cfg.coordinated_dropout_rate
       << " (reconstruction loss restricted to dropped entries during training)\n";
    os << "  - spectral norm treated as constant per forward pass\n";
    os << "  - non-paper defaults: hidden/latent/model dims, learning schedule, dropout rate\n";
    return os.str();
}

}  // namespace lgvf
