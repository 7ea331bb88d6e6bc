#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lgvf/errors.hpp"
#include "lgvf/rng.hpp"

namespace lgvf {

// Synthetic benchmark configuration. The attractor parameters and trial
// geometry are recorded in the dataset manifest so a file is always
// self-describing.
struct LorenzConfig {
    double sigma = 10.0;
    double rho = 28.0;
    double beta = 8.0 / 3.0;
    double dt_ode = 0.01;
    std::size_t burn_in = 500;       // integration steps discarded before sampling
    std::size_t steps_per_bin = 5;   // integrator steps between retained bins
    std::size_t bins = 50;           // T+1 samples per trial
    std::size_t n_trials = 1300;
    std::size_t n_neurons = 29;
    double rate_scale = 0.3;         // target mean spikes per bin per neuron
    double val_fraction = 0.2;
    std::uint64_t seed = 7;

    void validate() const {
        if (dt_ode <= 0.0) throw ConfigError("lorenz: dt_ode must be positive");
        if (n_neurons < 3) throw ConfigError("lorenz: need at least 3 neurons");
        if (rate_scale <= 0.0) throw ConfigError("lorenz: rate_scale must be positive");
        if (bins < 1) throw ConfigError("lorenz: need at least one bin");
        if (n_trials < 2) throw ConfigError("lorenz: need at least 2 trials");
        if (steps_per_bin < 1) throw ConfigError("lorenz: steps_per_bin must be >= 1");
        if (val_fraction <= 0.0 || val_fraction >= 1.0)
            throw ConfigError("lorenz: val_fraction must lie in (0, 1)");
    }
};

inline void to_json(nlohmann::json& j, const LorenzConfig& c) {
    j = nlohmann::json{{"sigma", c.sigma},
                       {"rho", c.rho},
                       {"beta", c.beta},
                       {"dt_ode", c.dt_ode},
                       {"burn_in", c.burn_in},
                       {"steps_per_bin", c.steps_per_bin},
                       {"bins", c.bins},
                       {"n_trials", c.n_trials},
                       {"n_neurons", c.n_neurons},
                       {"rate_scale", c.rate_scale},
                       {"val_fraction", c.val_fraction},
                       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, LorenzConfig& c) {
    c.sigma = j.value("sigma", c.sigma);
    c.rho = j.value("rho", c.rho);
    c.beta = j.value("beta", c.beta);
    c.dt_ode = j.value("dt_ode", c.dt_ode);
    c.burn_in = j.value("burn_in", c.burn_in);
    c.steps_per_bin = j.value("steps_per_bin", c.steps_per_bin);
    c.bins = j.value("bins", c.bins);
    c.n_trials = j.value("n_trials", c.n_trials);
    c.n_neurons = j.value("n_neurons", c.n_neurons);
    c.rate_scale = j.value("rate_scale", c.rate_scale);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.seed = j.value("seed", c.seed);
}

// One trial of binned spike counts plus the generator-side ground truth that
// synthetic data can carry. Neurons are partitioned into held-in (model
// input) and held-out (co-smoothing targets); the trailing forward window of
// validation trials is never shown to the model.
struct TrialBatch {
    std::size_t bins = 0;
    std::size_t n_neurons = 0;
    std::vector<std::uint32_t> spikes;     // bins x n_neurons, row-major
    std::vector<double> true_rates;        // same layout, empty if unknown
    std::vector<double> true_latents;      // bins x 3, empty if unknown
    std::vector<std::uint32_t> held_in;    // sorted neuron indices
    std::vector<std::uint32_t> held_out;   // sorted neuron indices
    std::size_t observed_bins = 0;         // observed + forward = bins
    std::optional<std::uint32_t> condition_id;

    std::size_t forward_bins() const { return bins - observed_bins; }
    bool has_rates() const { return !true_rates.empty(); }
    bool has_latents() const { return !true_latents.empty(); }

    std::uint32_t spike(std::size_t t, std::size_t n) const { return spikes[t * n_neurons + n]; }

    // Held-in spike columns as doubles, rows [0, rows), model input layout.
    std::vector<double> input_matrix(std::size_t rows) const {
        std::vector<double> out(rows * held_in.size());
        for (std::size_t t = 0; t < rows; ++t)
            for (std::size_t j = 0; j < held_in.size(); ++j)
                out[t * held_in.size() + j] = static_cast<double>(spike(t, held_in[j]));
        return out;
    }

    bool operator==(const TrialBatch& o) const {
        return bins == o.bins && n_neurons == o.n_neurons && spikes == o.spikes &&
               true_rates == o.true_rates && true_latents == o.true_latents &&
               held_in == o.held_in && held_out == o.held_out &&
               observed_bins == o.observed_bins && condition_id == o.condition_id;
    }
};

struct Dataset {
    LorenzConfig config;
    std::vector<TrialBatch> train;
    std::vector<TrialBatch> val;
};

// ---------------------------------------------------------------------------
// Lorenz integration
// ---------------------------------------------------------------------------

namespace detail {

inline void lorenz_deriv(const LorenzConfig& c, const double y[3], double dy[3]) {
    dy[0] = c.sigma * (y[1] - y[0]);
    dy[1] = y[0] * (c.rho - y[2]) - y[1];
    dy[2] = y[0] * y[1] - c.beta * y[2];
}

inline void rk4_step(const LorenzConfig& c, double y[3]) {
    double k1[3], k2[3], k3[3], k4[3], tmp[3];
    lorenz_deriv(c, y, k1);
    for (int i = 0; i < 3; ++i) tmp[i] = y[i] + 0.5 * c.dt_ode * k1[i];
    lorenz_deriv(c, tmp, k2);
    for (int i = 0; i < 3; ++i) tmp[i] = y[i] + 0.5 * c.dt_ode * k2[i];
    lorenz_deriv(c, tmp, k3);
    for (int i = 0; i < 3; ++i) tmp[i] = y[i] + c.dt_ode * k3[i];
    lorenz_deriv(c, tmp, k4);
    for (int i = 0; i < 3; ++i)
        y[i] += c.dt_ode / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

}  // namespace detail

// Integrate the Lorenz system from `initial`, discard the burn-in, then keep
// every steps_per_bin-th state until `bins` samples are collected. Row-major
// bins x 3.
inline std::vector<double> lorenz_trajectory(const LorenzConfig& cfg, const double initial[3]) {
    cfg.validate();
    double y[3] = {initial[0], initial[1], initial[2]};
    for (int i = 0; i < 3; ++i)
        if (!std::isfinite(y[i])) throw NumericError("lorenz: non-finite initial state");

    auto check = [&](std::size_t step) {
        for (int i = 0; i < 3; ++i)
            if (!std::isfinite(y[i]) || std::abs(y[i]) > 1e6)
                throw NumericError("lorenz: trajectory diverged at integration step " +
                                   std::to_string(step));
    };

    for (std::size_t s = 0; s < cfg.burn_in; ++s) {
        detail::rk4_step(cfg, y);
        check(s);
    }
    std::vector<double> out;
    out.reserve(cfg.bins * 3);
    for (std::size_t b = 0; b < cfg.bins; ++b) {
        if (b > 0)
            for (std::size_t s = 0; s < cfg.steps_per_bin; ++s) {
                detail::rk4_step(cfg, y);
                check(cfg.burn_in + (b - 1) * cfg.steps_per_bin + s);
            }
        out.push_back(y[0]);
        out.push_back(y[1]);
        out.push_back(y[2]);
    }
    return out;
}

// Random linear readout from latent states to firing rates. States are
// standardized per coordinate over the whole dataset, mapped through a fixed
// 3 -> n_neurons Gaussian matrix, and exponentiated; per-neuron biases are
// calibrated so every neuron's empirical mean rate equals rate_scale exactly.
struct RateProjection {
    std::vector<double> weights;  // n_neurons x 3
    std::vector<double> bias;     // n_neurons
    double state_mean[3] = {0, 0, 0};
    double state_std[3] = {1, 1, 1};
    std::size_t n_neurons = 0;

    std::vector<double> rates_for(const std::vector<double>& states) const {
        std::size_t bins = states.size() / 3;
        std::vector<double> out(bins * n_neurons);
        for (std::size_t t = 0; t < bins; ++t) {
            double s[3];
            for (int c = 0; c < 3; ++c)
                s[c] = (states[t * 3 + c] - state_mean[c]) / state_std[c];
            for (std::size_t n = 0; n < n_neurons; ++n) {
                double lin = bias[n];
                for (int c = 0; c < 3; ++c) lin += weights[n * 3 + c] * s[c];
                out[t * n_neurons + n] = std::exp(lin);
            }
        }
        return out;
    }
};

inline RateProjection fit_rate_projection(const std::vector<std::vector<double>>& trajectories,
                                          std::size_t n_neurons, double rate_scale, Rng& rng) {
    RateProjection proj;
    proj.n_neurons = n_neurons;

    // Pooled standardization of the three coordinates.
    double sum[3] = {0, 0, 0}, sq[3] = {0, 0, 0};
    std::size_t count = 0;
    for (const auto& traj : trajectories) {
        std::size_t bins = traj.size() / 3;
        for (std::size_t t = 0; t < bins; ++t)
            for (int c = 0; c < 3; ++c) {
                sum[c] += traj[t * 3 + c];
                sq[c] += traj[t * 3 + c] * traj[t * 3 + c];
            }
        count += bins;
    }
    for (int c = 0; c < 3; ++c) {
        proj.state_mean[c] = sum[c] / static_cast<double>(count);
        double var = sq[c] / static_cast<double>(count) - proj.state_mean[c] * proj.state_mean[c];
        proj.state_std[c] = var > 1e-24 ? std::sqrt(var) : 1.0;
    }

    proj.weights.resize(n_neurons * 3);
    double inv_sqrt3 = 1.0 / std::sqrt(3.0);
    for (auto& w : proj.weights) w = rng.normal() * inv_sqrt3;

    // Calibrate biases: mean over the dataset of exp(w . s + b) == rate_scale.
    std::vector<double> mean_exp(n_neurons, 0.0);
    for (const auto& traj : trajectories) {
        std::size_t bins = traj.size() / 3;
        for (std::size_t t = 0; t < bins; ++t) {
            double s[3];
            for (int c = 0; c < 3; ++c)
                s[c] = (traj[t * 3 + c] - proj.state_mean[c]) / proj.state_std[c];
            for (std::size_t n = 0; n < n_neurons; ++n) {
                double lin = 0.0;
                for (int c = 0; c < 3; ++c) lin += proj.weights[n * 3 + c] * s[c];
                mean_exp[n] += std::exp(lin);
            }
        }
    }
    proj.bias.resize(n_neurons);
    for (std::size_t n = 0; n < n_neurons; ++n)
        proj.bias[n] = std::log(rate_scale) - std::log(mean_exp[n] / static_cast<double>(count));
    return proj;
}

inline std::vector<std::uint32_t> sample_spikes(const std::vector<double>& rates, Rng& rng) {
    std::vector<std::uint32_t> out(rates.size());
    for (std::size_t i = 0; i < rates.size(); ++i) {
        if (rates[i] <= 0.0) throw DataError("sample_spikes: rates must be positive");
        out[i] = static_cast<std::uint32_t>(rng.poisson(rates[i]));
    }
    return out;
}

// Octant of the initial condition relative to the sampling box center; fixed
// grid so conditions are reproducible and every condition collects many
// trials.
inline std::uint32_t condition_of_initial(const double y[3]) {
    return static_cast<std::uint32_t>((y[0] > 0.0 ? 1 : 0) | (y[1] > 0.0 ? 2 : 0) |
                                      (y[2] > 25.0 ? 4 : 0));
}

inline Dataset make_dataset(const LorenzConfig& cfg) {
    cfg.validate();

    std::vector<std::vector<double>> trajectories(cfg.n_trials);
    std::vector<std::uint32_t> conditions(cfg.n_trials);
    for (std::size_t i = 0; i < cfg.n_trials; ++i) {
        Rng init_rng = Rng::substream(cfg.seed, "lorenz-init", i);
        double y0[3] = {init_rng.uniform(-10.0, 10.0), init_rng.uniform(-10.0, 10.0),
                        init_rng.uniform(10.0, 40.0)};
        conditions[i] = condition_of_initial(y0);
        trajectories[i] = lorenz_trajectory(cfg, y0);
    }

    Rng proj_rng = Rng::substream(cfg.seed, "projection");
    RateProjection proj = fit_rate_projection(trajectories, cfg.n_neurons, cfg.rate_scale, proj_rng);

    std::size_t held_out_count = cfg.n_neurons / 4;
    std::vector<std::uint32_t> held_in, held_out;
    for (std::size_t n = 0; n < cfg.n_neurons; ++n) {
        if (n >= cfg.n_neurons - held_out_count)
            held_out.push_back(static_cast<std::uint32_t>(n));
        else
            held_in.push_back(static_cast<std::uint32_t>(n));
    }
    std::size_t forward = cfg.bins / 4;

    std::size_t n_val = static_cast<std::size_t>(static_cast<double>(cfg.n_trials) * cfg.val_fraction);
    n_val = std::max<std::size_t>(n_val, 1);
    std::size_t n_train = cfg.n_trials - n_val;

    Dataset ds;
    ds.config = cfg;
    for (std::size_t i = 0; i < cfg.n_trials; ++i) {
        TrialBatch trial;
        trial.bins = cfg.bins;
        trial.n_neurons = cfg.n_neurons;
        trial.true_latents = trajectories[i];
        trial.true_rates = proj.rates_for(trajectories[i]);
        Rng spike_rng = Rng::substream(cfg.seed, "spikes", i);
        trial.spikes = sample_spikes(trial.true_rates, spike_rng);
        trial.held_in = held_in;
        trial.held_out = held_out;
        trial.condition_id = conditions[i];
        bool is_val = i >= n_train;
        trial.observed_bins = is_val ? cfg.bins - forward : cfg.bins;
        (is_val ? ds.val : ds.train).push_back(std::move(trial));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// On-disk trial format. Binary layout per file:
//   magic "LGVF", u32 version=1, u32 trial count, then per trial:
//   u32 bins, u32 n_neurons, u8 flags (1 rates, 2 latents, 4 condition),
//   spikes as u32[bins*n_neurons], then rates f64[bins*n_neurons],
//   latents f64[bins*3], condition u32 as flagged. Little-endian throughout.
// Split membership (held-in/out neurons, observed bins) rides in a JSON
// sidecar at <path>.json so the binary layout stays minimal.
// ---------------------------------------------------------------------------

namespace detail {

class ByteWriter {
public:
    explicit ByteWriter(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw FormatError("cannot open for writing: " + path);
    }
    void u8(std::uint8_t v) { raw(&v, 1); }
    void u32(std::uint32_t v) {
        std::uint8_t b[4] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                             static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 24)};
        raw(b, 4);
    }
    void f64(double v) {
        std::uint64_t u;
        std::memcpy(&u, &v, 8);
        std::uint8_t b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(u >> (8 * i));
        raw(b, 8);
    }
    void raw(const void* p, std::size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    }

private:
    std::ofstream out_;
};

class ByteReader {
public:
    explicit ByteReader(const std::string& path) : in_(path, std::ios::binary) {
        if (!in_) throw FormatError("cannot open for reading: " + path);
    }
    std::uint8_t u8() {
        std::uint8_t v;
        raw(&v, 1);
        return v;
    }
    std::uint32_t u32() {
        std::uint8_t b[4];
        raw(b, 4);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }
    double f64() {
        std::uint8_t b[8];
        raw(b, 8);
        std::uint64_t u = 0;
        for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        double v;
        std::memcpy(&v, &u, 8);
        return v;
    }
    void raw(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw FormatError("truncated file", offset_ + static_cast<std::size_t>(in_.gcount()));
        offset_ += n;
    }
    std::size_t offset() const { return offset_; }

private:
    std::ifstream in_;
    std::size_t offset_ = 0;
};

}  // namespace detail

inline void write_trials(const std::string& path, const std::vector<TrialBatch>& batches) {
    {
        detail::ByteWriter w(path);
        w.raw("LGVF", 4);
        w.u32(1);
        w.u32(static_cast<std::uint32_t>(batches.size()));
        for (const TrialBatch& t : batches) {
            w.u32(static_cast<std::uint32_t>(t.bins));
            w.u32(static_cast<std::uint32_t>(t.n_neurons));
            std::uint8_t flags = 0;
            if (t.has_rates()) flags |= 1;
            if (t.has_latents()) flags |= 2;
            if (t.condition_id) flags |= 4;
            w.u8(flags);
            for (std::uint32_t s : t.spikes) w.u32(s);
            if (t.has_rates())
                for (double r : t.true_rates) w.f64(r);
            if (t.has_latents())
                for (double l : t.true_latents) w.f64(l);
            if (t.condition_id) w.u32(*t.condition_id);
        }
    }
    nlohmann::json side;
    side["format"] = "LGVF-sidecar";
    side["version"] = 1;
    nlohmann::json splits = nlohmann::json::array();
    for (const TrialBatch& t : batches)
        splits.push_back(nlohmann::json{{"held_in", t.held_in},
                                        {"held_out", t.held_out},
                                        {"observed_bins", t.observed_bins}});
    side["trials"] = splits;
    std::ofstream out(path + ".json");
    if (!out) throw FormatError("cannot open for writing: " + path + ".json");
    out << side.dump(2) << "\n";
}

inline std::vector<TrialBatch> read_trials(const std::string& path) {
    detail::ByteReader r(path);
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, "LGVF", 4) != 0)
        throw FormatError("bad magic, expected LGVF", 0);
    std::uint32_t version = r.u32();
    if (version != 1) throw FormatError("unsupported version " + std::to_string(version), 4);
    std::uint32_t count = r.u32();
    std::vector<TrialBatch> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        TrialBatch t;
        t.bins = r.u32();
        t.n_neurons = r.u32();
        std::uint8_t flags = r.u8();
        std::size_t n = t.bins * t.n_neurons;
        t.spikes.resize(n);
        for (auto& s : t.spikes) s = r.u32();
        if (flags & 1) {
            t.true_rates.resize(n);
            for (auto& x : t.true_rates) x = r.f64();
        }
        if (flags & 2) {
            t.true_latents.resize(t.bins * 3);
            for (auto& x : t.true_latents) x = r.f64();
        }
        if (flags & 4) t.condition_id = r.u32();
        t.observed_bins = t.bins;  // default when no sidecar
        out.push_back(std::move(t));
    }

    std::ifstream side_in(path + ".json");
    if (side_in) {
        nlohmann::json side = nlohmann::json::parse(side_in);
        const auto& trials = side.at("trials");
        if (trials.size() != out.size())
            throw FormatError("sidecar trial count " + std::to_string(trials.size()) +
                              " does not match binary count " + std::to_string(out.size()));
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i].held_in = trials[i].at("held_in").get<std::vector<std::uint32_t>>();
            out[i].held_out = trials[i].at("held_out").get<std::vector<std::uint32_t>>();
            out[i].observed_bins = trials[i].at("observed_bins").get<std::size_t>();
        }
    } else {
        for (auto& t : out)
            for (std::size_t n = 0; n < t.n_neurons; ++n)
                t.held_in.push_back(static_cast<std::uint32_t>(n));
    }
    return out;
}

}  // namespace lgvf
