#pragma once

#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lgvf/data.hpp"
#include "lgvf/errors.hpp"
#include "lgvf/model.hpp"

namespace lgvf {

// ---------------------------------------------------------------------------
// Bits per spike relative to a mean-rate null model. Inputs are stacked
// evaluation rows (all trials' in-scope bins concatenated) with the full
// neuron width; `scope` selects the scored columns. The null model is each
// neuron's mean spike count over exactly these rows.
// ---------------------------------------------------------------------------

inline double bits_per_spike(const std::vector<double>& model_rates,
                             const std::vector<double>& spikes, std::size_t rows,
                             std::size_t n_neurons, const std::vector<std::uint32_t>& scope) {
    if (model_rates.size() != rows * n_neurons || spikes.size() != rows * n_neurons)
        throw DimensionError("bits_per_spike: matrix sizes do not match rows x neurons");
    if (rows == 0 || scope.empty()) {
        std::cerr << "[metrics] bits_per_spike: empty scope, returning nan\n";
        return std::numeric_limits<double>::quiet_NaN();
    }
    double total_spikes = 0.0;
    double nll_model = 0.0, nll_null = 0.0;
    for (std::uint32_t n : scope) {
        if (n >= n_neurons) throw DimensionError("bits_per_spike: neuron index out of range");
        double mean = 0.0;
        for (std::size_t t = 0; t < rows; ++t) mean += spikes[t * n_neurons + n];
        mean /= static_cast<double>(rows);
        for (std::size_t t = 0; t < rows; ++t) {
            double x = spikes[t * n_neurons + n];
            double r = model_rates[t * n_neurons + n];
            if (r <= 0.0) throw DomainError("bits_per_spike: non-positive model rate");
            nll_model += r - x * std::log(r) + std::lgamma(x + 1.0);
            if (mean > 0.0)
                nll_null += mean - x * std::log(mean) + std::lgamma(x + 1.0);
            // mean == 0 forces x == 0 on every row; the r -> 0 limit of the
            // null likelihood contributes nothing.
            total_spikes += x;
        }
    }
    if (total_spikes == 0.0) {
        std::cerr << "[metrics] bits_per_spike: no spikes in scope, returning nan\n";
        return std::numeric_limits<double>::quiet_NaN();
    }
    return (nll_null - nll_model) / (total_spikes * std::numbers::ln2_v<double>);
}

// ---------------------------------------------------------------------------
// Coefficient of determination, column-wise, averaged over columns whose
// target has nonzero variance.
// ---------------------------------------------------------------------------

inline double r2(const std::vector<double>& pred, const std::vector<double>& target,
                 std::size_t rows, std::size_t cols,
                 std::vector<double>* per_column = nullptr) {
    if (pred.size() != rows * cols || target.size() != rows * cols)
        throw DimensionError("r2: shapes differ");
    if (rows == 0 || cols == 0) return std::numeric_limits<double>::quiet_NaN();
    double total = 0.0;
    std::size_t used = 0;
    if (per_column) per_column->assign(cols, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t c = 0; c < cols; ++c) {
        double mean = 0.0;
        for (std::size_t t = 0; t < rows; ++t) mean += target[t * cols + c];
        mean /= static_cast<double>(rows);
        double ss_tot = 0.0, ss_res = 0.0;
        for (std::size_t t = 0; t < rows; ++t) {
            double d = target[t * cols + c] - mean;
            ss_tot += d * d;
            double e = target[t * cols + c] - pred[t * cols + c];
            ss_res += e * e;
        }
        if (ss_tot <= 1e-30) continue;  // constant target column excluded
        double val = 1.0 - ss_res / ss_tot;
        if (per_column) (*per_column)[c] = val;
        total += val;
        ++used;
    }
    if (used == 0) {
        std::cerr << "[metrics] r2: all target columns constant, returning nan\n";
        return std::numeric_limits<double>::quiet_NaN();
    }
    return total / static_cast<double>(used);
}

// ---------------------------------------------------------------------------
// Ridge regression decode: closed-form (X'X + aI)^-1 X'Y with intercept and
// per-feature standardization, fit on one trial subset, scored on another.
// ---------------------------------------------------------------------------

namespace detail {

// Solve (A + alpha I) X = B for SPD A via Cholesky; A is n x n, B is n x m.
inline std::vector<double> solve_ridge_system(std::vector<double> a, std::vector<double> b,
                                              std::size_t n, std::size_t m, double alpha) {
    for (std::size_t i = 0; i < n; ++i) a[i * n + i] += alpha;
    // Cholesky A = L L'
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a[i * n + j];
            for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
            if (i == j) {
                if (s <= 0.0) throw NumericError("ridge: matrix not positive definite");
                a[i * n + i] = std::sqrt(s);
            } else {
                a[i * n + j] = s / a[j * n + j];
            }
        }
    }
    // Forward/backward substitution per column of B.
    std::vector<double> x(n * m);
    for (std::size_t c = 0; c < m; ++c) {
        std::vector<double> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            double s = b[i * m + c];
            for (std::size_t k = 0; k < i; ++k) s -= a[i * n + k] * y[k];
            y[i] = s / a[i * n + i];
        }
        for (std::size_t i = n; i-- > 0;) {
            double s = y[i];
            for (std::size_t k = i + 1; k < n; ++k) s -= a[k * n + i] * x[k * m + c];
            x[i * m + c] = s / a[i * n + i];
        }
    }
    return x;
}

}  // namespace detail

// PSTH R2: average rates within each condition (two trials minimum) for
// prediction and ground truth, then column-wise R2 over the stacked
// (condition x time) rows. Trials are scored over their leading `bins`
// window; all trials of a condition must share that window.
inline double psth_r2(const std::vector<std::vector<double>>& rates_by_trial,
                      const std::vector<std::optional<std::uint32_t>>& condition_ids,
                      const std::vector<std::vector<double>>& true_rates_by_trial,
                      const std::vector<std::size_t>& bins_by_trial, std::size_t n_neurons) {
    if (rates_by_trial.size() != condition_ids.size() ||
        rates_by_trial.size() != true_rates_by_trial.size() ||
        rates_by_trial.size() != bins_by_trial.size())
        throw ContractError("psth_r2: per-trial inputs differ in length");
    std::map<std::uint32_t, std::vector<std::size_t>> by_condition;
    for (std::size_t i = 0; i < condition_ids.size(); ++i)
        if (condition_ids[i]) by_condition[*condition_ids[i]].push_back(i);
    std::vector<double> pred, truth;
    for (const auto& [cond, members] : by_condition) {
        if (members.size() < 2) continue;  // single-trial conditions excluded
        std::size_t bins = bins_by_trial[members[0]];
        std::vector<double> avg_pred(bins * n_neurons, 0.0), avg_true(bins * n_neurons, 0.0);
        for (std::size_t idx : members) {
            if (bins_by_trial[idx] != bins)
                throw ContractError("psth_r2: trials in one condition must share bin counts");
            for (std::size_t j = 0; j < bins * n_neurons; ++j) {
                avg_pred[j] += rates_by_trial[idx][j];
                avg_true[j] += true_rates_by_trial[idx][j];
            }
        }
        for (auto& v : avg_pred) v /= static_cast<double>(members.size());
        for (auto& v : avg_true) v /= static_cast<double>(members.size());
        pred.insert(pred.end(), avg_pred.begin(), avg_pred.end());
        truth.insert(truth.end(), avg_true.begin(), avg_true.end());
    }
    if (pred.empty()) {
        std::cerr << "[metrics] no condition has two or more trials, psth_r2 is nan\n";
        return std::numeric_limits<double>::quiet_NaN();
    }
    return r2(pred, truth, pred.size() / n_neurons, n_neurons);
}

// X: rows x n_features, Y: rows x n_targets; `fit_rows` leading rows train
// the regression, the remainder is scored.
inline double ridge_decode_r2(const std::vector<double>& x, const std::vector<double>& y,
                              std::size_t rows, std::size_t n_features, std::size_t n_targets,
                              std::size_t fit_rows, double alpha) {
    if (alpha <= 0.0) throw ConfigError("ridge: alpha must be positive");
    if (fit_rows == 0 || fit_rows >= rows)
        throw ContractError("ridge: need nonempty fit and test row ranges");

    // Standardize features on the fit split.
    std::vector<double> mean(n_features, 0.0), stdev(n_features, 0.0);
    for (std::size_t t = 0; t < fit_rows; ++t)
        for (std::size_t f = 0; f < n_features; ++f) mean[f] += x[t * n_features + f];
    for (auto& v : mean) v /= static_cast<double>(fit_rows);
    for (std::size_t t = 0; t < fit_rows; ++t)
        for (std::size_t f = 0; f < n_features; ++f) {
            double d = x[t * n_features + f] - mean[f];
            stdev[f] += d * d;
        }
    for (auto& v : stdev) {
        v = std::sqrt(v / static_cast<double>(fit_rows));
        if (v < 1e-12) v = 1.0;
    }
    std::vector<double> ymean(n_targets, 0.0);
    for (std::size_t t = 0; t < fit_rows; ++t)
        for (std::size_t c = 0; c < n_targets; ++c) ymean[c] += y[t * n_targets + c];
    for (auto& v : ymean) v /= static_cast<double>(fit_rows);

    auto feat = [&](std::size_t t, std::size_t f) {
        return (x[t * n_features + f] - mean[f]) / stdev[f];
    };

    // Normal equations on the centered fit split.
    std::vector<double> xtx(n_features * n_features, 0.0), xty(n_features * n_targets, 0.0);
    for (std::size_t t = 0; t < fit_rows; ++t)
        for (std::size_t f = 0; f < n_features; ++f) {
            double xf = feat(t, f);
            for (std::size_t g = f; g < n_features; ++g) xtx[f * n_features + g] += xf * feat(t, g);
            for (std::size_t c = 0; c < n_targets; ++c)
                xty[f * n_targets + c] += xf * (y[t * n_targets + c] - ymean[c]);
        }
    for (std::size_t f = 0; f < n_features; ++f)
        for (std::size_t g = 0; g < f; ++g) xtx[f * n_features + g] = xtx[g * n_features + f];

    std::vector<double> beta = detail::solve_ridge_system(std::move(xtx), std::move(xty),
                                                          n_features, n_targets, alpha);

    std::size_t test_rows = rows - fit_rows;
    std::vector<double> pred(test_rows * n_targets), truth(test_rows * n_targets);
    for (std::size_t t = 0; t < test_rows; ++t)
        for (std::size_t c = 0; c < n_targets; ++c) {
            double v = ymean[c];
            for (std::size_t f = 0; f < n_features; ++f)
                v += feat(fit_rows + t, f) * beta[f * n_targets + c];
            pred[t * n_targets + c] = v;
            truth[t * n_targets + c] = y[(fit_rows + t) * n_targets + c];
        }
    return r2(pred, truth, test_rows, n_targets);
}

// ---------------------------------------------------------------------------
// Trial-level metric drivers
// ---------------------------------------------------------------------------

struct EvalOptions {
    double ridge_alpha = 1.0;
    double decode_fit_fraction = 0.5;  // leading fraction of val trials fits the decoder
};

struct EvalReport {
    double co_bps = std::numeric_limits<double>::quiet_NaN();
    double fp_bps = std::numeric_limits<double>::quiet_NaN();
    double rate_r2 = std::numeric_limits<double>::quiet_NaN();
    double psth_r2 = std::numeric_limits<double>::quiet_NaN();
    double decode_r2 = std::numeric_limits<double>::quiet_NaN();
    double val_nll = std::numeric_limits<double>::quiet_NaN();  // mean per trial, observed bins
    std::vector<double> co_bps_per_neuron;   // held-out neurons, NaN elsewhere
    std::vector<double> rate_r2_per_neuron;  // all neurons
    std::size_t n_trials = 0;

    std::string to_text() const {
        std::ostringstream os;
        os.precision(10);
        os << "# evaluation report\n";
        os << "# null model: per-neuron mean rate over the evaluation bins\n";
        os << "# rate_r2 and psth_r2 are computed over observed bins\n";
        os << "co_bps = " << co_bps << "\n";
        os << "fp_bps = " << fp_bps << "\n";
        os << "rate_r2 = " << rate_r2 << "\n";
        os << "psth_r2 = " << psth_r2 << "\n";
        os << "decode_r2 = " << decode_r2 << "\n";
        os << "val_nll = " << val_nll << "\n";
        os << "n_trials = " << n_trials << "\n";
        return os.str();
    }

    std::string to_tsv() const {
        std::ostringstream os;
        os.precision(10);
        os << "metric\tscope\tvalue\n";
        os << "co_bps\tall\t" << co_bps << "\n";
        os << "fp_bps\tall\t" << fp_bps << "\n";
        os << "rate_r2\tall\t" << rate_r2 << "\n";
        os << "psth_r2\tall\t" << psth_r2 << "\n";
        os << "decode_r2\tall\t" << decode_r2 << "\n";
        os << "val_nll\tall\t" << val_nll << "\n";
        for (std::size_t n = 0; n < co_bps_per_neuron.size(); ++n)
            if (!std::isnan(co_bps_per_neuron[n]))
                os << "co_bps\tneuron_" << n << "\t" << co_bps_per_neuron[n] << "\n";
        for (std::size_t n = 0; n < rate_r2_per_neuron.size(); ++n)
            if (!std::isnan(rate_r2_per_neuron[n]))
                os << "rate_r2\tneuron_" << n << "\t" << rate_r2_per_neuron[n] << "\n";
        return os.str();
    }
};

// Evaluate with externally supplied rate predictions (one bins x n_neurons
// matrix per trial). This is the path oracle-rate checks and the model
// evaluation share.
inline EvalReport evaluate_rates(const std::vector<std::vector<double>>& rates,
                                 const std::vector<TrialBatch>& trials,
                                 const EvalOptions& opts = {}) {
    if (rates.size() != trials.size())
        throw ContractError("evaluate_rates: one rate matrix per trial required");
    EvalReport report;
    report.n_trials = trials.size();
    if (trials.empty()) return report;
    std::size_t n_neurons = trials[0].n_neurons;

    // Stack observed-bin rows for co-smoothing / rate R2, forward rows for fp.
    std::vector<double> obs_rates, obs_spikes, fwd_rates, fwd_spikes;
    std::vector<double> obs_true_rates;
    bool have_true_rates = true;
    double nll_sum = 0.0;
    for (std::size_t i = 0; i < trials.size(); ++i) {
        const TrialBatch& t = trials[i];
        if (t.n_neurons != n_neurons) throw ContractError("evaluate_rates: neuron width differs");
        if (rates[i].size() != t.bins * n_neurons)
            throw DimensionError("evaluate_rates: rate matrix shape mismatch");
        have_true_rates = have_true_rates && t.has_rates();
        for (std::size_t b = 0; b < t.bins; ++b) {
            bool observed = b < t.observed_bins;
            for (std::size_t n = 0; n < n_neurons; ++n) {
                double r = rates[i][b * n_neurons + n];
                double x = static_cast<double>(t.spike(b, n));
                if (observed) {
                    obs_rates.push_back(r);
                    obs_spikes.push_back(x);
                    if (t.has_rates()) obs_true_rates.push_back(t.true_rates[b * n_neurons + n]);
                } else {
                    fwd_rates.push_back(r);
                    fwd_spikes.push_back(x);
                }
            }
        }
        std::vector<double> trial_rates_obs(rates[i].begin(),
                                            rates[i].begin() + static_cast<std::ptrdiff_t>(t.observed_bins * n_neurons));
        std::vector<double> trial_spikes_obs;
        trial_spikes_obs.reserve(t.observed_bins * n_neurons);
        for (std::size_t b = 0; b < t.observed_bins; ++b)
            for (std::size_t n = 0; n < n_neurons; ++n)
                trial_spikes_obs.push_back(static_cast<double>(t.spike(b, n)));
        nll_sum += poisson_nll_value(trial_rates_obs, trial_spikes_obs);
    }
    report.val_nll = nll_sum / static_cast<double>(trials.size());

    std::size_t obs_rows = obs_rates.size() / n_neurons;
    std::size_t fwd_rows = fwd_rates.size() / n_neurons;

    const std::vector<std::uint32_t>& held_out = trials[0].held_out;
    if (!held_out.empty() && obs_rows > 0) {
        report.co_bps = bits_per_spike(obs_rates, obs_spikes, obs_rows, n_neurons, held_out);
        report.co_bps_per_neuron.assign(n_neurons, std::numeric_limits<double>::quiet_NaN());
        for (std::uint32_t n : held_out)
            report.co_bps_per_neuron[n] = bits_per_spike(obs_rates, obs_spikes, obs_rows, n_neurons, {n});
    }

    if (fwd_rows > 0) {
        std::vector<std::uint32_t> all;
        for (std::size_t n = 0; n < n_neurons; ++n) all.push_back(static_cast<std::uint32_t>(n));
        report.fp_bps = bits_per_spike(fwd_rates, fwd_spikes, fwd_rows, n_neurons, all);
    } else {
        std::cerr << "[metrics] forward window is empty, fp_bps is nan\n";
    }

    if (have_true_rates && obs_rows > 0)
        report.rate_r2 = r2(obs_rates, obs_true_rates, obs_rows, n_neurons, &report.rate_r2_per_neuron);

    // PSTH R2 over conditions with at least two trials, observed bins.
    if (have_true_rates) {
        std::vector<std::vector<double>> pred_obs, true_obs;
        std::vector<std::optional<std::uint32_t>> conditions;
        std::vector<std::size_t> bins_obs;
        for (std::size_t i = 0; i < trials.size(); ++i) {
            const TrialBatch& t = trials[i];
            std::size_t n = t.observed_bins * n_neurons;
            pred_obs.emplace_back(rates[i].begin(), rates[i].begin() + static_cast<std::ptrdiff_t>(n));
            true_obs.emplace_back(t.true_rates.begin(),
                                  t.true_rates.begin() + static_cast<std::ptrdiff_t>(n));
            conditions.push_back(t.condition_id);
            bins_obs.push_back(t.observed_bins);
        }
        report.psth_r2 = psth_r2(pred_obs, conditions, true_obs, bins_obs, n_neurons);
    }

    // Ridge decode of behavior (the true latent coordinates on synthetic
    // data) from predicted rates, observed bins only.
    bool have_latents = true;
    for (const auto& t : trials) have_latents = have_latents && t.has_latents();
    if (have_latents && trials.size() >= 2) {
        std::size_t fit_trials = static_cast<std::size_t>(
            static_cast<double>(trials.size()) * opts.decode_fit_fraction);
        fit_trials = std::max<std::size_t>(1, std::min(fit_trials, trials.size() - 1));
        std::vector<double> x, y;
        std::size_t fit_rows = 0;
        for (std::size_t i = 0; i < trials.size(); ++i) {
            const TrialBatch& t = trials[i];
            for (std::size_t b = 0; b < t.observed_bins; ++b) {
                for (std::size_t n = 0; n < n_neurons; ++n) x.push_back(rates[i][b * n_neurons + n]);
                for (int c = 0; c < 3; ++c) y.push_back(t.true_latents[b * 3 + static_cast<std::size_t>(c)]);
            }
            if (i + 1 == fit_trials) fit_rows = x.size() / n_neurons;
        }
        report.decode_r2 = ridge_decode_r2(x, y, x.size() / n_neurons, n_neurons, 3, fit_rows,
                                           opts.ridge_alpha);
    }
    return report;
}

inline std::vector<std::vector<double>> predict_all(const LangevinFlowModel& model,
                                                    const std::vector<TrialBatch>& trials) {
    std::vector<std::vector<double>> rates;
    rates.reserve(trials.size());
    for (const TrialBatch& t : trials) rates.push_back(model.predict(t).rates);
    return rates;
}

inline EvalReport run_eval(const LangevinFlowModel& model, const std::vector<TrialBatch>& trials,
                           const EvalOptions& opts = {}) {
    return evaluate_rates(predict_all(model, trials), trials, opts);
}

// Light per-epoch validation: co-smoothing bits per spike and mean NLL only.
struct ValidationScore {
    double co_bps = std::numeric_limits<double>::quiet_NaN();
    double nll = std::numeric_limits<double>::quiet_NaN();
};

inline ValidationScore co_smoothing(const LangevinFlowModel& model,
                                    const std::vector<TrialBatch>& trials) {
    ValidationScore score;
    if (trials.empty()) return score;
    std::size_t n_neurons = trials[0].n_neurons;
    std::vector<double> obs_rates, obs_spikes;
    double nll_sum = 0.0;
    for (const TrialBatch& t : trials) {
        auto pred = model.predict(t);
        std::vector<double> trial_rates, trial_spikes;
        for (std::size_t b = 0; b < t.observed_bins; ++b)
            for (std::size_t n = 0; n < n_neurons; ++n) {
                obs_rates.push_back(pred.rates[b * n_neurons + n]);
                obs_spikes.push_back(static_cast<double>(t.spike(b, n)));
                trial_rates.push_back(pred.rates[b * n_neurons + n]);
                trial_spikes.push_back(static_cast<double>(t.spike(b, n)));
            }
        nll_sum += poisson_nll_value(trial_rates, trial_spikes);
    }
    score.nll = nll_sum / static_cast<double>(trials.size());
    if (!trials[0].held_out.empty())
        score.co_bps = bits_per_spike(obs_rates, obs_spikes, obs_rates.size() / n_neurons,
                                      n_neurons, trials[0].held_out);
    return score;
}

// Forward-prediction bits per spike alone (all neurons, forward bins).
inline double forward_prediction(const LangevinFlowModel& model,
                                 const std::vector<TrialBatch>& trials) {
    if (trials.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::size_t n_neurons = trials[0].n_neurons;
    std::vector<double> fwd_rates, fwd_spikes;
    for (const TrialBatch& t : trials) {
        auto pred = model.predict(t);
        for (std::size_t b = t.observed_bins; b < t.bins; ++b)
            for (std::size_t n = 0; n < n_neurons; ++n) {
                fwd_rates.push_back(pred.rates[b * n_neurons + n]);
                fwd_spikes.push_back(static_cast<double>(t.spike(b, n)));
            }
    }
    std::size_t rows = fwd_rates.size() / n_neurons;
    if (rows == 0) {
        std::cerr << "[metrics] forward window is empty, fp_bps is nan\n";
        return std::numeric_limits<double>::quiet_NaN();
    }
    std::vector<std::uint32_t> all;
    for (std::size_t n = 0; n < n_neurons; ++n) all.push_back(static_cast<std::uint32_t>(n));
    return bits_per_spike(fwd_rates, fwd_spikes, rows, n_neurons, all);
}

}  // namespace lgvf
