#pragma once

// Small model/trial builders shared by the model, train and acceptance tests.

#include <cstdint>
#include <vector>

#include "lgvf/data.hpp"
#include "lgvf/model.hpp"
#include "lgvf/rng.hpp"

namespace toy {

inline lgvf::ModelConfig config(lgvf::Variant variant = lgvf::Variant::full) {
    lgvf::ModelConfig cfg;
    cfg.n_neurons = 4;
    cfg.n_inputs = 3;
    cfg.latent_dim = 4;
    cfg.hidden_dim = 6;
    cfg.model_dim = 8;
    cfg.heads = 4;
    cfg.groups = 2;
    cfg.kernel_size = 3;
    cfg.gamma = 0.6;
    cfg.kl_weight_max = 0.1;
    cfg.kl_warmup_steps = 10;
    cfg.coordinated_dropout_rate = 0.25;
    cfg.variant = variant;
    cfg.seed = 5;
    return cfg;
}

inline lgvf::TrialBatch trial(std::size_t bins = 4, std::uint64_t seed = 3,
                              std::size_t n_neurons = 4, std::size_t held_out_count = 1) {
    lgvf::TrialBatch t;
    t.bins = bins;
    t.n_neurons = n_neurons;
    t.observed_bins = bins;
    lgvf::Rng rng(seed);
    t.spikes.resize(bins * n_neurons);
    for (auto& s : t.spikes) s = static_cast<std::uint32_t>(rng.poisson(0.8));
    for (std::size_t n = 0; n < n_neurons; ++n) {
        if (n < n_neurons - held_out_count)
            t.held_in.push_back(static_cast<std::uint32_t>(n));
        else
            t.held_out.push_back(static_cast<std::uint32_t>(n));
    }
    return t;
}

inline lgvf::Dataset dataset(std::size_t n_train, std::size_t n_val, std::size_t bins = 4) {
    lgvf::Dataset ds;
    for (std::size_t i = 0; i < n_train; ++i) ds.train.push_back(trial(bins, 100 + i));
    for (std::size_t i = 0; i < n_val; ++i) {
        lgvf::TrialBatch v = trial(bins, 200 + i);
        v.observed_bins = bins > 1 ? bins - 1 : bins;
        v.condition_id = static_cast<std::uint32_t>(i % 2);
        ds.val.push_back(v);
    }
    return ds;
}

}  // namespace toy
