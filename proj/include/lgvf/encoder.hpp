#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "lgvf/errors.hpp"
#include "lgvf/rng.hpp"
#include "lgvf/tensor.hpp"

namespace lgvf {

// Gated recurrent cell. Gate matrices act on the concatenation [x, h], the
// candidate acts on [x, r * h]:
//   r = sigmoid([x,h] Wr + br)
//   u = sigmoid([x,h] Wu + bu)
//   c = tanh([x, r*h] Wc + bc)
//   h' = (1-u)*h + u*c
class GruCell {
public:
    GruCell() = default;

    GruCell(std::size_t input_dim, std::size_t hidden_dim, Rng& rng)
        : input_dim_(input_dim), hidden_dim_(hidden_dim) {
        double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
        auto init_matrix = [&](const std::string& name) {
            std::vector<double> w((input_dim + hidden_dim) * hidden_dim);
            for (auto& v : w) v = rng.uniform(-bound, bound);
            return Parameter(name, Shape{input_dim + hidden_dim, hidden_dim}, std::move(w));
        };
        auto init_bias = [&](const std::string& name) {
            std::vector<double> b(hidden_dim);
            for (auto& v : b) v = rng.uniform(-bound, bound);
            return Parameter(name, Shape{hidden_dim}, std::move(b));
        };
        w_reset = init_matrix("gru.w_reset");
        w_update = init_matrix("gru.w_update");
        w_cand = init_matrix("gru.w_cand");
        b_reset = init_bias("gru.b_reset");
        b_update = init_bias("gru.b_update");
        b_cand = init_bias("gru.b_cand");
    }

    std::size_t input_dim() const { return input_dim_; }
    std::size_t hidden_dim() const { return hidden_dim_; }

    struct Bound {
        Tensor wr, wu, wc;
        Tensor br, bu, bc;  // stored as [1 x hidden]
    };

    Bound bind(Tape& tape) const {
        return Bound{w_reset.leaf(tape),
                     w_update.leaf(tape),
                     w_cand.leaf(tape),
                     reshape(b_reset.leaf(tape), Shape{1, hidden_dim_}),
                     reshape(b_update.leaf(tape), Shape{1, hidden_dim_}),
                     reshape(b_cand.leaf(tape), Shape{1, hidden_dim_})};
    }

    Bound bind_const() const {
        return Bound{Tensor(w_reset.shape, w_reset.value),
                     Tensor(w_update.shape, w_update.value),
                     Tensor(w_cand.shape, w_cand.value),
                     Tensor(Shape{1, hidden_dim_}, b_reset.value),
                     Tensor(Shape{1, hidden_dim_}, b_update.value),
                     Tensor(Shape{1, hidden_dim_}, b_cand.value)};
    }

    // One recurrence step; x is [1 x input_dim], h_prev is [1 x hidden_dim].
    Tensor step(const Bound& b, const Tensor& x, const Tensor& h_prev) const {
        if (x.ndim() != 2 || x.shape()[1] != input_dim_)
            throw DimensionError("gru_step: input shape " + shape_str(x.shape()) + " does not match width " +
                                 std::to_string(input_dim_));
        if (h_prev.ndim() != 2 || h_prev.shape()[1] != hidden_dim_)
            throw DimensionError("gru_step: hidden shape " + shape_str(h_prev.shape()));
        Tensor xh = concat({x, h_prev}, 1);
        Tensor r = sigmoid(add(matmul(xh, b.wr), b.br));
        Tensor u = sigmoid(add(matmul(xh, b.wu), b.bu));
        Tensor xrh = concat({x, mul(r, h_prev)}, 1);
        Tensor c = tanh(add(matmul(xrh, b.wc), b.bc));
        // h' = (1-u)*h + u*c
        return add(sub(h_prev, mul(u, h_prev)), mul(u, c));
    }

    void collect(std::vector<Parameter*>& out) {
        out.push_back(&w_reset);
        out.push_back(&w_update);
        out.push_back(&w_cand);
        out.push_back(&b_reset);
        out.push_back(&b_update);
        out.push_back(&b_cand);
    }

    Parameter w_reset, w_update, w_cand;
    Parameter b_reset, b_update, b_cand;

private:
    std::size_t input_dim_ = 0, hidden_dim_ = 0;
};

// Ablation encoder: per-timestep affine map with no recurrence.
class LinearEncoder {
public:
    LinearEncoder() = default;

    LinearEncoder(std::size_t input_dim, std::size_t hidden_dim, Rng& rng)
        : input_dim_(input_dim), hidden_dim_(hidden_dim) {
        double bound = 1.0 / std::sqrt(static_cast<double>(input_dim));
        std::vector<double> wv(input_dim * hidden_dim);
        for (auto& v : wv) v = rng.uniform(-bound, bound);
        w = Parameter("linenc.w", Shape{input_dim, hidden_dim}, std::move(wv));
        std::vector<double> bv(hidden_dim, 0.0);
        b = Parameter("linenc.b", Shape{hidden_dim}, std::move(bv));
    }

    struct Bound {
        Tensor w, b;
    };

    Bound bind(Tape& tape) const {
        return Bound{w.leaf(tape), reshape(b.leaf(tape), Shape{1, hidden_dim_})};
    }
    Bound bind_const() const {
        return Bound{Tensor(w.shape, w.value), Tensor(Shape{1, hidden_dim_}, b.value)};
    }

    Tensor step(const Bound& bd, const Tensor& x) const {
        return add(matmul(x, bd.w), bd.b);
    }

    void collect(std::vector<Parameter*>& out) {
        out.push_back(&w);
        out.push_back(&b);
    }

    std::size_t hidden_dim() const { return hidden_dim_; }

    Parameter w, b;

private:
    std::size_t input_dim_ = 0, hidden_dim_ = 0;
};

// Run the recurrence over a whole trial: h_0 = step(x_0, 0), then
// h_{t+1} = step(x_{t+1}, h_t). One hidden state per input row.
inline std::vector<Tensor> encode_sequence(const GruCell& cell, const GruCell::Bound& bound,
                                           const std::vector<Tensor>& x_rows) {
    if (x_rows.empty()) throw ContractError("encode_sequence: empty trial");
    std::vector<Tensor> hs;
    hs.reserve(x_rows.size());
    Tensor h = Tensor::zeros(Shape{1, cell.hidden_dim()});
    for (const Tensor& x : x_rows) {
        h = cell.step(bound, x, h);
        hs.push_back(h);
    }
    return hs;
}

// Linear map from the first hidden state to the initial latent distributions.
// Output splits into `blocks` equal slices of latent_dim: (mu_z, logvar_z)
// and, when velocities are in play, (mu_v, logvar_v).
class InitialLatentHead {
public:
    InitialLatentHead() = default;

    InitialLatentHead(std::size_t hidden_dim, std::size_t latent_dim, std::size_t blocks, Rng& rng)
        : hidden_dim_(hidden_dim), latent_dim_(latent_dim), blocks_(blocks) {
        double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
        std::vector<double> wv(hidden_dim * blocks * latent_dim);
        for (auto& v : wv) v = rng.uniform(-bound, bound);
        w = Parameter("head.w", Shape{hidden_dim, blocks * latent_dim}, std::move(wv));
        b = Parameter("head.b", Shape{blocks * latent_dim}, std::vector<double>(blocks * latent_dim, 0.0));
    }

    struct Bound {
        Tensor w, b;
    };

    Bound bind(Tape& tape) const {
        return Bound{w.leaf(tape), reshape(b.leaf(tape), Shape{1, blocks_ * latent_dim_})};
    }
    Bound bind_const() const {
        return Bound{Tensor(w.shape, w.value), Tensor(Shape{1, blocks_ * latent_dim_}, b.value)};
    }

    struct Latent {
        Tensor sample;  // [d]
        Tensor kl;      // scalar
    };

    // Re-parameterized draw for one (mu, logvar) block pair; eps == nullptr
    // substitutes the mean. logvar is clamped to [-10, 10] before use.
    static Latent sample_block(const Tensor& mu, const Tensor& logvar_raw,
                               const std::vector<double>* eps) {
        Tensor logvar = clamp(logvar_raw, -10.0, 10.0);
        Tensor var = exp(logvar);
        Tensor kl = scale(sum(sub(sub(add(mul(mu, mu), var), Tensor::full(mu.shape(), 1.0)), logvar)), 0.5);
        if (!eps) return {mu, kl};
        Tensor sigma = exp(scale(logvar, 0.5));
        Tensor draw = add(mu, mul(sigma, Tensor(mu.shape(), *eps)));
        return {std::move(draw), std::move(kl)};
    }

    struct Init {
        Tensor z0, v0;
        Tensor kl_z0, kl_v0;
    };

    Init init_latents(const Bound& bd, const Tensor& h0, const std::vector<double>* eps_z,
                      const std::vector<double>* eps_v) const {
        Tensor out = reshape(add(matmul(h0, bd.w), bd.b), Shape{blocks_ * latent_dim_});
        std::size_t d = latent_dim_;
        Tensor mu_z = slice(out, {{0, d}});
        Tensor lv_z = slice(out, {{d, 2 * d}});
        Latent z = sample_block(mu_z, lv_z, eps_z);
        Init init;
        init.z0 = z.sample;
        init.kl_z0 = z.kl;
        if (blocks_ >= 4) {
            Tensor mu_v = slice(out, {{2 * d, 3 * d}});
            Tensor lv_v = slice(out, {{3 * d, 4 * d}});
            Latent v = sample_block(mu_v, lv_v, eps_v);
            init.v0 = v.sample;
            init.kl_v0 = v.kl;
        }
        return init;
    }

    void collect(std::vector<Parameter*>& out) {
        out.push_back(&w);
        out.push_back(&b);
    }

    std::size_t blocks() const { return blocks_; }

    Parameter w, b;

private:
    std::size_t hidden_dim_ = 0, latent_dim_ = 0, blocks_ = 4;
};

}  // namespace lgvf
