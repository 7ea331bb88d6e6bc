#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "lgvf/errors.hpp"
#include "lgvf/rng.hpp"
#include "lgvf/tensor.hpp"

namespace lgvf {

// Sinusoidal positional encoding table, [rows x dim].
inline Tensor positional_encoding(std::size_t rows, std::size_t dim) {
    std::vector<double> pe(rows * dim);
    for (std::size_t t = 0; t < rows; ++t)
        for (std::size_t i = 0; i < dim; ++i) {
            double freq = std::pow(10000.0, -static_cast<double>(i - (i % 2)) / static_cast<double>(dim));
            double angle = static_cast<double>(t) * freq;
            pe[t * dim + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    return Tensor(Shape{rows, dim}, std::move(pe));
}

// Single self-attention layer with a rate readout. The per-timestep inputs
// [z_t, v_t, h_t] are projected to model_dim, tagged with positions, mixed by
// full bidirectional multi-head attention, then mapped to positive rates via
// exp with clamping. One residual connection wraps the attention; there is no
// feed-forward sublayer and no layer norm.
class TransformerLayer {
public:
    TransformerLayer() = default;

    TransformerLayer(std::size_t input_dim, std::size_t model_dim, std::size_t heads,
                     std::size_t n_neurons, Rng& rng, bool use_positions = true)
        : input_dim_(input_dim), model_dim_(model_dim), heads_(heads), n_neurons_(n_neurons),
          use_positions_(use_positions) {
        if (heads == 0 || model_dim % heads != 0)
            throw ConfigError("decoder: model dim " + std::to_string(model_dim) +
                              " not divisible by " + std::to_string(heads) + " heads");
        head_dim_ = model_dim / heads;
        w_in = init_matrix("decoder.w_in", input_dim, model_dim, rng);
        b_in = init_bias("decoder.b_in", model_dim);
        w_q = init_matrix("decoder.w_q", model_dim, model_dim, rng);
        w_k = init_matrix("decoder.w_k", model_dim, model_dim, rng);
        w_v = init_matrix("decoder.w_v", model_dim, model_dim, rng);
        b_q = init_bias("decoder.b_q", model_dim);
        b_k = init_bias("decoder.b_k", model_dim);
        b_v = init_bias("decoder.b_v", model_dim);
        w_out = init_matrix("decoder.w_out", model_dim, model_dim, rng);
        b_out = init_bias("decoder.b_out", model_dim);
        w_read = init_matrix("decoder.w_read", model_dim, n_neurons, rng);
        b_read = init_bias("decoder.b_read", n_neurons);
    }

    struct Bound {
        Tensor w_in, b_in;
        Tensor w_q, w_k, w_v, b_q, b_k, b_v;
        Tensor w_out, b_out;
        Tensor w_read, b_read;
    };

    Bound bind(Tape& tape) const {
        Bound b;
        b.w_in = w_in.leaf(tape);
        b.b_in = b_in.leaf(tape);
        b.w_q = w_q.leaf(tape);
        b.w_k = w_k.leaf(tape);
        b.w_v = w_v.leaf(tape);
        b.b_q = b_q.leaf(tape);
        b.b_k = b_k.leaf(tape);
        b.b_v = b_v.leaf(tape);
        b.w_out = w_out.leaf(tape);
        b.b_out = b_out.leaf(tape);
        b.w_read = w_read.leaf(tape);
        b.b_read = b_read.leaf(tape);
        return b;
    }

    Bound bind_const() const {
        Bound b;
        b.w_in = Tensor(w_in.shape, w_in.value);
        b.b_in = Tensor(b_in.shape, b_in.value);
        b.w_q = Tensor(w_q.shape, w_q.value);
        b.w_k = Tensor(w_k.shape, w_k.value);
        b.w_v = Tensor(w_v.shape, w_v.value);
        b.b_q = Tensor(b_q.shape, b_q.value);
        b.b_k = Tensor(b_k.shape, b_k.value);
        b.b_v = Tensor(b_v.shape, b_v.value);
        b.w_out = Tensor(w_out.shape, w_out.value);
        b.b_out = Tensor(b_out.shape, b_out.value);
        b.w_read = Tensor(w_read.shape, w_read.value);
        b.b_read = Tensor(b_read.shape, b_read.value);
        return b;
    }

    // inputs: [T+1 x input_dim]; returns rates [T+1 x n_neurons], all in
    // [rate_lo, rate_hi]. Also exposes the attention maps for tests.
    Tensor decode(const Bound& bd, const Tensor& inputs, double rate_lo = 1e-7,
                  double rate_hi = 1e4, std::vector<Tensor>* attention_out = nullptr) const {
        if (inputs.ndim() != 2 || inputs.shape()[1] != input_dim_)
            throw ContractError("decode: input shape " + shape_str(inputs.shape()) +
                                " does not match expected width " + std::to_string(input_dim_));
        std::size_t rows = inputs.shape()[0];
        Tensor x = add(matmul(inputs, bd.w_in), tile_rows(bd.b_in, rows));
        if (use_positions_) x = add(x, positional_encoding(rows, model_dim_));

        Tensor q = add(matmul(x, bd.w_q), tile_rows(bd.b_q, rows));
        Tensor k = add(matmul(x, bd.w_k), tile_rows(bd.b_k, rows));
        Tensor v = add(matmul(x, bd.w_v), tile_rows(bd.b_v, rows));

        double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim_));
        std::vector<Tensor> mixed;
        mixed.reserve(heads_);
        for (std::size_t h = 0; h < heads_; ++h) {
            std::size_t lo = h * head_dim_, hi = (h + 1) * head_dim_;
            Tensor qh = slice_cols(q, lo, hi);
            Tensor kh = slice_cols(k, lo, hi);
            Tensor vh = slice_cols(v, lo, hi);
            Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
            Tensor attn = softmax_rows(scores);
            if (attention_out) attention_out->push_back(attn);
            mixed.push_back(matmul(attn, vh));
        }
        Tensor context = concat(mixed, 1);
        Tensor y = add(x, add(matmul(context, bd.w_out), tile_rows(bd.b_out, rows)));
        Tensor logrates = add(matmul(y, bd.w_read), tile_rows(bd.b_read, rows));
        // clamp in log space so exp can never overflow, then pin the exact
        // bounds (exp(log(hi)) can exceed hi by one ulp)
        return clamp(exp(clamp(logrates, std::log(rate_lo), std::log(rate_hi))), rate_lo, rate_hi);
    }

    void collect(std::vector<Parameter*>& out) {
        for (Parameter* p : {&w_in, &b_in, &w_q, &b_q, &w_k, &b_k, &w_v, &b_v, &w_out, &b_out,
                             &w_read, &b_read})
            out.push_back(p);
    }

    std::size_t input_dim() const { return input_dim_; }
    std::size_t model_dim() const { return model_dim_; }
    std::size_t heads() const { return heads_; }
    bool use_positions() const { return use_positions_; }

    Parameter w_in, b_in;
    Parameter w_q, b_q, w_k, b_k, w_v, b_v;
    Parameter w_out, b_out;
    Parameter w_read, b_read;

private:
    static Parameter init_matrix(const std::string& name, std::size_t rows, std::size_t cols, Rng& rng) {
        double bound = 1.0 / std::sqrt(static_cast<double>(rows));
        std::vector<double> w(rows * cols);
        for (auto& v : w) v = rng.uniform(-bound, bound);
        return Parameter(name, Shape{rows, cols}, std::move(w));
    }

    static Parameter init_bias(const std::string& name, std::size_t n) {
        return Parameter(name, Shape{n}, std::vector<double>(n, 0.0));
    }

    std::size_t input_dim_ = 0, model_dim_ = 0, heads_ = 0, head_dim_ = 0, n_neurons_ = 0;
    bool use_positions_ = true;
};

// Ablation decoder: per-timestep affine readout with no cross-time mixing.
class LinearDecoder {
public:
    LinearDecoder() = default;

    LinearDecoder(std::size_t input_dim, std::size_t n_neurons, Rng& rng)
        : input_dim_(input_dim), n_neurons_(n_neurons) {
        double bound = 1.0 / std::sqrt(static_cast<double>(input_dim));
        std::vector<double> wv(input_dim * n_neurons);
        for (auto& v : wv) v = rng.uniform(-bound, bound);
        w = Parameter("lindec.w", Shape{input_dim, n_neurons}, std::move(wv));
        b = Parameter("lindec.b", Shape{n_neurons}, std::vector<double>(n_neurons, 0.0));
    }

    struct Bound {
        Tensor w, b;
    };

    Bound bind(Tape& tape) const { return Bound{w.leaf(tape), b.leaf(tape)}; }
    Bound bind_const() const {
        return Bound{Tensor(w.shape, w.value), Tensor(b.shape, b.value)};
    }

    Tensor decode(const Bound& bd, const Tensor& inputs, double rate_lo = 1e-7,
                  double rate_hi = 1e4) const {
        if (inputs.ndim() != 2 || inputs.shape()[1] != input_dim_)
            throw ContractError("decode_linear: input width mismatch");
        std::size_t rows = inputs.shape()[0];
        Tensor logrates = add(matmul(inputs, bd.w), tile_rows(bd.b, rows));
        return clamp(exp(clamp(logrates, std::log(rate_lo), std::log(rate_hi))), rate_lo, rate_hi);
    }

    void collect(std::vector<Parameter*>& out) {
        out.push_back(&w);
        out.push_back(&b);
    }

    Parameter w, b;

private:
    std::size_t input_dim_ = 0, n_neurons_ = 0;
};

}  // namespace lgvf
