#include "lgvf/encoder.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "support/oracles.hpp"

using namespace lgvf;

namespace {

GruCell zero_cell(std::size_t in, std::size_t hidden) {
    Rng rng(1);
    GruCell cell(in, hidden, rng);
    for (Parameter* p : {&cell.w_reset, &cell.w_update, &cell.w_cand, &cell.b_reset,
                         &cell.b_update, &cell.b_cand})
        std::fill(p->value.begin(), p->value.end(), 0.0);
    return cell;
}

}  // namespace

TEST(GruStep, ZeroWeightsHalveHiddenState) {
    // all gates at zero: u = 0.5, c = 0, so h' = 0.5 h
    GruCell cell = zero_cell(3, 4);
    auto bound = cell.bind_const();
    Tensor x = Tensor(Shape{1, 3}, {1.0, 2.0, 3.0});
    Tensor h = Tensor(Shape{1, 4}, {1.0, -2.0, 4.0, 0.5});
    Tensor next = cell.step(bound, x, h);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(next[i], 0.5 * h[i], 1e-15);
}

TEST(GruStep, ZeroEverythingStaysZero) {
    GruCell cell = zero_cell(3, 4);
    auto bound = cell.bind_const();
    Tensor next = cell.step(bound, Tensor::zeros(Shape{1, 3}), Tensor::zeros(Shape{1, 4}));
    for (double v : next.data()) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(GruStep, DimensionMismatchRejected) {
    Rng rng(2);
    GruCell cell(3, 4, rng);
    auto bound = cell.bind_const();
    EXPECT_THROW(cell.step(bound, Tensor::zeros(Shape{1, 2}), Tensor::zeros(Shape{1, 4})),
                 DimensionError);
}

TEST(GruStep, WeightGradientsMatchFiniteDifferences) {
    Rng rng(3);
    GruCell cell(2, 2, rng);
    std::vector<double> x{0.3, -0.7};
    std::vector<double> h{0.5, 0.2};

    auto loss_at = [&](GruCell& c) {
        auto bound = c.bind_const();
        Tensor out = c.step(bound, Tensor(Shape{1, 2}, x), Tensor(Shape{1, 2}, h));
        return sum(mul(out, out)).value();
    };

    for (Parameter* target : {&cell.w_reset, &cell.w_update, &cell.w_cand, &cell.b_reset,
                              &cell.b_update, &cell.b_cand}) {
        Tape tape;
        auto bound = cell.bind(tape);
        Tensor out = cell.step(bound, Tensor(Shape{1, 2}, x), Tensor(Shape{1, 2}, h));
        tape.backward(sum(mul(out, out)));
        std::vector<double> analytic;
        for (const auto& [param, node] : tape.param_nodes())
            if (param == target) analytic = tape.grad_buffer(node);
        ASSERT_FALSE(analytic.empty());

        auto fd = oracles::finite_difference(
            [&](const std::vector<double>& vals) {
                GruCell probe = cell;
                for (Parameter* p : {&probe.w_reset, &probe.w_update, &probe.w_cand,
                                     &probe.b_reset, &probe.b_update, &probe.b_cand})
                    if (p->name == target->name) p->value = vals;
                return loss_at(probe);
            },
            target->value);
        EXPECT_LT(oracles::max_rel_error(analytic, fd), 1e-5) << target->name;
    }
}

TEST(EncodeSequence, SingleBinTrial) {
    Rng rng(4);
    GruCell cell(3, 4, rng);
    auto bound = cell.bind_const();
    auto hs = encode_sequence(cell, bound, {Tensor(Shape{1, 3}, {1, 0, 2})});
    ASSERT_EQ(hs.size(), 1u);
}

TEST(EncodeSequence, LengthMatchesTrialLength) {
    Rng rng(5);
    GruCell cell(2, 3, rng);
    auto bound = cell.bind_const();
    std::vector<Tensor> rows;
    for (int t = 0; t < 7; ++t) rows.push_back(Tensor(Shape{1, 2}, {double(t), 1.0}));
    EXPECT_EQ(encode_sequence(cell, bound, rows).size(), 7u);
}

TEST(EncodeSequence, EmptyTrialRejected) {
    Rng rng(6);
    GruCell cell(2, 3, rng);
    auto bound = cell.bind_const();
    EXPECT_THROW(encode_sequence(cell, bound, {}), ContractError);
}

TEST(EncodeSequence, ZeroInputsZeroWeightsGiveZeroStates) {
    GruCell cell = zero_cell(2, 3);
    auto bound = cell.bind_const();
    std::vector<Tensor> rows(5, Tensor::zeros(Shape{1, 2}));
    for (const Tensor& h : encode_sequence(cell, bound, rows))
        for (double v : h.data()) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(EncodeSequence, MaskedInputsChangeStatesDeterministically) {
    Rng rng(7);
    GruCell cell(2, 3, rng);
    auto bound = cell.bind_const();
    std::vector<Tensor> rows{Tensor(Shape{1, 2}, {1.0, 2.0}), Tensor(Shape{1, 2}, {0.0, 2.0})};
    auto h_full = encode_sequence(cell, bound, rows);
    std::vector<Tensor> masked{Tensor(Shape{1, 2}, {0.0, 2.0}), Tensor(Shape{1, 2}, {0.0, 2.0})};
    auto h_masked_1 = encode_sequence(cell, bound, masked);
    auto h_masked_2 = encode_sequence(cell, bound, masked);
    EXPECT_NE(h_full.back().data(), h_masked_1.back().data());
    EXPECT_EQ(h_masked_1.back().data(), h_masked_2.back().data());
}

TEST(InitLatents, ZeroGaussianHasZeroKl) {
    // head weights/biases zero: mu = 0, logvar = 0 -> KL = 0
    Rng rng(8);
    InitialLatentHead head(4, 3, 4, rng);
    std::fill(head.w.value.begin(), head.w.value.end(), 0.0);
    std::fill(head.b.value.begin(), head.b.value.end(), 0.0);
    auto bound = head.bind_const();
    auto init = head.init_latents(bound, Tensor::zeros(Shape{1, 4}), nullptr, nullptr);
    EXPECT_NEAR(init.kl_z0.value(), 0.0, 1e-14);
    EXPECT_NEAR(init.kl_v0.value(), 0.0, 1e-14);
}

TEST(InitLatents, TightVarianceLimitSamplesNearMean) {
    Rng rng(9);
    InitialLatentHead head(2, 2, 2, rng);
    // bias drives logvar to the clamp floor of -10 and mu to 1.3
    std::fill(head.w.value.begin(), head.w.value.end(), 0.0);
    head.b.value = {1.3, 1.3, -50.0, -50.0};
    auto bound = head.bind_const();
    std::vector<double> eps{2.0, -2.0};
    auto init = head.init_latents(bound, Tensor::zeros(Shape{1, 2}), &eps, nullptr);
    for (double v : init.z0.data()) EXPECT_NEAR(v, 1.3, 0.05);
}

TEST(InitLatents, UnitMeanUnitVarianceKl) {
    // mu = 1, sigma^2 = 1 -> KL = 0.5 per dimension
    Rng rng(10);
    InitialLatentHead head(2, 3, 2, rng);
    std::fill(head.w.value.begin(), head.w.value.end(), 0.0);
    head.b.value = {1.0, 1.0, 1.0, 0.0, 0.0, 0.0};
    auto bound = head.bind_const();
    auto init = head.init_latents(bound, Tensor::zeros(Shape{1, 2}), nullptr, nullptr);
    EXPECT_NEAR(init.kl_z0.value(), 1.5, 1e-12);  // 0.5 * 3 dims
}

TEST(InitLatents, ReparameterizedMomentsMatch) {
    // empirical mean/std of mu + sigma*eps over many draws track (mu, sigma)
    Rng rng(11);
    InitialLatentHead head(2, 1, 2, rng);
    std::fill(head.w.value.begin(), head.w.value.end(), 0.0);
    head.b.value = {0.7, std::log(0.25)};  // mu 0.7, sigma 0.5
    auto bound = head.bind_const();
    Rng noise(12);
    const int n = 10000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        std::vector<double> eps{noise.normal()};
        auto init = head.init_latents(bound, Tensor::zeros(Shape{1, 2}), &eps, nullptr);
        sum += init.z0[0];
        sq += init.z0[0] * init.z0[0];
    }
    double mean = sum / n, var = sq / n - mean * mean;
    EXPECT_NEAR(mean, 0.7, 3.0 * 0.5 / std::sqrt(double(n)));
    EXPECT_NEAR(std::sqrt(var), 0.5, 0.02);
}

TEST(LinearEncoder, PerTimestepAffineWithoutRecurrence) {
    Rng rng(13);
    LinearEncoder enc(2, 3, rng);
    auto bound = enc.bind_const();
    Tensor x = Tensor(Shape{1, 2}, {1.0, -1.0});
    Tensor h1 = enc.step(bound, x);
    Tensor h2 = enc.step(bound, x);
    EXPECT_EQ(h1.data(), h2.data());  // no hidden state carried
    // matches the affine map directly
    for (std::size_t j = 0; j < 3; ++j) {
        double expect = enc.b.value[j] + 1.0 * enc.w.value[0 * 3 + j] - 1.0 * enc.w.value[1 * 3 + j];
        EXPECT_NEAR(h1[j], expect, 1e-14);
    }
}
