#include "lgvf/potential.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "support/oracles.hpp"

using namespace lgvf;

namespace {

// Potential with explicit half-kernel values (center tap first).
OscillatorPotential make_potential(std::size_t d, std::size_t groups, std::size_t k,
                                   const std::vector<double>& half, std::size_t input_dim = 0) {
    Rng rng(1);
    OscillatorPotential pot(d, groups, k, rng, input_dim);
    pot.kernel_half.value = half;
    return pot;
}

std::vector<double> expand_half(const std::vector<double>& half, std::size_t k) {
    std::ptrdiff_t center = static_cast<std::ptrdiff_t>(k - 1) / 2;
    std::vector<double> kernel(k);
    for (std::size_t j = 0; j < k; ++j)
        kernel[j] = half[static_cast<std::size_t>(std::abs(static_cast<std::ptrdiff_t>(j) - center))];
    return kernel;
}

}  // namespace

TEST(Potential, ConfigValidation) {
    Rng rng(1);
    EXPECT_THROW(OscillatorPotential(10, 4, 7, rng), ConfigError);  // 10 % 4 != 0
    EXPECT_THROW(OscillatorPotential(8, 4, 6, rng), ConfigError);   // even kernel
}

TEST(SpectralNorm, ImpulseKernelIsIdentity) {
    auto pot = make_potential(8, 1, 7, {1, 0, 0, 0});
    EXPECT_NEAR(pot.group_spectral_norm(0), 1.0, 1e-10);
}

TEST(SpectralNorm, ScalesLinearly) {
    auto pot = make_potential(8, 1, 7, {2, 0, 0, 0});
    EXPECT_NEAR(pot.group_spectral_norm(0), 2.0, 1e-10);
}

TEST(SpectralNorm, AllZeroKernelClampsToOne) {
    auto pot = make_potential(8, 1, 7, {0, 0, 0, 0});
    EXPECT_DOUBLE_EQ(pot.spectral_norms()[0], 1.0);
    // the potential is then identically zero
    Tensor z = Tensor::row({1, 2, 3, 4, 5, 6, 7, 8});
    EXPECT_DOUBLE_EQ(pot.bind_const().energy(z).value(), 0.0);
}

TEST(SpectralNorm, MatchesDenseEigenOracle) {
    Rng rng(99);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> half(4);
        for (auto& v : half) v = rng.uniform(-1.0, 1.0);
        auto pot = make_potential(16, 1, 7, half);
        auto dense = oracles::dense_toeplitz(expand_half(half, 7), 16);
        double expect = oracles::spectral_norm_dense(dense, 16);
        EXPECT_NEAR(pot.group_spectral_norm(0), expect, 1e-6);
    }
}

TEST(Energy, ImpulseKernelIsSquaredNorm) {
    auto pot = make_potential(2, 1, 3, {1, 0});
    Tensor z = Tensor::row({1, 2});
    EXPECT_NEAR(pot.bind_const().energy(z).value(), 5.0, 1e-12);
}

TEST(Energy, ZeroStateIsZero) {
    auto pot = make_potential(8, 2, 5, {0.3, -0.1, 0.2, 0.5, 0.2, -0.4});
    EXPECT_DOUBLE_EQ(pot.bind_const().energy(Tensor::zeros(Shape{8})).value(), 0.0);
}

TEST(Energy, MatchesDenseToeplitzOracle) {
    Rng rng(7);
    std::vector<double> half(3);
    for (auto& v : half) v = rng.uniform(-1.0, 1.0);
    auto pot = make_potential(12, 2, 5, {half[0], half[1], half[2], -half[2], half[0], half[1]});
    std::vector<double> z(12);
    for (auto& v : z) v = rng.uniform(-2.0, 2.0);

    double got = pot.bind_const().energy(Tensor(Shape{12}, z)).value();

    // dense per-group quadratic forms
    double expect = 0.0;
    auto norms = pot.spectral_norms();
    for (std::size_t g = 0; g < 2; ++g) {
        std::vector<double> gh(pot.kernel_half.value.begin() + static_cast<std::ptrdiff_t>(g * 3),
                               pot.kernel_half.value.begin() + static_cast<std::ptrdiff_t>((g + 1) * 3));
        auto dense = oracles::dense_toeplitz(expand_half(gh, 5), 6);
        for (std::size_t i = 0; i < 6; ++i)
            for (std::size_t j = 0; j < 6; ++j)
                expect += z[g * 6 + i] * dense[i * 6 + j] * z[g * 6 + j] / norms[g];
    }
    EXPECT_NEAR(got, expect, 1e-10);
}

TEST(Energy, SymmetricBilinearForm) {
    Rng rng(17);
    std::vector<double> half(4);
    for (auto& v : half) v = rng.uniform(-1.0, 1.0);
    auto pot = make_potential(8, 1, 7, half);
    auto ctx = pot.bind_const();
    // polarization identity: U(a+b) - U(a) - U(b) = 2 a' W b, so symmetry of
    // the form follows from evaluating with the roles of a and b swapped
    std::vector<double> a(8), b(8);
    for (auto& v : a) v = rng.uniform(-1.0, 1.0);
    for (auto& v : b) v = rng.uniform(-1.0, 1.0);
    std::vector<double> ab(8);
    for (std::size_t i = 0; i < 8; ++i) ab[i] = a[i] + b[i];
    double cross = ctx.energy(Tensor(Shape{8}, ab)).value() - ctx.energy(Tensor(Shape{8}, a)).value() -
                   ctx.energy(Tensor(Shape{8}, b)).value();
    // a' W b computed from the gradient at a (grad = 2 W a / ||W||)
    auto grad_a = ctx.grad(Tensor(Shape{8}, a)).data();
    double via_grad = 0.0;
    for (std::size_t i = 0; i < 8; ++i) via_grad += grad_a[i] * b[i];
    EXPECT_NEAR(cross, via_grad, 1e-10);
}

TEST(Energy, InvariantToKernelRescaling) {
    Rng rng(23);
    std::vector<double> half(4);
    for (auto& v : half) v = rng.uniform(-1.0, 1.0);
    std::vector<double> z(8);
    for (auto& v : z) v = rng.uniform(-2.0, 2.0);
    auto pot1 = make_potential(8, 1, 7, half);
    std::vector<double> scaled = half;
    for (auto& v : scaled) v *= 3.7;
    auto pot2 = make_potential(8, 1, 7, scaled);
    double u1 = pot1.bind_const().energy(Tensor(Shape{8}, z)).value();
    double u2 = pot2.bind_const().energy(Tensor(Shape{8}, z)).value();
    EXPECT_NEAR(u1, u2, 1e-8);
}

TEST(GradZ, ImpulseKernelGivesTwoZ) {
    auto pot = make_potential(4, 1, 3, {1, 0});
    Tensor z = Tensor::row({1, -2, 0.5, 3});
    auto g = pot.bind_const().grad(z).data();
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(g[i], 2.0 * z[i], 1e-12);
}

TEST(GradZ, ZeroAtOrigin) {
    auto pot = make_potential(8, 2, 5, {0.3, -0.1, 0.2, 0.5, 0.2, -0.4});
    auto g = pot.bind_const().grad(Tensor::zeros(Shape{8})).data();
    for (double v : g) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(GradZ, MatchesFiniteDifferencesOfEnergy) {
    Rng rng(31);
    std::vector<double> half(4);
    for (auto& v : half) v = rng.uniform(-1.0, 1.0);
    auto pot = make_potential(8, 2, 7, {half[0], half[1], half[2], half[3],
                                        -half[1], half[0], half[3], half[2]});
    auto ctx = pot.bind_const();
    std::vector<double> z(8);
    for (auto& v : z) v = rng.uniform(-1.0, 1.0);
    auto analytic = ctx.grad(Tensor(Shape{8}, z)).data();
    auto fd = oracles::finite_difference(
        [&](const std::vector<double>& x) { return ctx.energy(Tensor(Shape{8}, x)).value(); }, z);
    EXPECT_LT(oracles::max_rel_error(analytic, fd), 1e-5);
}

TEST(GradZ, LinearInZ) {
    Rng rng(37);
    std::vector<double> half(4);
    for (auto& v : half) v = rng.uniform(-1.0, 1.0);
    auto pot = make_potential(8, 1, 7, half);
    auto ctx = pot.bind_const();
    std::vector<double> z(8);
    for (auto& v : z) v = rng.uniform(-1.0, 1.0);
    std::vector<double> az(8);
    for (std::size_t i = 0; i < 8; ++i) az[i] = 2.5 * z[i];
    auto g1 = ctx.grad(Tensor(Shape{8}, z)).data();
    auto g2 = ctx.grad(Tensor(Shape{8}, az)).data();
    for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(g2[i], 2.5 * g1[i], 1e-10);
}

TEST(EnergyWithInput, ZeroCouplingEqualsEnergy) {
    auto pot = make_potential(4, 1, 3, {0.7, 0.2}, 3);
    std::fill(pot.input_coupling->value.begin(), pot.input_coupling->value.end(), 0.0);
    auto ctx = pot.bind_const();
    Tensor z = Tensor::row({1, 2, -1, 0.5});
    Tensor x = Tensor::row({3, 1, 2});
    EXPECT_NEAR(ctx.energy_with_input(z, x).value(), ctx.energy(z).value(), 1e-12);
}

TEST(EnergyWithInput, ZeroStateIsZero) {
    auto pot = make_potential(4, 1, 3, {0.7, 0.2}, 3);
    auto ctx = pot.bind_const();
    EXPECT_DOUBLE_EQ(
        ctx.energy_with_input(Tensor::zeros(Shape{4}), Tensor::row({3, 1, 2})).value(), 0.0);
}

TEST(EnergyWithInput, MatchesDenseBilinearOracle) {
    Rng rng(41);
    auto pot = make_potential(4, 1, 3, {0.7, 0.2}, 3);
    for (auto& v : pot.input_coupling->value) v = rng.uniform(-1.0, 1.0);
    std::vector<double> z(4), x(3);
    for (auto& v : z) v = rng.uniform(-1.0, 1.0);
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    auto ctx = pot.bind_const();
    double got = ctx.energy_with_input(Tensor(Shape{4}, z), Tensor(Shape{3}, x)).value();
    double expect = ctx.energy(Tensor(Shape{4}, z)).value();
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            expect += z[i] * pot.input_coupling->value[i * 3 + j] * x[j];
    EXPECT_NEAR(got, expect, 1e-10);
}

TEST(EnergyWithInput, MissingCouplingRejected) {
    auto pot = make_potential(4, 1, 3, {0.7, 0.2});
    auto ctx = pot.bind_const();
    EXPECT_THROW(ctx.energy_with_input(Tensor::zeros(Shape{4}), Tensor::row({1, 2, 3})),
                 ConfigError);
}

TEST(Potential, InitialKernelsHaveUnitNorm) {
    Rng rng(5);
    OscillatorPotential pot(32, 4, 7, rng);
    for (std::size_t g = 0; g < 4; ++g) EXPECT_NEAR(pot.group_spectral_norm(g), 1.0, 1e-6);
}
