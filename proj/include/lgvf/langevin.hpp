#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "lgvf/errors.hpp"
#include "lgvf/potential.hpp"
#include "lgvf/tensor.hpp"

namespace lgvf {

// Physical constants of the latent stochastic dynamics. The velocity noise
// scale sqrt(2 m gamma k_B tau) is derived, never stored, so it can not fall
// out of sync with the constants.
struct LangevinParams {
    double gamma = 0.67;
    double mass = 1.0;
    double k_b = 1.0;
    double tau = 1.0;
    double dt = 1.0;

    void validate() const {
        if (gamma < 0.0 || gamma > 1.0)
            throw ConfigError("langevin: gamma must lie in [0, 1], got " + std::to_string(gamma));
        if (mass <= 0.0 || k_b <= 0.0 || tau <= 0.0 || dt <= 0.0)
            throw ConfigError("langevin: mass, k_B, tau and dt must be positive");
    }

    double noise_scale() const { return std::sqrt(2.0 * mass * gamma * k_b * tau); }

    // Variance of the discrete velocity transition (Gaussian with fixed width).
    double velocity_variance() const { return 2.0 * mass * gamma * k_b * tau; }
};

struct LangevinState {
    Tensor z;
    Tensor v;
    int t = 0;
};

// One deterministic half of the update: position advances along the velocity,
// velocity absorbs the potential force evaluated at the pre-update position.
// Returns the new position and the half-updated velocity.
inline LangevinState deterministic_step(const LangevinState& s, const LangevinParams& p,
                                        const OscillatorPotential::Context& pot,
                                        const Tensor* input_spikes = nullptr) {
    if (!s.z.all_finite() || !s.v.all_finite())
        throw NumericError("langevin: non-finite state at step " + std::to_string(s.t));
    Tensor z_next = add(s.z, scale(s.v, p.dt));
    Tensor force = input_spikes ? pot.grad_with_input(s.z, *input_spikes) : pot.grad(s.z);
    Tensor v_half = sub(s.v, scale(force, p.dt / p.mass));
    return LangevinState{std::move(z_next), std::move(v_half), s.t + 1};
}

// Stochastic half: damped relaxation plus thermal noise via the
// re-parameterization trick. `noise` carries pre-drawn standard normal values
// (one per latent dimension); pass nullptr in evaluation mode to substitute
// the transition mean. Returns (v_next, mu_q); mu_q feeds the KL term.
inline std::pair<Tensor, Tensor> ou_step(const Tensor& v_half, const LangevinParams& p,
                                         const std::vector<double>* noise) {
    Tensor mu_q = scale(v_half, 1.0 - p.gamma);
    if (!noise) return {mu_q, mu_q};
    if (noise->size() != v_half.size())
        throw DimensionError("ou_step: noise length " + std::to_string(noise->size()) +
                             " does not match state dimension " + std::to_string(v_half.size()));
    std::vector<double> scaled(noise->size());
    double ns = p.noise_scale();
    for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] = ns * (*noise)[i];
    Tensor v_next = add(mu_q, Tensor(v_half.shape(), std::move(scaled)));
    return {std::move(v_next), std::move(mu_q)};
}

// KL( N(mu_q, sigma_q^2 I) || N(0, I) ) with sigma_q^2 = 2 m gamma k_B tau,
// summed over dimensions: 1/2 (mu^2 + sigma^2 - 1 - ln sigma^2) per dim.
inline Tensor kl_velocity_step(const Tensor& mu_q, const LangevinParams& p) {
    double s2 = p.velocity_variance();
    double constant = 0.5 * static_cast<double>(mu_q.size()) * (s2 - 1.0 - std::log(s2));
    return add_const(scale(sum(mul(mu_q, mu_q)), 0.5), constant);
}

struct RolloutResult {
    std::vector<Tensor> zs;     // z_0 .. z_T
    std::vector<Tensor> vs;     // v_0 .. v_T
    std::vector<Tensor> mu_qs;  // transition means for steps 1 .. T
};

// Alternate the deterministic and stochastic halves T times, collecting every
// intermediate state. `noise` holds T pre-drawn normal vectors (or nullptr
// for the posterior-mean trajectory). `inputs` supplies the per-step spike
// vectors for the input-coupled potential variant.
inline RolloutResult rollout(const Tensor& z0, const Tensor& v0, const LangevinParams& p,
                             const OscillatorPotential::Context& pot, std::size_t steps,
                             const std::vector<std::vector<double>>* noise = nullptr,
                             const std::vector<Tensor>* inputs = nullptr) {
    if (noise && noise->size() < steps)
        throw ContractError("rollout: need " + std::to_string(steps) + " noise draws, got " +
                            std::to_string(noise->size()));
    if (inputs && inputs->size() < steps)
        throw ContractError("rollout: need " + std::to_string(steps) + " input vectors");
    RolloutResult out;
    out.zs.reserve(steps + 1);
    out.vs.reserve(steps + 1);
    out.mu_qs.reserve(steps);
    out.zs.push_back(z0);
    out.vs.push_back(v0);
    LangevinState state{z0, v0, 0};
    for (std::size_t i = 0; i < steps; ++i) {
        const Tensor* x = inputs ? &(*inputs)[i] : nullptr;
        LangevinState half = deterministic_step(state, p, pot, x);
        auto [v_next, mu_q] = ou_step(half.v, p, noise ? &(*noise)[i] : nullptr);
        out.zs.push_back(half.z);
        out.vs.push_back(v_next);
        out.mu_qs.push_back(std::move(mu_q));
        state = LangevinState{half.z, v_next, half.t};
    }
    return out;
}

// Ablation variant: first-order gradient-flow update with no velocity.
inline Tensor first_order_step(const Tensor& z, const OscillatorPotential::Context& pot) {
    return sub(z, pot.grad(z));
}

// Total energy of the deterministic flow, U(z)/m + |v|^2 / 2. Conserved by
// the exact dynamics; the discrete step drifts by O(dt^2) per step.
inline double hamiltonian(const Tensor& z, const Tensor& v, const LangevinParams& p,
                          const OscillatorPotential::Context& pot) {
    double kinetic = 0.0;
    for (double x : v.data()) kinetic += x * x;
    return pot.energy(z).value() / p.mass + 0.5 * kinetic;
}

}  // namespace lgvf
