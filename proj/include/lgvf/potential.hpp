#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "lgvf/errors.hpp"
#include "lgvf/rng.hpp"
#include "lgvf/tensor.hpp"

namespace lgvf {

// Quadratic energy over a lattice of locally coupled oscillators,
// U(z) = sum_g z_g' (W_g / ||W_g||_2) z_g, with each W_g a symmetric Toeplitz
// operator realized as zero-padded 1-d convolution with a palindromic kernel.
// Only the half kernel (center tap outward) is learned; mirroring makes the
// operator symmetric by construction, so grad U = 2 W z / ||W|| exactly.
class OscillatorPotential {
public:
    OscillatorPotential() = default;

    OscillatorPotential(std::size_t latent_dim, std::size_t groups, std::size_t kernel_size,
                        Rng& init_rng, std::size_t input_dim = 0)
        : latent_dim_(latent_dim), groups_(groups), kernel_size_(kernel_size) {
        if (groups == 0 || latent_dim == 0) throw ConfigError("potential: zero latent dim or groups");
        if (latent_dim % groups != 0)
            throw ConfigError("potential: latent dim " + std::to_string(latent_dim) +
                              " not divisible by " + std::to_string(groups) + " groups");
        if (kernel_size % 2 == 0)
            throw ConfigError("potential: kernel size must be odd, got " + std::to_string(kernel_size));
        group_len_ = latent_dim / groups;

        // Dominant positive center tap with small uniform couplings: the
        // initial operator is diagonally dominant, hence positive definite,
        // which keeps the discrete latent map stable at dt = 1. A sign-free
        // uniform init leaves negative-curvature directions whose one-step
        // map has spectral radius well above 1, and the latents blow up
        // within one trial.
        std::size_t half = (kernel_size + 1) / 2;
        std::vector<double> init(groups * half);
        for (std::size_t g = 0; g < groups; ++g) {
            init[g * half] = 1.0;
            for (std::size_t j = 1; j < half; ++j) init[g * half + j] = init_rng.uniform(-0.1, 0.1);
        }
        kernel_half = Parameter("potential.kernel_half", Shape{groups, half}, std::move(init));

        // Rescale each group so the initial operator has unit spectral norm.
        for (std::size_t g = 0; g < groups; ++g) {
            double nrm = group_spectral_norm(g);
            if (nrm > 1e-12)
                for (std::size_t j = 0; j < half; ++j) kernel_half.value[g * half + j] /= nrm;
        }

        if (input_dim > 0) {
            std::vector<double> wx(latent_dim * input_dim);
            double bound = 1.0 / std::sqrt(static_cast<double>(input_dim));
            for (auto& v : wx) v = init_rng.uniform(-bound, bound);
            input_coupling = Parameter("potential.input_coupling", Shape{latent_dim, input_dim}, std::move(wx));
        }
    }

    std::size_t latent_dim() const { return latent_dim_; }
    std::size_t groups() const { return groups_; }
    std::size_t group_len() const { return group_len_; }
    std::size_t kernel_size() const { return kernel_size_; }
    bool has_input_coupling() const { return input_coupling.has_value(); }

    // Largest singular value of one group's Toeplitz operator, by power
    // iteration on T^2 (T is symmetric, so this converges to sigma_max^2 and
    // is immune to a +/- leading eigenvalue pair). The cap is generous
    // because near-degenerate leading pairs converge slowly and the dense
    // oracle tests demand 1e-6 agreement; typical kernels exit within a few
    // dozen iterations. An all-zero kernel maps to norm 1: the potential is
    // then identically zero rather than 0/0.
    double group_spectral_norm(std::size_t g) const {
        std::vector<double> kernel = expanded_kernel(g);
        bool all_zero = true;
        for (double v : kernel)
            if (v != 0.0) all_zero = false;
        if (all_zero) return 1.0;

        std::size_t len = group_len_;
        std::vector<double> v(len), w(len), u(len);
        for (std::size_t i = 0; i < len; ++i) v[i] = 1.0 + 0.25 * static_cast<double>(i) / static_cast<double>(len);
        normalize(v);
        double sigma2 = 0.0;
        for (int iter = 0; iter < 500; ++iter) {
            apply_toeplitz(kernel, v, w);
            apply_toeplitz(kernel, w, u);
            double next = 0.0;
            for (std::size_t i = 0; i < len; ++i) next += v[i] * u[i];  // Rayleigh quotient of T^2
            double nrm = normalize(u);
            if (nrm == 0.0) return 0.0;  // v was in the null space; treat as degenerate
            v = u;
            if (iter > 0 && std::abs(next - sigma2) <= 1e-13 * std::abs(next)) {
                sigma2 = next;
                break;
            }
            sigma2 = next;
        }
        return std::sqrt(std::max(sigma2, 0.0));
    }

    // Smallest norm the division uses. Gradients do not flow through the
    // norm, so the optimizer can only weaken a group's force by shrinking
    // its kernel; exact normalization cancels that shrinkage and drives the
    // kernel toward degeneracy, where dividing by a vanishing norm amplifies
    // an arbitrary kernel shape back to unit strength. Below the floor the
    // potential fades out smoothly instead, the same limit the all-zero
    // clamp gives.
    static constexpr double norm_floor = 0.05;

    // Per-group norms, memoized on the current kernel values: they change
    // only at optimizer steps, not between the trials of a batch.
    std::vector<double> spectral_norms() const {
        std::lock_guard<std::mutex> lock(norm_cache_->mutex);
        if (!norm_cache_->values.empty() && norm_cache_->key == kernel_half.value)
            return norm_cache_->values;
        std::vector<double> out(groups_);
        for (std::size_t g = 0; g < groups_; ++g) {
            double n = group_spectral_norm(g);
            out[g] = n > 1e-12 ? std::max(n, norm_floor) : 1.0;
        }
        norm_cache_->key = kernel_half.value;
        norm_cache_->values = out;
        return out;
    }

    // Per-forward-pass view of the potential. On a tape the kernels are
    // differentiable leaves; the spectral norms are recomputed from the
    // current values but treated as constants (no gradient flows through the
    // power iteration).
    class Context {
    public:
        Tensor energy(const Tensor& z) const {
            Tensor zg = reshape(z, Shape{groups, len});
            Tensor coupled = mul(conv1d_grouped(zg, kernels), inv_norm);
            return sum(mul(zg, coupled));
        }

        Tensor grad(const Tensor& z) const {
            Tensor zg = reshape(z, Shape{groups, len});
            Tensor coupled = mul(conv1d_grouped(zg, kernels), inv_norm);
            return reshape(scale(coupled, 2.0), Shape{groups * len});
        }

        // Ablation variant: U(z, x) = U(z) + z' Wx x.
        Tensor energy_with_input(const Tensor& z, const Tensor& x) const {
            if (!wx.defined())
                throw ConfigError("potential: input coupling requested but not configured");
            Tensor zr = reshape(z, Shape{1, groups * len});
            Tensor xc = reshape(x, Shape{x.size(), 1});
            Tensor bilinear = matmul(zr, matmul(wx, xc));
            return add(energy(z), reshape(bilinear, Shape{1}));
        }

        Tensor grad_with_input(const Tensor& z, const Tensor& x) const {
            if (!wx.defined())
                throw ConfigError("potential: input coupling requested but not configured");
            Tensor xc = reshape(x, Shape{x.size(), 1});
            Tensor extra = reshape(matmul(wx, xc), Shape{groups * len});
            return add(grad(z), extra);
        }

        Tensor kernels;    // [groups x k], palindromic
        Tensor inv_norm;   // [groups x len] constant, 1/norm per row
        Tensor wx;         // optional [d x input_dim]
        std::vector<double> norms;
        std::size_t groups = 0, len = 0;
    };

    Context bind(Tape& tape) const {
        Context ctx = make_context(mirror_palindrome(kernel_half.leaf(tape), kernel_size_));
        if (input_coupling) ctx.wx = input_coupling->leaf(tape);
        return ctx;
    }

    // Constant view for evaluation passes that skip differentiation.
    Context bind_const() const {
        Context ctx = make_context(
            mirror_palindrome(Tensor(kernel_half.shape, kernel_half.value), kernel_size_));
        if (input_coupling) ctx.wx = Tensor(input_coupling->shape, input_coupling->value);
        return ctx;
    }

    Parameter kernel_half;
    std::optional<Parameter> input_coupling;

    // When set, bind() uses these norms instead of recomputing. The tape
    // already treats the norm as a constant (no gradient flows through the
    // power iteration); freezing it lets a finite-difference probe evaluate
    // exactly the function the tape differentiates.
    std::optional<std::vector<double>> frozen_norms;

private:
    Context make_context(Tensor expanded) const {
        Context ctx;
        ctx.kernels = std::move(expanded);
        ctx.norms = frozen_norms ? *frozen_norms : spectral_norms();
        ctx.groups = groups_;
        ctx.len = group_len_;
        std::vector<double> inv(groups_ * group_len_);
        for (std::size_t g = 0; g < groups_; ++g)
            for (std::size_t i = 0; i < group_len_; ++i) inv[g * group_len_ + i] = 1.0 / ctx.norms[g];
        ctx.inv_norm = Tensor(Shape{groups_, group_len_}, std::move(inv));
        return ctx;
    }

    std::vector<double> expanded_kernel(std::size_t g) const {
        std::size_t half = (kernel_size_ + 1) / 2;
        std::ptrdiff_t center = static_cast<std::ptrdiff_t>(kernel_size_ - 1) / 2;
        std::vector<double> kernel(kernel_size_);
        for (std::size_t j = 0; j < kernel_size_; ++j) {
            std::size_t off =
                static_cast<std::size_t>(std::abs(static_cast<std::ptrdiff_t>(j) - center));
            kernel[j] = kernel_half.value[g * half + off];
        }
        return kernel;
    }

    void apply_toeplitz(const std::vector<double>& kernel, const std::vector<double>& in,
                        std::vector<double>& out) const {
        std::size_t len = in.size(), ksize = kernel.size();
        std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(ksize - 1) / 2;
        for (std::size_t i = 0; i < len; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < ksize; ++j) {
                std::ptrdiff_t src = static_cast<std::ptrdiff_t>(i) + static_cast<std::ptrdiff_t>(j) - pad;
                if (src >= 0 && src < static_cast<std::ptrdiff_t>(len)) acc += kernel[j] * in[src];
            }
            out[i] = acc;
        }
    }

    static double normalize(std::vector<double>& v) {
        double nrm = 0.0;
        for (double x : v) nrm += x * x;
        nrm = std::sqrt(nrm);
        if (nrm > 0.0)
            for (double& x : v) x /= nrm;
        return nrm;
    }

    struct NormCache {
        std::mutex mutex;
        std::vector<double> key;
        std::vector<double> values;
    };

    std::size_t latent_dim_ = 0, groups_ = 0, group_len_ = 0, kernel_size_ = 0;
    // Shared by copies; the key check keeps it correct if copies diverge.
    mutable std::shared_ptr<NormCache> norm_cache_ = std::make_shared<NormCache>();
};

}  // namespace lgvf
