#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace lgvf {

// Deterministic counter-seeded random stream built on splitmix64.
//
// Every consumer derives its own stream from (seed, tag, a, b), so the draw
// sequence of one component never depends on how often another component was
// called. This is what makes checkpoint resume and data-parallel scheduling
// bit-exact: the noise for (epoch e, trial i) is a pure function of the run
// seed. Distributions are hand-rolled because the std:: ones are
// implementation-defined and would not reproduce across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {
        // Scramble so that small adjacent seeds give unrelated streams.
        next_u64();
        next_u64();
    }

    static std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
        h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        return h;
    }

    static std::uint64_t hash_tag(std::string_view tag) {
        std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
        for (char c : tag) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
        return h;
    }

    // Named substream: rng for one (component, index) pair of a run.
    static Rng substream(std::uint64_t seed, std::string_view tag,
                         std::uint64_t a = 0, std::uint64_t b = 0) {
        std::uint64_t h = seed;
        h = mix(h, hash_tag(tag));
        h = mix(h, a);
        h = mix(h, b);
        return Rng(h);
    }

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; the second value of each pair is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    std::vector<double> normal_vector(std::size_t n) {
        std::vector<double> out(n);
        for (auto& x : out) x = normal();
        return out;
    }

    // Poisson draw by inverse products of uniforms. Exact for any mean; large
    // means are split into chunks so exp(-mean) stays representable.
    std::uint64_t poisson(double mean) {
        std::uint64_t count = 0;
        while (mean > 300.0) {
            count += poisson_small(300.0);
            mean -= 300.0;
        }
        return count + poisson_small(mean);
    }

private:
    std::uint64_t poisson_small(double mean) {
        if (mean <= 0.0) return 0;
        const double limit = std::exp(-mean);
        double prod = uniform();
        std::uint64_t k = 0;
        while (prod > limit) {
            prod *= uniform();
            ++k;
        }
        return k;
    }

    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace lgvf
