#ifndef PERMIX_RNG_HPP
#define PERMIX_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace permix {

// Deterministic random stream. mt19937_64 is fully pinned by the standard, and
// every distribution transform below is hand-rolled, so a given (seed, stream)
// pair yields byte-identical draws on any platform and any thread count.
// std::normal_distribution and friends are NOT used: their algorithms are
// implementation-defined and would break reproducibility.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id)
        : engine_(mix64(seed ^ mix64(stream_id + 0x9e3779b97f4a7c15ULL))) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on (0, 1]: never returns 0, so log() is always finite.
    double uniform01() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1p-53;
    }

    // Uniform on {0, ..., n-1}, unbiased via rejection.
    std::uint64_t uniform_int(std::uint64_t n) {
        const std::uint64_t threshold = (-n) % n;
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Standard normal, Box-Muller trig form. The sin partner is discarded so
    // each call consumes exactly two uniforms and carries no hidden state.
    double normal() {
        double u1 = uniform01();
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        return r * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    // Poisson draw. Knuth's product method below lambda = 30, Hormann's PTRS
    // transformed rejection above it; both consume only uniform01() calls.
    std::uint64_t poisson(double lambda) {
        if (lambda <= 0.0) return 0;
        if (lambda <= 30.0) return poisson_knuth(lambda);
        return poisson_ptrs(lambda);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static std::uint64_t mix64(std::uint64_t v) {
        v += 0x9e3779b97f4a7c15ULL;
        v = (v ^ (v >> 30)) * 0xbf58476d1ce4e5b9ULL;
        v = (v ^ (v >> 27)) * 0x94d049bb133111ebULL;
        return v ^ (v >> 31);
    }

    std::uint64_t poisson_knuth(double lambda) {
        const double limit = std::exp(-lambda);
        std::uint64_t k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= uniform01();
        } while (p > limit);
        return k - 1;
    }

    std::uint64_t poisson_ptrs(double lambda) {
        const double log_lambda = std::log(lambda);
        const double b = 0.931 + 2.53 * std::sqrt(lambda);
        const double a = -0.059 + 0.02483 * b;
        const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        const double v_r = 0.9277 - 3.6224 / (b - 2.0);
        for (;;) {
            double u = uniform01() - 0.5;
            double v = uniform01();
            double us = 0.5 - std::abs(u);
            double kf = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
            if (us >= 0.07 && v <= v_r) return static_cast<std::uint64_t>(kf);
            if (kf < 0.0 || (us < 0.013 && v > us)) continue;
            if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
                kf * log_lambda - lambda - std::lgamma(kf + 1.0)) {
                return static_cast<std::uint64_t>(kf);
            }
        }
    }

    std::mt19937_64 engine_;
};

} // namespace permix

#endif
