#ifndef PERMIX_QUADRATURE_HPP
#define PERMIX_QUADRATURE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "permix/errors.hpp"

namespace permix {

enum class QuadScheme { adaptive_simpson, fixed_panel };

// Truncation rule for infinite discrete sums over Poisson-like tails:
// x_max = ceil(lambda_max + sd_multiplier * sqrt(lambda_max + 1) + abs_margin).
struct PoissonTailRule {
    double sd_multiplier = 12.0;
    double abs_margin = 40.0;

    std::size_t cutoff(double lambda_max) const {
        double x = lambda_max + sd_multiplier * std::sqrt(lambda_max + 1.0) + abs_margin;
        return static_cast<std::size_t>(std::ceil(x));
    }
};

struct QuadConfig {
    QuadScheme scheme = QuadScheme::adaptive_simpson;
    double abs_tol = 1e-12;
    double domain_pad = 12.0; // Gaussian tail padding, in standard deviations
    PoissonTailRule poisson_tail{};
    int panels = 512; // fixed-panel scheme only

    void validate() const {
        if (!(abs_tol > 0.0)) throw validation_error("quadrature abs_tol must be > 0");
        if (!(domain_pad >= 8.0)) throw validation_error("quadrature domain_pad must be >= 8");
        if (scheme == QuadScheme::fixed_panel && panels < 1)
            throw validation_error("fixed-panel quadrature needs at least one panel");
    }
};

namespace detail {

inline double simpson_rule(double fa, double fm, double fb, double h) {
    return (h / 6.0) * (fa + 4.0 * fm + fb);
}

template <typename F>
double adaptive_simpson_rec(const F& f, double a, double b, double fa, double fm,
                            double fb, double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = simpson_rule(fa, flm, fm, m - a);
    const double right = simpson_rule(fm, frm, fb, b - m);
    const double delta = left + right - whole;
    // Richardson acceptance: composite error is ~delta/15 for smooth f.
    if (depth <= 0) {
        if (std::abs(delta) > 15.0 * tol)
            throw numerical_error("adaptive quadrature failed to converge");
        return left + right + delta / 15.0;
    }
    if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

} // namespace detail

// Integrate f over [a, b] to absolute tolerance abs_tol. The interval is first
// cut into roughly unit-width panels so narrow spikes far from the midpoint
// (bimodal integrands over wide padded domains) cannot be missed by the first
// Simpson estimate.
template <typename F>
double integrate_adaptive(const F& f, double a, double b, double abs_tol) {
    if (!(b > a)) return 0.0;
    int seed_panels = static_cast<int>(std::ceil(b - a));
    seed_panels = std::clamp(seed_panels, 8, 256);
    const double h = (b - a) / seed_panels;
    const double tol_per_panel = abs_tol / seed_panels;
    double total = 0.0;
    double x0 = a;
    double f0 = f(x0);
    for (int p = 0; p < seed_panels; ++p) {
        const double x1 = (p + 1 == seed_panels) ? b : a + (p + 1) * h;
        const double xm = 0.5 * (x0 + x1);
        const double fm = f(xm);
        const double f1 = f(x1);
        const double whole = detail::simpson_rule(f0, fm, f1, x1 - x0);
        total += detail::adaptive_simpson_rec(f, x0, x1, f0, fm, f1, whole,
                                              tol_per_panel, 48);
        x0 = x1;
        f0 = f1;
    }
    return total;
}

// Composite Simpson with a fixed panel count; no error control, used when a
// deterministic flop pattern matters more than adaptivity.
template <typename F>
double integrate_fixed(const F& f, double a, double b, int panels) {
    if (!(b > a)) return 0.0;
    const double h = (b - a) / panels;
    double total = 0.0;
    double x0 = a;
    double f0 = f(x0);
    for (int p = 0; p < panels; ++p) {
        const double x1 = (p + 1 == panels) ? b : a + (p + 1) * h;
        const double fm = f(0.5 * (x0 + x1));
        const double f1 = f(x1);
        total += detail::simpson_rule(f0, fm, f1, x1 - x0);
        x0 = x1;
        f0 = f1;
    }
    return total;
}

template <typename F>
double integrate(const F& f, double a, double b, const QuadConfig& cfg) {
    if (cfg.scheme == QuadScheme::fixed_panel)
        return integrate_fixed(f, a, b, cfg.panels);
    return integrate_adaptive(f, a, b, cfg.abs_tol);
}

} // namespace permix

#endif
