#ifndef PERMIX_PERMANENT_HPP
#define PERMIX_PERMANENT_HPP

#include <cstddef>
#include <limits>
#include <vector>

#include "permix/matrix.hpp"
#include "permix/overlap.hpp"

namespace permix {

// Log-domain carrier for permanents and signed permanent-like sums.
struct LogValue {
    double log_magnitude = -std::numeric_limits<double>::infinity();
    bool zero_flag = true;
    int sign = 1; // meaningful only when zero_flag is false

    static LogValue zero() { return {}; }

    double value() const {
        if (zero_flag) return 0.0;
        return sign * std::exp(log_magnitude);
    }
};

// Per-column scaling pulled out of a matrix before Ryser accumulation:
// Perm(M) = exp(log_correction) * Perm(scaled M) by column multilinearity.
struct ColumnScaling {
    std::vector<double> scale_factors;
    double log_correction = 0.0;
};

enum class PermanentEngine { ryser, naive };

// Exact permanent of a nonnegative matrix. Ryser's inclusion-exclusion with
// Gray-code subset iteration (n <= 30); naive enumerates all n! permutations
// (n <= 9) and exists as an independent oracle.
LogValue permanent_exact(const SquareMatrix& m,
                         PermanentEngine engine = PermanentEngine::ryser);

// Permanent of m with column `col` replaced entrywise by weights[k]*m(k,col).
// Weights may be signed; the result carries the sign.
LogValue weighted_column_permanent(const SquareMatrix& m, std::size_t col,
                                   const std::vector<double>& weights);

// Exact chi^2 divergence between the permutation-coupled observation law and
// its independent mean-field counterpart: 1 + chi^2 = (n^n / n!) Perm(A).
double chi2_exact(const std::vector<Member>& members, const QuadConfig& cfg = {});

// chi^2 of the m-fold replicated instance of a small family (n in {2,3}),
// via the exact contingency-table expansion of Perm(A kron J_m / m).
double replicated_chi2(const OverlapMatrix& a, std::size_t m);

// Closed form for the balanced two-component family with 2m members and
// second overlap eigenvalue f: sum over l of (C(m,l)^2 / C(2m,2l)) f^(2l).
double two_component_chi2(std::size_t half_n, double f);

enum class MixingModel { gaussian, poisson };

// Second overlap eigenvalue of a separated two-point family. Gaussian branch:
// f = 1 - exp(-mu^2/2) E[1/cosh(mu Z)], Z standard normal, by quadrature.
// Poisson branch: closed form (1 - e^-M)/(1 + e^-M) = tanh(M/2).
double mixing_scalar(MixingModel model, double sep);

} // namespace permix

#endif
