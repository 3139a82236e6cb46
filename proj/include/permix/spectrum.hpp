#ifndef PERMIX_SPECTRUM_HPP
#define PERMIX_SPECTRUM_HPP

#include <cstddef>
#include <optional>
#include <vector>

#include "permix/matrix.hpp"
#include "permix/overlap.hpp"

namespace permix {

struct SpectrumReport {
    std::vector<double> eigenvalues; // sorted descending
    std::size_t source_dim = 0;
};

// Full decomposition: columns of `vectors` are orthonormal eigenvectors,
// ordered to match report.eigenvalues.
struct EigenDecomposition {
    SpectrumReport report;
    SquareMatrix vectors;
};

// Divergence bounds in log(1 + chi^2) form.
struct BoundsReport {
    double log_upper = 0.0;          // sum over i>=2 of -log(1 - lambda_i)
    double log_lower_spectral = 0.0; // sum over i>=2 of -log(1 - lambda_i^2)/2
    double log_lower_diagonal = 0.0;
    std::optional<double> log_exact; // log(1 + chi^2) when available
};

// Cyclic Jacobi eigendecomposition of a symmetric matrix (n <= 200), iterated
// until the off-diagonal norm falls below 1e-13 * ||M||_F.
SpectrumReport eigen_sym(const SquareMatrix& m);
EigenDecomposition eigen_sym_full(const SquareMatrix& m);

// Upper bound: sum over non-leading eigenvalues of -log(1 - lambda).
// Eigenvalues are clamped into [0, 1] inside the formula only; out-of-range
// inputs increment *clamped when provided. Returns +infinity once any
// non-leading eigenvalue reaches 1 - 1e-12.
double spectral_upper(const SpectrumReport& spec, int* clamped = nullptr);

// Spectral lower bound: sum over non-leading eigenvalues of -log(1-lambda^2)/2.
double spectral_lower(const SpectrumReport& spec, int* clamped = nullptr);

// Diagonal-only lower bound: -log(n)/2 + sum over i>=2 of -log(1-A_ii^2)/2.
// The first member's diagonal entry is excluded by the formula's indexing.
double diagonal_lower(const OverlapMatrix& a);

struct HessianCheck {
    double lhs = 0.0; // det of the constrained Hessian via pivoted LU
    double rhs = 0.0; // closed form from the overlap spectrum
    double log_lhs = 0.0;
    double log_rhs = 0.0;
    double rel_err = 0.0;
};

// Audit of the determinant identity for the constrained Hessian of the
// log-permanent objective at a strictly positive doubly stochastic matrix:
// det(H) = (1 / (n prod_ij A_ij)) * prod_{k>=2} (1 - lambda_k^2).
HessianCheck hessian_det_check(const SquareMatrix& a);

// Assemble all bounds for one overlap matrix; chi2, when supplied, is stored
// as log_exact = log(1 + chi2).
BoundsReport bounds_report(const OverlapMatrix& a,
                           std::optional<double> chi2 = std::nullopt);

} // namespace permix

#endif
