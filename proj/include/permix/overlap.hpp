#ifndef PERMIX_OVERLAP_HPP
#define PERMIX_OVERLAP_HPP

#include <cstddef>
#include <vector>

#include "permix/families.hpp"
#include "permix/matrix.hpp"
#include "permix/quadrature.hpp"

namespace permix {

// Channel overlap matrix A with A_ij = (1/n) * integral of dP_i dP_j / dPbar,
// where Pbar is the uniform mixture of the members. Symmetric, entrywise
// nonnegative, doubly stochastic, positive semidefinite.
struct OverlapMatrix {
    SquareMatrix entries;
    std::vector<Member> members;
    double row_sum_residual = 0.0;
    // Zero entries mean a mutually singular pair; downstream replication
    // bounds assume strictly positive entries, so this is flagged, not fatal.
    bool has_zero_entries = false;

    std::size_t size() const { return entries.size(); }
};

// Build the overlap matrix of a same-kind member family. Discrete entries are
// exact finite sums; GaussianLoc/GaussianScale use quadrature over a padded
// domain; Poisson uses a truncated series. Entries may be computed in
// parallel; the result is independent of the thread count.
OverlapMatrix build_overlap(const std::vector<Member>& members,
                            const QuadConfig& cfg = {}, unsigned n_threads = 1);

// Wrap a precomputed matrix as an OverlapMatrix (members unknown), computing
// the row-sum residual and the zero-entry flag.
OverlapMatrix overlap_from_entries(SquareMatrix entries);

// Alternating row/column normalization of a strictly positive matrix until
// every row and column sums to 1 within tol. With symmetric_output the result
// is additionally symmetrized and re-projected.
SquareMatrix sinkhorn_project(const SquareMatrix& m, double tol, int max_iter,
                              bool symmetric_output = true);

// Tr(A) - 1: the chi^2 mutual information of the uniform prior over the
// members, hence a certified lower bound on the chi^2 capacity.
double trace_capacity_lb(const OverlapMatrix& a);

} // namespace permix

#endif
