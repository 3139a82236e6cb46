#ifndef PERMIX_GEOMETRY_HPP
#define PERMIX_GEOMETRY_HPP

#include <cstddef>
#include <optional>
#include <vector>

#include "permix/families.hpp"
#include "permix/overlap.hpp"

namespace permix {

// Partition of a member list minimizing the largest intra-block pairwise
// order-1/2 Renyi divergence.
struct Partition {
    std::vector<std::size_t> block_of; // member index -> block id in [0, k)
    std::size_t k = 0;
    double diameter = 0.0;
};

struct PriorWeights {
    std::vector<double> weights; // simplex over a member grid
};

// k-way expansion constant with the achieving disjoint vertex sets.
struct ExpansionResult {
    double rho = 0.0;
    std::vector<std::vector<std::size_t>> witness_sets;
};

enum class PartitionMethod { dp1d, brute };

// Min-max intra-block diameter over partitions into at most k blocks. dp1d
// sorts members along their natural 1D parameter (GaussianLoc mean, Poisson
// sqrt-rate, GaussianScale log-sigma) and binary-searches the answer over the
// realized pairwise divergences with a greedy feasibility check; brute
// enumerates all set partitions (n <= 12) for any family.
Partition partition_diameter(const std::vector<Member>& members, std::size_t k,
                             PartitionMethod method);

// Exact k-way expansion constant of the off-diagonal weight graph of A:
// minimum over k disjoint nonempty vertex sets of the largest conductance.
ExpansionResult kway_expansion(const OverlapMatrix& a, std::size_t k);

struct InequalityAudit {
    double lambda_k = 0.0;
    double cheeger_lhs = 0.0; // (1 - lambda_k) / 2
    double rho_k = 0.0;
    double cheeger_slack = 0.0;
    bool cheeger_pass = false;
    // Combinatorial target at k = 1: rho_G(5) >= exp(-D_1) / 4. Only
    // evaluated when k == 1 and 5 <= n <= 8.
    std::optional<double> comb_lhs;
    std::optional<double> comb_rho5;
    std::optional<double> comb_slack;
    std::optional<bool> comb_pass;
    // Reported-only ratio (1 - lambda_{10k}) * log(5k) * exp(2 D_k); NaN when
    // the spectrum has fewer than 10k eigenvalues. Carries an unknown
    // universal constant, so it is never asserted.
    double reported_ratio = 0.0;
};

InequalityAudit inequality_audit(const OverlapMatrix& a,
                                 const std::vector<Member>& members, std::size_t k);

struct CapacityResult {
    double value = 0.0;
    PriorWeights prior;
    int iterations_used = 0;
};

// Certified lower bound on the chi^2 capacity of any family containing the
// grid: multiplicative-weight ascent over priors, starting uniform, keeping
// the best iterate. The value is I_chi2(prior), never an extrapolation.
CapacityResult capacity_lower(const std::vector<Member>& grid, int iters, double tol,
                              const QuadConfig& cfg = {});

// Upper bound C <= sup_members sup_x dP/dQ - 1 for an explicit reference Q.
// Supported pairs: Discrete members with a Discrete reference (exact category
// max), GaussianLoc members with a GaussianScale reference of sigma > 1.
double capacity_upper_ratio(const std::vector<Member>& members, const Member& reference);

// Same bound for the full simplex of pmfs on m categories with first entry
// >= eps, against the uniform reference: the ratio supremum is m, so the
// bound is m - 1.
double capacity_upper_ratio_discrete_simplex(std::size_t m, double eps);

// Same bound for the GaussianLoc family with |mean| <= mu, optimizing the
// N(0, tau^2) reference over a grid of tau > 1 values.
double capacity_upper_ratio_gaussian_family(double mu, const std::vector<double>& tau_grid);

// Dimension-independent composite bound (up to a universal constant):
// sum_{k <= floor(cap)+1} D_k + (cap + 1) * log(max(log(cap), e)).
double bound_dim_independent(const std::vector<double>& dk_schedule, double cap);

// Dimension-dependent composite bound for k blocks over n members:
// ((k-1)/2) * log(2 pi (n+k) / k) + sum of per-block log(1+chi^2) certificates.
double bound_dim_dependent(std::size_t n, const std::vector<double>& blocks);

// Minimum of bound_dim_dependent over several candidate block certificates.
double bound_dim_dependent_best(std::size_t n,
                                const std::vector<std::vector<double>>& block_sets);

} // namespace permix

#endif
