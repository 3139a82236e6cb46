#ifndef PERMIX_COMPOUND_HPP
#define PERMIX_COMPOUND_HPP

#include <cstddef>
#include <cstdint>
#include <vector>

#include "permix/quadrature.hpp"

namespace permix {

enum class CompoundModel { gaussian_loc, poisson };

// A compound decision problem: n units with parameters theta, one observation
// per unit, and the uniform random assignment of parameters to units.
struct CompoundInstance {
    CompoundModel model = CompoundModel::gaussian_loc;
    std::vector<double> theta;

    std::size_t size() const { return theta.size(); }
};

void validate_instance(const CompoundInstance& inst);

struct OracleEval {
    std::vector<double> sep;             // separable oracle, one per coordinate
    std::vector<double> pi;              // permutation-invariant oracle
    std::vector<double> posterior_first; // P(first unit's parameter = theta_k | x)
};

struct GapEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::int64_t samples = 0; // samples contributing to the estimate
    std::uint64_t seed = 0;
    std::int64_t aborted = 0; // degenerate-likelihood samples discarded
};

// Coordinatewise posterior mean under the empirical prior over theta:
// out_i = sum_j theta_j f_j(x_i) / sum_j f_j(x_i), in log domain.
std::vector<double> separable_oracle(const CompoundInstance& inst,
                                     const std::vector<double>& x);

// Permutation-invariant posterior means via permanents of the likelihood
// matrix M[k][j] = f_{theta_k}(x_j): pi_i is a ratio of a column-reweighted
// permanent to the plain permanent (n <= 25).
OracleEval pi_oracle(const CompoundInstance& inst, const std::vector<double>& x);

// Just the posterior of the first unit's parameter; a cheaper path for Monte
// Carlo loops that do not need the full pi vector.
std::vector<double> posterior_first_weights(const CompoundInstance& inst,
                                            const std::vector<double>& x);

// Monte Carlo estimate of n * E[(E[th_1 | X_1] - E[th_1 | X^n])^2], the exact
// regret gap between the separable and permutation-invariant oracles.
// Deterministic given (seed, samples), independent of thread count.
GapEstimate regret_gap_mc(const CompoundInstance& inst, std::int64_t samples,
                          std::uint64_t seed, unsigned n_threads = 1);

struct OrthogonalityCheck {
    double lhs = 0.0; // MSE(separable) - MSE(permutation-invariant), Monte Carlo
    double rhs = 0.0; // gap formula with the same draws
    double combined_se = 0.0;
    bool pass = false;
    std::int64_t samples = 0;
    std::int64_t aborted = 0;
};

// Paired test of the orthogonality identity: both sides estimated from common
// random draws, pass iff |lhs - rhs| <= 4 * combined_se.
OrthogonalityCheck orthogonality_check(const CompoundInstance& inst,
                                       std::int64_t samples, std::uint64_t seed,
                                       unsigned n_threads = 1);

struct InterpCheck {
    double residual_direct = 0.0; // identity with structural half-noise means
    double residual_route = 0.0;  // identity with quadrature/summation means
};

// Audits the half-noise interpolation identity at one realization x.
// Gaussian: E[th1|X1] - E[th1|Xn] = 2 (E[Z1|X1] - E[Z1|Xn]) with
// Z1 = th1 + N(0, 1/2). Poisson: same with coefficient 1 and Z1 ~ Poi(2 th1),
// X1 ~ Binomial(Z1, 1/2).
InterpCheck interp_identity_check(const CompoundInstance& inst,
                                  const std::vector<double>& x,
                                  const QuadConfig& cfg = {});

struct TransportationCheck {
    double lhs = 0.0; // squared mean gap
    double rhs = 0.0; // 2 h (h+2) * KL
    bool pass = false;
};

// Mean-transportation inequality for a Poisson mixture nu with mixing rates
// in [0, h] against a finitely supported mu on the nonnegative integers with
// mean in [0, h]: (E_mu X - E_nu X)^2 <= 2 h (h+2) KL(mu || nu).
TransportationCheck transportation_check(double h,
                                         const std::vector<double>& mixing_rates,
                                         const std::vector<double>& mixing_weights,
                                         const std::vector<double>& mu_probs);

struct GaussianMixture {
    std::vector<double> means;
    std::vector<double> weights;
    double sd = 0.5; // common component standard deviation
};

struct TiltVarianceCheck {
    double max_var = 0.0;
    double bound = 0.0;
    bool pass = false;
};

// Exponential tilts of an equal-sd Gaussian mixture keep the component sd and
// reweight components; the variance of every tilt stays below
// h^2/16 + 1/4 when the component sd is 1/2 and the means span at most h/2.
TiltVarianceCheck tilt_variance_check(const GaussianMixture& post, double h,
                                      const std::vector<double>& t_grid);

struct ChainAudit {
    double lhs = 0.0; // gap mean / (2 h (h+2))
    double rhs = 0.0; // log(1 + chi^2 of the half-noise family) + MC margin
    double gap_mean = 0.0;
    double gap_se = 0.0;
    double chi2_half_noise = 0.0;
    bool pass = false;
};

// Chains the mean-transportation constant with the divergence of the
// half-noise family: for a balanced two-point Gaussian instance with
// parameter range h, gap / (2h(h+2)) <= log(1 + chi^2) + 4 SE margin.
ChainAudit mutual_info_chain_audit(double h, std::size_t n, std::int64_t samples,
                                   std::uint64_t seed, unsigned n_threads = 1);

} // namespace permix

#endif
