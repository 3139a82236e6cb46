#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "permix/compound.hpp"
#include "permix/families.hpp"
#include "permix/permanent.hpp"
#include "test_util.hpp"

using namespace permix;
using testutil::close_abs;
using testutil::close_rel;

namespace {

double lik(const CompoundInstance& inst, double theta, double x) {
    if (inst.model == CompoundModel::gaussian_loc)
        return density(Member::gaussian_loc(theta), x);
    return density(Member::poisson(theta), x);
}

// Plain-double S_n enumeration of the permutation-invariant oracle. Kept free
// of log-domain tricks on purpose; usable whenever the densities do not
// underflow (n <= 7, moderate parameters).
OracleEval enumerate_oracle(const CompoundInstance& inst, const std::vector<double>& x) {
    const std::size_t n = inst.size();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<double> num(n, 0.0), first(n, 0.0);
    double den = 0.0;
    do {
        double w = 1.0;
        for (std::size_t j = 0; j < n; ++j) w *= lik(inst, inst.theta[perm[j]], x[j]);
        den += w;
        for (std::size_t j = 0; j < n; ++j) num[j] += inst.theta[perm[j]] * w;
        first[perm[0]] += w;
    } while (std::next_permutation(perm.begin(), perm.end()));
    OracleEval out;
    for (std::size_t j = 0; j < n; ++j) {
        out.pi.push_back(num[j] / den);
        out.posterior_first.push_back(first[j] / den);
    }
    return out;
}

std::vector<double> random_observations(const CompoundInstance& inst, RngStream& rng) {
    std::vector<double> x;
    for (double th : inst.theta) {
        if (inst.model == CompoundModel::gaussian_loc)
            x.push_back(th + rng.normal());
        else
            x.push_back(double(rng.poisson(th)));
    }
    return x;
}

} // namespace

TEST_CASE("separable oracle closed forms") {
    {
        const CompoundInstance inst{CompoundModel::gaussian_loc, {1.3, 1.3, 1.3}};
        const auto out = separable_oracle(inst, {-4.0, 0.0, 9.0});
        for (double v : out) CHECK(v == 1.3);
    }
    for (double mu : {0.5, 1.0, 4.0}) {
        const CompoundInstance inst{CompoundModel::gaussian_loc, {0.0, mu}};
        const auto out = separable_oracle(inst, {mu / 2.0, mu / 2.0});
        CHECK(close_abs(out[0], mu / 2.0, 1e-12));
        CHECK(close_abs(out[1], mu / 2.0, 1e-12));
    }
}

TEST_CASE("separable oracle matches direct evaluation for Poisson counts") {
    // Integer rates keep every term exactly representable until the final
    // division, so a naive evaluation is a trustworthy reference.
    const CompoundInstance inst{CompoundModel::poisson, {1.0, 2.0, 3.0, 4.0}};
    const std::vector<double> x = {0.0, 3.0, 5.0, 8.0};
    const auto out = separable_oracle(inst, x);
    for (std::size_t i = 0; i < x.size(); ++i) {
        long double num = 0.0L, den = 0.0L;
        for (double th : inst.theta) {
            const long double w =
                std::exp((long double)(-th)) * std::pow((long double)th, x[i]);
            num += th * w;
            den += w;
        }
        CHECK(close_rel(out[i], double(num / den), 1e-13));
    }
}

TEST_CASE("pi oracle degenerate and tiny cases") {
    {
        const CompoundInstance inst{CompoundModel::gaussian_loc, {0.7}};
        const OracleEval out = pi_oracle(inst, {2.0});
        CHECK(out.pi == std::vector<double>{0.7});
        CHECK(out.sep == std::vector<double>{0.7});
        CHECK(out.posterior_first == std::vector<double>{1.0});
    }
    {
        const CompoundInstance inst{CompoundModel::poisson, {2.5, 2.5, 2.5}};
        const OracleEval out = pi_oracle(inst, {0.0, 3.0, 7.0});
        for (double v : out.pi) CHECK(v == 2.5);
        for (double v : out.sep) CHECK(v == 2.5);
        for (double v : out.posterior_first) CHECK(close_abs(v, 1.0 / 3.0, 1e-15));
    }
    {
        // Rate zero forces the assignment: unit 1 must carry rate 0.
        const CompoundInstance inst{CompoundModel::poisson, {0.0, 5.0}};
        const OracleEval out = pi_oracle(inst, {0.0, 2.0});
        CHECK(close_abs(out.posterior_first[0], 1.0, 1e-14));
        CHECK(close_abs(out.pi[0], 0.0, 1e-14));
        CHECK(close_abs(out.pi[1], 5.0, 1e-14));
        // And an all-zero-likelihood observation pattern is degenerate.
        CHECK_THROWS_AS(pi_oracle(inst, {3.0, 2.0}), numerical_error);
    }
    {
        const CompoundInstance big{CompoundModel::gaussian_loc,
                                   std::vector<double>(26, 0.5)};
        CHECK_THROWS_AS(pi_oracle(big, std::vector<double>(26, 0.0)), capacity_error);
    }
}

TEST_CASE("pi oracle equals the full permutation sum") {
    RngStream rng(101, 0);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t n = 3 + std::size_t(rng.uniform01() * 5.0);
        CompoundInstance inst;
        inst.model = (rep % 2 == 0) ? CompoundModel::gaussian_loc : CompoundModel::poisson;
        for (std::size_t i = 0; i < n; ++i)
            inst.theta.push_back(inst.model == CompoundModel::gaussian_loc
                                     ? 4.0 * rng.uniform01() - 2.0
                                     : 0.2 + 5.0 * rng.uniform01());
        const auto x = random_observations(inst, rng);
        const OracleEval fast = pi_oracle(inst, x);
        const OracleEval slow = enumerate_oracle(inst, x);
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(close_rel(fast.pi[i], slow.pi[i], 1e-10));
            CHECK(close_abs(fast.posterior_first[i], slow.posterior_first[i], 1e-10));
        }
    }
}

TEST_CASE("pi oracle output lives in the right sets") {
    RngStream rng(103, 0);
    for (int rep = 0; rep < 10; ++rep) {
        CompoundInstance inst;
        inst.model = CompoundModel::gaussian_loc;
        for (int i = 0; i < 6; ++i) inst.theta.push_back(4.0 * rng.uniform01() - 2.0);
        const auto x = random_observations(inst, rng);
        const OracleEval out = pi_oracle(inst, x);
        const auto [lo, hi] = std::minmax_element(inst.theta.begin(), inst.theta.end());
        double total = 0.0;
        for (std::size_t i = 0; i < 6; ++i) {
            CHECK(out.pi[i] >= *lo - 1e-12);
            CHECK(out.pi[i] <= *hi + 1e-12);
            CHECK(out.posterior_first[i] >= -1e-12);
            total += out.posterior_first[i];
        }
        CHECK(close_abs(total, 1.0, 1e-10));
        CHECK(out.posterior_first ==
              posterior_first_weights(inst, x)); // same code path, same bits
    }
}

TEST_CASE("pi oracle is permutation equivariant") {
    RngStream rng(107, 0);
    const CompoundInstance inst{CompoundModel::gaussian_loc, {-1.2, -0.3, 0.4, 1.7, 0.9}};
    const auto x = random_observations(inst, rng);
    const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
    CompoundInstance pinst;
    pinst.model = inst.model;
    std::vector<double> px;
    for (std::size_t i : perm) {
        pinst.theta.push_back(inst.theta[i]);
        px.push_back(x[i]);
    }
    const OracleEval base = pi_oracle(inst, x);
    const OracleEval moved = pi_oracle(pinst, px);
    for (std::size_t i = 0; i < perm.size(); ++i)
        CHECK(close_rel(moved.pi[i], base.pi[perm[i]], 1e-11));
}

TEST_CASE("regret gap estimates") {
    {
        const CompoundInstance inst{CompoundModel::gaussian_loc, {2.0, 2.0, 2.0, 2.0}};
        const GapEstimate g = regret_gap_mc(inst, 500, 7);
        CHECK(g.mean == 0.0);
        CHECK(g.std_error == 0.0);
        CHECK(g.samples == 500);
        CHECK(g.aborted == 0);
    }
    {
        const CompoundInstance inst{CompoundModel::gaussian_loc, {-1.0, 1.0}};
        const GapEstimate g = regret_gap_mc(inst, 100000, 12345);
        CHECK(g.mean > 0.0);
        CHECK(g.mean > 5.0 * g.std_error);
        CHECK(g.mean >= -3.0 * g.std_error);
    }
    {
        // Shrinking separation drives the gap toward zero.
        double prev = 1e9;
        for (double mu : {0.5, 0.25, 0.125}) {
            const CompoundInstance inst{CompoundModel::gaussian_loc, {-mu, mu}};
            const GapEstimate g = regret_gap_mc(inst, 20000, 99);
            CHECK(g.mean >= -3.0 * g.std_error);
            CHECK(g.mean < prev);
            prev = g.mean;
        }
    }
    {
        const CompoundInstance inst{CompoundModel::poisson, {1.0, 4.0}};
        const GapEstimate g = regret_gap_mc(inst, 20000, 31);
        CHECK(g.mean > 0.0);
        CHECK(g.mean >= -3.0 * g.std_error);
        CHECK(g.aborted == 0);
    }
    CHECK_THROWS_AS(regret_gap_mc({CompoundModel::gaussian_loc, {0.0, 1.0}}, 0, 1),
                    validation_error);
}

TEST_CASE("monte carlo results do not depend on the thread count") {
    const CompoundInstance inst{CompoundModel::gaussian_loc, {-0.8, 0.1, 1.4}};
    const GapEstimate serial = regret_gap_mc(inst, 20000, 777, 1);
    const GapEstimate rerun = regret_gap_mc(inst, 20000, 777, 1);
    const GapEstimate threaded = regret_gap_mc(inst, 20000, 777, 8);
    CHECK(serial.mean == rerun.mean);
    CHECK(serial.std_error == rerun.std_error);
    CHECK(serial.mean == threaded.mean);
    CHECK(serial.std_error == threaded.std_error);
    const GapEstimate other = regret_gap_mc(inst, 20000, 778, 1);
    CHECK(serial.mean != other.mean); // the seed actually matters
}

TEST_CASE("orthogonality identity holds within paired Monte Carlo error") {
    {
        const CompoundInstance inst{CompoundModel::gaussian_loc, {0.6, 0.6}};
        const OrthogonalityCheck c = orthogonality_check(inst, 2000, 5);
        CHECK(c.lhs == 0.0);
        CHECK(c.rhs == 0.0);
        CHECK(c.pass);
    }
    {
        const CompoundInstance inst{CompoundModel::gaussian_loc, {0.0, 1.0, 2.0}};
        const OrthogonalityCheck c = orthogonality_check(inst, 100000, 4242);
        CHECK(c.pass);
        CHECK(std::abs(c.lhs - c.rhs) <= 4.0 * c.combined_se);
        CHECK(c.samples == 100000);
    }
    {
        const CompoundInstance inst{CompoundModel::poisson, {1.0, 4.0}};
        const OrthogonalityCheck c = orthogonality_check(inst, 100000, 4243);
        CHECK(c.pass);
        CHECK(c.aborted == 0);
    }
}

TEST_CASE("half-noise interpolation identity") {
    {
        const CompoundInstance inst{CompoundModel::gaussian_loc, {0.9, 0.9, 0.9}};
        const InterpCheck c = interp_identity_check(inst, {0.0, 1.0, 2.0});
        CHECK(c.residual_direct == 0.0);
        CHECK(c.residual_route == 0.0);
    }
    {
        RngStream rng(211, 0);
        const CompoundInstance inst{CompoundModel::gaussian_loc, {-1.0, 0.0, 1.0}};
        for (int rep = 0; rep < 50; ++rep) {
            const auto x = random_observations(inst, rng);
            const InterpCheck c = interp_identity_check(inst, x);
            CHECK(c.residual_direct < 1e-12);
            CHECK(c.residual_route < 1e-7);
        }
    }
    {
        RngStream rng(223, 0);
        const CompoundInstance inst{CompoundModel::poisson, {0.5, 3.0}};
        for (int rep = 0; rep < 50; ++rep) {
            const auto x = random_observations(inst, rng);
            const InterpCheck c = interp_identity_check(inst, x);
            CHECK(c.residual_direct < 1e-12);
            CHECK(c.residual_route < 1e-7);
        }
    }
}

TEST_CASE("mean transportation inequality") {
    {
        // nu = delta_0 against mu = delta_0: both sides vanish.
        const TransportationCheck c = transportation_check(1.0, {0.0}, {1.0}, {1.0});
        CHECK(c.lhs == 0.0);
        CHECK(c.rhs == 0.0);
        CHECK(c.pass);
    }
    {
        // Point mass at 1 against Poi(1): equal means, positive KL.
        const TransportationCheck c = transportation_check(2.0, {1.0}, {1.0}, {0.0, 1.0});
        CHECK(close_abs(c.lhs, 0.0, 1e-14));
        CHECK(close_rel(c.rhs, 2.0 * 2.0 * 4.0 * 1.0, 1e-12));
        CHECK(c.pass);
    }
    {
        RngStream rng(227, 0);
        int cases = 0;
        while (cases < 200) {
            const double h = std::vector<double>{0.5, 2.0, 8.0}[cases % 3];
            const std::size_t k = 1 + std::size_t(rng.uniform01() * 3.0);
            std::vector<double> rates, weights = testutil::random_simplex(rng, k);
            for (std::size_t i = 0; i < k; ++i) rates.push_back(h * rng.uniform01());

            // mu over {0..6} with mean forced into [0, h] by leaking mass to 0.
            std::vector<double> mu = testutil::random_simplex(rng, 7);
            double mean = 0.0;
            for (std::size_t v = 0; v < mu.size(); ++v) mean += double(v) * mu[v];
            if (mean > h) {
                const double shrink = 0.9 * h / mean;
                for (std::size_t v = 1; v < mu.size(); ++v) mu[v] *= shrink;
                double rest = 0.0;
                for (std::size_t v = 1; v < mu.size(); ++v) rest += mu[v];
                mu[0] = 1.0 - rest;
            }
            const TransportationCheck c = transportation_check(h, rates, weights, mu);
            CHECK(c.pass);
            CHECK(c.lhs >= 0.0);
            ++cases;
        }
    }
    CHECK_THROWS_AS(transportation_check(0.5, {0.2}, {1.0}, {0.0, 0.0, 0.0, 0.0, 0.0, 1.0}),
                    validation_error); // mu mean 5 > h
    CHECK_THROWS_AS(transportation_check(1.0, {2.0}, {1.0}, {1.0}),
                    validation_error); // mixing rate above h
    CHECK_THROWS_AS(transportation_check(1.0, {0.5}, {0.7}, {1.0}),
                    validation_error); // weights do not sum to 1
}

TEST_CASE("exponential tilt variance bound") {
    std::vector<double> grid;
    for (double t = -10.0; t <= 10.0 + 1e-9; t += 0.5) grid.push_back(t);
    {
        const TiltVarianceCheck c = tilt_variance_check({{0.3}, {1.0}, 0.5}, 0.0, grid);
        CHECK(close_abs(c.max_var, 0.25, 1e-14));
        CHECK(close_abs(c.bound, 0.25, 1e-14));
        CHECK(c.pass);
    }
    {
        const double h = 4.0;
        const GaussianMixture post{{-h / 8.0, h / 8.0}, {0.5, 0.5}, 0.5};
        const TiltVarianceCheck c = tilt_variance_check(post, h, grid);
        CHECK(c.pass);
        CHECK(c.max_var <= c.bound + 1e-12);
        CHECK(close_abs(c.bound, h * h / 16.0 + 0.25, 1e-14));
    }
    {
        // Posteriors of the half-noise variable from simulated draws.
        RngStream rng(229, 0);
        const double h = 4.0;
        for (int rep = 0; rep < 100; ++rep) {
            const std::size_t k = 2 + std::size_t(rng.uniform01() * 3.0);
            std::vector<double> theta, means, weights;
            for (std::size_t i = 0; i < k; ++i)
                theta.push_back(h * rng.uniform01() - h / 2.0);
            const double x = theta[0] + rng.normal();
            double norm = 0.0;
            for (std::size_t i = 0; i < k; ++i) {
                means.push_back(0.5 * (x + theta[i]));
                const double d = x - theta[i];
                weights.push_back(std::exp(-0.5 * d * d));
                norm += weights.back();
            }
            for (double& w : weights) w /= norm;
            const TiltVarianceCheck c = tilt_variance_check({means, weights, 0.5}, h, grid);
            CHECK(c.pass);
        }
    }
    CHECK_THROWS_AS(tilt_variance_check({{0.0}, {1.0}, 0.4}, 1.0, grid), validation_error);
    CHECK_THROWS_AS(tilt_variance_check({{0.0, 2.1}, {0.5, 0.5}, 0.5}, 4.0, grid),
                    validation_error); // spread above h/2
    CHECK_THROWS_AS(tilt_variance_check({{0.0}, {1.0}, 0.5}, 1.0, {}), validation_error);
}

TEST_CASE("mutual information chain audit") {
    for (double h : {0.5, 2.0}) {
        for (std::size_t n : {std::size_t{2}, std::size_t{6}}) {
            const ChainAudit a = mutual_info_chain_audit(h, n, 20000, 555);
            CHECK(a.pass);
            const double denom = 2.0 * h * (h + 2.0);
            CHECK(close_abs(a.lhs, a.gap_mean / denom, 1e-15));
            CHECK(close_abs(a.rhs, std::log1p(a.chi2_half_noise) + 4.0 * a.gap_se / denom,
                            1e-15));
            // The divergence matches an independent rebuild of the family whose
            // member separation is scaled by sqrt(2).
            std::vector<Member> half;
            for (std::size_t i = 0; i < n / 2; ++i)
                half.push_back(Member::gaussian_loc(-std::numbers::sqrt2 * h / 2.0));
            for (std::size_t i = 0; i < n / 2; ++i)
                half.push_back(Member::gaussian_loc(std::numbers::sqrt2 * h / 2.0));
            CHECK(close_rel(a.chi2_half_noise, chi2_exact(half), 1e-10));
        }
    }
    CHECK_THROWS_AS(mutual_info_chain_audit(0.0, 2, 100, 1), validation_error);
    CHECK_THROWS_AS(mutual_info_chain_audit(1.0, 3, 100, 1), validation_error);
    CHECK_THROWS_AS(mutual_info_chain_audit(1.0, 12, 100, 1), capacity_error);
}
