#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>

#include "permix/families.hpp"
#include "test_util.hpp"

using namespace permix;
using testutil::close_abs;
using testutil::close_rel;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

TEST_CASE("density closed forms") {
    CHECK(close_abs(density(Member::gaussian_loc(0.0), 0.0), 0.3989422804014327, 1e-12));
    CHECK(density(Member::poisson(0.0), 0.0) == 1.0);
    CHECK(density(Member::poisson(0.0), 3.0) == 0.0);
    CHECK(close_rel(density(Member::poisson(2.0), 3.0), std::exp(-2.0) * 8.0 / 6.0, 1e-13));
    CHECK(close_rel(density(Member::discrete({0.25, 0.75}), 1.0), 0.75, 1e-15));
    CHECK(close_abs(density(Member::gaussian_scale(2.0), 0.0),
                    0.3989422804014327 / 2.0, 1e-12));
}

TEST_CASE("log density agrees with density") {
    const Member members[] = {
        Member::gaussian_loc(-3.0), Member::poisson(5.0),
        Member::discrete({0.1, 0.2, 0.7}), Member::gaussian_scale(0.7),
        Member::gaussian_loc_multi({1.5})};
    const double xs[] = {0.0, 1.0, 2.0};
    for (const Member& m : members) {
        for (double x : xs) {
            const double ld = log_density(m, x);
            if (std::isinf(ld)) {
                CHECK(density(m, x) == 0.0);
            } else {
                CHECK(close_rel(std::exp(ld), density(m, x), 1e-14));
            }
        }
    }
}

TEST_CASE("log domain survives remote observations") {
    // |theta| up to 40: plain density underflows gracefully instead of
    // producing garbage.
    const double ld = log_density(Member::gaussian_loc(40.0), -40.0);
    CHECK(close_rel(ld, -0.5 * 80.0 * 80.0 - 0.5 * std::log(2.0 * M_PI), 1e-14));
    CHECK(density(Member::gaussian_loc(40.0), -40.0) == 0.0);
}

TEST_CASE("invalid observations are typed errors") {
    CHECK_THROWS_AS(density(Member::poisson(2.0), 1.5), validation_error);
    CHECK_THROWS_AS(density(Member::poisson(2.0), -1.0), validation_error);
    CHECK_THROWS_AS(density(Member::discrete({0.5, 0.5}), 2.0), validation_error);
    CHECK_THROWS_AS(density(Member::discrete({0.5, 0.5}), 0.5), validation_error);
    CHECK_THROWS_AS(density(Member::gaussian_loc(0.0),
                            std::numeric_limits<double>::infinity()),
                    validation_error);
}

TEST_CASE("member construction validates parameters") {
    CHECK_THROWS_AS(Member::poisson(-0.1), validation_error);
    CHECK_THROWS_AS(Member::gaussian_scale(0.0), validation_error);
    CHECK_THROWS_AS(Member::gaussian_scale(-1.0), validation_error);
    CHECK_THROWS_AS(Member::discrete({}), validation_error);
    CHECK_THROWS_AS(Member::discrete({0.5, 0.6}), validation_error);
    CHECK_THROWS_AS(Member::discrete({-0.1, 1.1}), validation_error);
    CHECK_THROWS_AS(Member::gaussian_loc(std::nan("")), validation_error);
    CHECK_NOTHROW(Member::poisson(0.0));
}

TEST_CASE("renyi closed-form examples") {
    CHECK(renyi_half(Member::gaussian_loc(0.0), Member::gaussian_loc(2.0)) == 1.0);
    CHECK(renyi_half(Member::poisson(1.0), Member::poisson(4.0)) == 1.0);
    CHECK(renyi_half(Member::poisson(2.5), Member::poisson(2.5)) == 0.0);
    const double e = std::exp(1.0);
    CHECK(close_rel(renyi_half(Member::gaussian_scale(1.0), Member::gaussian_scale(e)),
                    std::log((1.0 + e * e) / (2.0 * e)), 1e-14));
    CHECK(close_abs(renyi_half(Member::gaussian_scale(1.0), Member::gaussian_scale(e)),
                    0.4338, 1e-4));
}

TEST_CASE("renyi is symmetric, nonnegative, zero iff equal") {
    RngStream rng(11, 0);
    const ModelKind kinds[] = {ModelKind::gaussian_loc, ModelKind::poisson,
                               ModelKind::gaussian_scale, ModelKind::discrete};
    for (ModelKind kind : kinds) {
        for (int rep = 0; rep < 20; ++rep) {
            const Member p = testutil::random_member(kind, rng);
            const Member q = testutil::random_member(kind, rng);
            const double d = renyi_half(p, q);
            CHECK(d >= 0.0);
            CHECK(d == renyi_half(q, p));
            CHECK(renyi_half(p, p) == 0.0);
            if (!(p == q)) CHECK(d > 0.0);
        }
    }
}

TEST_CASE("renyi monotone in the natural gap") {
    double prev = -1.0;
    for (double t = 0.0; t <= 5.0; t += 0.25) {
        const double d = renyi_half(Member::gaussian_loc(0.0), Member::gaussian_loc(t));
        CHECK(d > prev);
        prev = d;
    }
    prev = -1.0;
    for (double r = 1.0; r <= 16.0; r += 0.5) {
        const double d = renyi_half(Member::poisson(1.0), Member::poisson(r));
        CHECK(d > prev);
        prev = d;
    }
    prev = -1.0;
    for (double ls = 0.0; ls <= 2.0; ls += 0.1) {
        const double d =
            renyi_half(Member::gaussian_scale(1.0), Member::gaussian_scale(std::exp(ls)));
        CHECK(d > prev);
        prev = d;
    }
}

TEST_CASE("renyi rejects mixed kinds and mismatched supports") {
    CHECK_THROWS_AS(renyi_half(Member::gaussian_loc(0.0), Member::poisson(1.0)),
                    validation_error);
    CHECK_THROWS_AS(renyi_half(Member::discrete({0.5, 0.5}),
                               Member::discrete({0.3, 0.3, 0.4})),
                    validation_error);
}

TEST_CASE("mutually singular discrete pair gives the infinity sentinel") {
    const double d = renyi_half(Member::discrete({1.0, 0.0}), Member::discrete({0.0, 1.0}));
    CHECK(d == kInf);
}

TEST_CASE("chi2 closed-form examples") {
    CHECK(close_rel(chi2_pair(Member::gaussian_loc_multi({0.0}),
                              Member::gaussian_loc_multi({1.0})),
                    std::exp(1.0) - 1.0, 1e-13));
    CHECK(chi2_pair(Member::gaussian_loc(1.0), Member::gaussian_loc(1.0)) == 0.0);
    CHECK(close_rel(chi2_pair(Member::gaussian_scale(1.0),
                              Member::gaussian_scale(std::sqrt(2.0))),
                    2.0 / std::sqrt(3.0) - 1.0, 1e-13));
}

TEST_CASE("divergent chi2 returns the sentinel instead of throwing") {
    // sigma1^2 >= 2 sigma2^2 makes the integral diverge; the boundary itself
    // is included.
    CHECK(chi2_pair(Member::gaussian_scale(2.0), Member::gaussian_scale(1.0)) == kInf);
    CHECK(chi2_pair(Member::gaussian_scale(std::sqrt(2.0)), Member::gaussian_scale(1.0)) ==
          kInf);
    CHECK(chi2_pair(Member::discrete({0.5, 0.5}), Member::discrete({1.0, 0.0})) == kInf);
}

TEST_CASE("renyi matches quadrature on random pairs") {
    RngStream rng(23, 0);
    const ModelKind kinds[] = {ModelKind::gaussian_loc, ModelKind::poisson,
                               ModelKind::gaussian_scale, ModelKind::discrete};
    for (ModelKind kind : kinds) {
        for (int rep = 0; rep < 50; ++rep) {
            const Member p = testutil::random_member(kind, rng);
            const Member q = testutil::random_member(kind, rng);
            double affinity;
            if (kind == ModelKind::poisson) {
                affinity = testutil::series(
                    [&](long x) {
                        return std::sqrt(density(p, double(x)) * density(q, double(x)));
                    },
                    120);
            } else if (kind == ModelKind::discrete) {
                affinity = 0.0;
                for (std::size_t c = 0; c < p.pmf().size(); ++c)
                    affinity += std::sqrt(p.pmf()[c] * q.pmf()[c]);
            } else {
                affinity = testutil::simpson(
                    [&](double x) { return std::sqrt(density(p, x) * density(q, x)); },
                    -60.0, 60.0);
            }
            CHECK(close_abs(renyi_half(p, q), -2.0 * std::log(affinity), 1e-8));
        }
    }
}

TEST_CASE("chi2 matches quadrature on random pairs") {
    RngStream rng(29, 0);
    for (int rep = 0; rep < 50; ++rep) {
        const Member p = testutil::random_member(ModelKind::gaussian_loc, rng);
        const Member q = testutil::random_member(ModelKind::gaussian_loc, rng);
        const double oracle = testutil::simpson(
            [&](double x) {
                const double qx = density(q, x);
                if (qx == 0.0) return 0.0; // tail underflow, negligible mass
                const double d = density(p, x) - qx;
                return d * d / qx;
            },
            -40.0, 40.0, 80000);
        CHECK(close_rel(chi2_pair(p, q), oracle, 1e-6));
    }
    for (int rep = 0; rep < 50; ++rep) {
        const Member p = testutil::random_member(ModelKind::poisson, rng);
        const Member q = testutil::random_member(ModelKind::poisson, rng);
        // The p^2/q series concentrates around rate1^2/rate2, far beyond the
        // support of either pmf; sum it in log space with a matching cutoff.
        const double star = p.rate() * p.rate() / q.rate();
        const long hi = static_cast<long>(std::ceil(star + 20.0 * std::sqrt(star + 1.0) + 80.0));
        const double oracle = testutil::series(
            [&](long x) {
                const double lp = log_density(p, double(x));
                const double lq = log_density(q, double(x));
                return std::exp(2.0 * lp - lq) - 2.0 * std::exp(lp) + std::exp(lq);
            },
            hi);
        CHECK(close_rel(chi2_pair(p, q), oracle, 1e-6));
    }
    for (int rep = 0; rep < 50; ++rep) {
        // Keep the log-sigma gap below log(sqrt 2) so the integral converges.
        const double ls = 0.6 * rng.uniform01() - 0.3;
        const double gap = 0.3 * rng.uniform01();
        const Member p = Member::gaussian_scale(std::exp(ls));
        const Member q = Member::gaussian_scale(std::exp(ls + gap));
        const double oracle = testutil::simpson(
            [&](double x) {
                const double qx = density(q, x);
                if (qx == 0.0) return 0.0;
                const double d = density(p, x) - qx;
                return d * d / qx;
            },
            -50.0, 50.0, 80000);
        CHECK(close_rel(chi2_pair(p, q), oracle, 1e-6));
    }
    for (int rep = 0; rep < 50; ++rep) {
        const Member p = testutil::random_member(ModelKind::discrete, rng);
        const Member q = testutil::random_member(ModelKind::discrete, rng);
        double oracle = 0.0;
        for (std::size_t c = 0; c < p.pmf().size(); ++c) {
            const double d = p.pmf()[c] - q.pmf()[c];
            if (q.pmf()[c] > 0.0) oracle += d * d / q.pmf()[c];
        }
        CHECK(close_rel(chi2_pair(p, q), oracle, 1e-6));
    }
}

TEST_CASE("sampling determinism and degenerate cases") {
    {
        RngStream rng(7, 3);
        for (int i = 0; i < 100; ++i) CHECK(sample(Member::poisson(0.0), rng) == 0.0);
    }
    {
        RngStream a(99, 1), b(99, 1);
        const Member members[] = {Member::gaussian_loc(0.5), Member::poisson(3.0),
                                  Member::discrete({0.2, 0.3, 0.5}),
                                  Member::gaussian_scale(1.5)};
        for (int i = 0; i < 200; ++i) {
            const Member& m = members[i % 4];
            CHECK(sample(m, a) == sample(m, b));
        }
    }
}

TEST_CASE("sample mean concentrates") {
    RngStream rng(2024, 0);
    double acc = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) acc += sample(Member::gaussian_loc(3.0), rng);
    CHECK(close_abs(acc / n, 3.0, 0.02));
}

TEST_CASE("discrete sampler matches its pmf") {
    RngStream rng(31, 0);
    const Member m = Member::discrete({0.2, 0.3, 0.5});
    int counts[3] = {0, 0, 0};
    const int n = 100000;
    for (int i = 0; i < n; ++i) counts[static_cast<int>(sample(m, rng))]++;
    CHECK(close_abs(counts[0] / double(n), 0.2, 0.01));
    CHECK(close_abs(counts[1] / double(n), 0.3, 0.01));
    CHECK(close_abs(counts[2] / double(n), 0.5, 0.01));
}

TEST_CASE("poisson sampler matches moments across both regimes") {
    RngStream rng(37, 0);
    for (double rate : {2.5, 80.0}) {
        double acc = 0.0, acc2 = 0.0;
        const int n = 60000;
        for (int i = 0; i < n; ++i) {
            const double x = sample(Member::poisson(rate), rng);
            acc += x;
            acc2 += x * x;
        }
        const double mean = acc / n;
        const double var = acc2 / n - mean * mean;
        CHECK(close_abs(mean, rate, 5.0 * std::sqrt(rate / n)));
        CHECK(close_rel(var, rate, 0.05));
    }
}

TEST_CASE("synthetic discrete families have the advertised shape") {
    const auto atoms = shared_atom_members(4, 0.2);
    REQUIRE(atoms.size() == 3);
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        CHECK(atoms[i].pmf()[0] == 0.2);
        CHECK(atoms[i].pmf()[i + 1] == 0.8);
    }
    const auto swap = swap_pair_members(0.25);
    REQUIRE(swap.size() == 2);
    CHECK(swap[0].pmf()[0] == 0.75);
    CHECK(swap[1].pmf()[0] == 0.25);
    const auto grid = simplex_grid_members(4, 0.1, 12, 5);
    REQUIRE(grid.size() == 12);
    for (const Member& m : grid) {
        double total = 0.0;
        for (double p : m.pmf()) {
            CHECK(p >= 0.1 / 4.0);
            total += p;
        }
        CHECK(close_abs(total, 1.0, 1e-12));
    }
}
