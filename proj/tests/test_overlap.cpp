#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "permix/overlap.hpp"
#include "permix/permanent.hpp"
#include "permix/spectrum.hpp"
#include "test_util.hpp"

using namespace permix;
using testutil::close_abs;
using testutil::close_rel;

namespace {

void check_overlap_invariants(const OverlapMatrix& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) {
        double rs = 0.0, cs = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            CHECK(a.entries(i, j) >= 0.0);
            CHECK(a.entries(i, j) == a.entries(j, i));
            rs += a.entries(i, j);
            cs += a.entries(j, i);
        }
        CHECK(close_abs(rs, 1.0, 1e-6));
        CHECK(close_abs(cs, 1.0, 1e-6));
    }
    const SpectrumReport spec = eigen_sym(a.entries);
    CHECK(spec.eigenvalues.back() >= -1e-9);
    CHECK(close_abs(spec.eigenvalues.front(), 1.0, 1e-9));
}

} // namespace

TEST_CASE("shared-atom family reproduces the analytic overlap") {
    const OverlapMatrix a = build_overlap(shared_atom_members(3, 0.2));
    REQUIRE(a.size() == 2);
    CHECK(close_abs(a.entries(0, 0), 0.9, 1e-12));
    CHECK(close_abs(a.entries(0, 1), 0.1, 1e-12));
    CHECK(close_abs(a.entries(1, 0), 0.1, 1e-12));
    CHECK(close_abs(a.entries(1, 1), 0.9, 1e-12));
}

TEST_CASE("identical members give the flat matrix") {
    for (std::size_t n : {std::size_t{1}, std::size_t{3}, std::size_t{5}}) {
        const std::vector<Member> members(n, Member::poisson(2.0));
        const OverlapMatrix a = build_overlap(members);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                CHECK(close_abs(a.entries(i, j), 1.0 / double(n), 1e-10));
    }
    const OverlapMatrix g =
        build_overlap({Member::gaussian_loc(-0.0), Member::gaussian_loc(0.0)});
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            CHECK(close_abs(g.entries(i, j), 0.5, 1e-10));
}

TEST_CASE("swap pair reproduces the analytic overlap") {
    const double eps = 0.25;
    const OverlapMatrix a = build_overlap(swap_pair_members(eps));
    const double off = 2.0 * eps * (1.0 - eps);
    const double diag = off + (1.0 - 2.0 * eps) * (1.0 - 2.0 * eps);
    CHECK(close_abs(a.entries(0, 0), diag, 1e-14));
    CHECK(close_abs(a.entries(0, 1), off, 1e-14));
    CHECK(close_abs(a.entries(0, 0), 0.625, 1e-14));
    CHECK(close_abs(a.entries(0, 1), 0.375, 1e-14));
}

TEST_CASE("single member degenerates to the 1x1 identity") {
    const OverlapMatrix a = build_overlap({Member::gaussian_scale(2.0)});
    REQUIRE(a.size() == 1);
    CHECK(a.entries(0, 0) == 1.0);
}

TEST_CASE("built matrices satisfy the structural invariants") {
    RngStream rng(101, 0);
    const ModelKind kinds[] = {ModelKind::gaussian_loc, ModelKind::poisson,
                               ModelKind::gaussian_scale, ModelKind::discrete};
    for (ModelKind kind : kinds) {
        for (int rep = 0; rep < 5; ++rep) {
            const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform_int(5));
            const auto members = testutil::random_family(kind, n, rng);
            check_overlap_invariants(build_overlap(members));
        }
    }
}

TEST_CASE("halving the quadrature tolerance barely moves entries") {
    const std::vector<Member> members = {
        Member::gaussian_loc(-1.2), Member::gaussian_loc(0.3),
        Member::gaussian_loc(1.7), Member::gaussian_loc(2.4)};
    QuadConfig coarse;
    coarse.abs_tol = 1e-9;
    QuadConfig fine;
    fine.abs_tol = 5e-10;
    const OverlapMatrix a = build_overlap(members, coarse);
    const OverlapMatrix b = build_overlap(members, fine);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a.size(); ++j)
            CHECK(close_abs(a.entries(i, j), b.entries(i, j), coarse.abs_tol));
}

TEST_CASE("permuting members permutes the matrix") {
    const std::vector<Member> members = {Member::poisson(0.5), Member::poisson(2.0),
                                         Member::poisson(3.5), Member::poisson(6.0)};
    std::vector<Member> shuffled = {members[2], members[0], members[3], members[1]};
    const std::size_t perm[] = {2, 0, 3, 1}; // shuffled[i] = members[perm[i]]
    const OverlapMatrix a = build_overlap(members);
    const OverlapMatrix b = build_overlap(shuffled);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(close_abs(b.entries(i, j), a.entries(perm[i], perm[j]), 1e-12));
}

TEST_CASE("threaded builds match serial builds exactly") {
    RngStream rng(103, 0);
    const auto members = testutil::random_family(ModelKind::gaussian_loc, 6, rng);
    const OverlapMatrix serial = build_overlap(members, {}, 1);
    const OverlapMatrix threaded = build_overlap(members, {}, 8);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j)
            CHECK(serial.entries(i, j) == threaded.entries(i, j));
}

TEST_CASE("mixed kinds and mismatched supports are rejected") {
    CHECK_THROWS_AS(build_overlap({Member::gaussian_loc(0.0), Member::poisson(1.0)}),
                    validation_error);
    CHECK_THROWS_AS(build_overlap({Member::discrete({0.5, 0.5}),
                                   Member::discrete({0.2, 0.3, 0.5})}),
                    validation_error);
    CHECK_THROWS_AS(build_overlap({}), validation_error);
}

TEST_CASE("disjoint discrete supports are flagged, not rejected") {
    const OverlapMatrix a = build_overlap(
        {Member::discrete({1.0, 0.0}), Member::discrete({0.0, 1.0})});
    CHECK(a.has_zero_entries);
    CHECK(close_abs(a.entries(0, 0), 1.0, 1e-14));
    CHECK(a.entries(0, 1) == 0.0);
}

TEST_CASE("sinkhorn fixes points and projects random matrices") {
    {
        SquareMatrix flat = SquareMatrix::constant(3, 1.0 / 3.0);
        const SquareMatrix out = sinkhorn_project(flat, 1e-12, 1000);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j)
                CHECK(close_abs(out(i, j), 1.0 / 3.0, 1e-12));
    }
    {
        const SquareMatrix ones = SquareMatrix::constant(3, 1.0);
        const SquareMatrix out = sinkhorn_project(ones, 1e-12, 1000);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j)
                CHECK(close_abs(out(i, j), 1.0 / 3.0, 1e-12));
    }
    {
        RngStream rng(7, 0);
        SquareMatrix m(5);
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 5; ++j) m(i, j) = 0.1 + rng.uniform01();
        const SquareMatrix out = sinkhorn_project(m, 1e-12, 100000);
        for (std::size_t i = 0; i < 5; ++i) {
            double rs = 0.0, cs = 0.0;
            for (std::size_t j = 0; j < 5; ++j) {
                rs += out(i, j);
                cs += out(j, i);
                CHECK(out(i, j) == out(j, i));
            }
            CHECK(close_abs(rs, 1.0, 1e-12));
            CHECK(close_abs(cs, 1.0, 1e-12));
        }
    }
}

TEST_CASE("sinkhorn rejects nonpositive input and reports nonconvergence") {
    SquareMatrix z(2);
    z(0, 0) = 1.0;
    z(0, 1) = 0.0;
    z(1, 0) = 1.0;
    z(1, 1) = 1.0;
    CHECK_THROWS_AS(sinkhorn_project(z, 1e-12, 1000), validation_error);
    RngStream rng(9, 0);
    SquareMatrix m(4);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) m(i, j) = 0.1 + rng.uniform01();
    CHECK_THROWS_AS(sinkhorn_project(m, 1e-14, 1), numerical_error);
}

TEST_CASE("trace lower bound matches the analytic examples") {
    {
        const std::vector<Member> members(4, Member::gaussian_loc(1.0));
        CHECK(close_abs(trace_capacity_lb(build_overlap(members)), 0.0, 1e-9));
    }
    {
        const OverlapMatrix a = build_overlap(shared_atom_members(3, 0.2));
        CHECK(close_abs(trace_capacity_lb(a), 0.8, 1e-12));
    }
    for (double mu : {0.3, 1.0, 2.5}) {
        const OverlapMatrix a =
            build_overlap({Member::gaussian_loc(-mu), Member::gaussian_loc(mu)});
        const double lb = trace_capacity_lb(a);
        CHECK(close_abs(lb, 2.0 * a.entries(0, 0) - 1.0, 1e-12));
        CHECK(close_abs(lb, mixing_scalar(MixingModel::gaussian, mu), 1e-9));
    }
}

TEST_CASE("overlap entries serialize at full precision") {
    // 17 significant digits round-trip doubles exactly.
    const OverlapMatrix a = build_overlap(
        {Member::gaussian_loc(0.0), Member::gaussian_loc(1.0), Member::gaussian_loc(2.5)});
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < a.size(); ++j) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.17g", a.entries(i, j));
            CHECK(std::strtod(buf, nullptr) == a.entries(i, j));
        }
    }
}
