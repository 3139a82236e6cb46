#include "permix/overlap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "permix/parallel.hpp"

namespace permix {

namespace {

// log sum_k exp(lp[k]) with a running max so far tails underflow gracefully.
double log_sum_exp(const std::vector<double>& lp) {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : lp) m = std::max(m, v);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double v : lp) s += std::exp(v - m);
    return m + std::log(s);
}

// Overlap integrand at a point: p_i * p_j / sum_k p_k, evaluated in log domain.
double overlap_ratio(const std::vector<Member>& members, double x,
                     std::size_t i, std::size_t j, std::vector<double>& lp) {
    for (std::size_t k = 0; k < members.size(); ++k) lp[k] = log_density(members[k], x);
    const double lse = log_sum_exp(lp);
    if (!std::isfinite(lse)) return 0.0;
    return std::exp(lp[i] + lp[j] - lse);
}

void continuous_domain(const std::vector<Member>& members, const QuadConfig& cfg,
                       double& lo, double& hi) {
    const ModelKind kind = members.front().kind();
    if (kind == ModelKind::gaussian_scale) {
        double sd_max = 0.0;
        for (const Member& m : members) sd_max = std::max(sd_max, m.sigma());
        lo = -cfg.domain_pad * sd_max;
        hi = cfg.domain_pad * sd_max;
        return;
    }
    double pmin = std::numeric_limits<double>::infinity();
    double pmax = -pmin;
    for (const Member& m : members) {
        const double mu = (kind == ModelKind::gaussian_loc) ? m.mean() : m.mean_vec()[0];
        pmin = std::min(pmin, mu);
        pmax = std::max(pmax, mu);
    }
    lo = pmin - cfg.domain_pad;
    hi = pmax + cfg.domain_pad;
}

double discrete_entry(const std::vector<Member>& members, std::size_t i, std::size_t j) {
    const std::vector<double>& pi = members[i].pmf();
    const std::vector<double>& pj = members[j].pmf();
    double acc = 0.0;
    for (std::size_t c = 0; c < pi.size(); ++c) {
        double denom = 0.0;
        for (const Member& m : members) denom += m.pmf()[c];
        if (denom == 0.0) continue; // category unused by every member
        acc += pi[c] * pj[c] / denom;
    }
    return acc;
}

double poisson_entry(const std::vector<Member>& members, const QuadConfig& cfg,
                     std::size_t i, std::size_t j) {
    double rate_max = 0.0;
    for (const Member& m : members) rate_max = std::max(rate_max, m.rate());
    const std::size_t x_max = cfg.poisson_tail.cutoff(rate_max);
    std::vector<double> lp(members.size());
    double acc = 0.0;
    for (std::size_t x = 0; x <= x_max; ++x)
        acc += overlap_ratio(members, static_cast<double>(x), i, j, lp);
    return acc;
}

double continuous_entry(const std::vector<Member>& members, const QuadConfig& cfg,
                        std::size_t i, std::size_t j) {
    double lo = 0.0, hi = 0.0;
    continuous_domain(members, cfg, lo, hi);
    std::vector<double> lp(members.size());
    auto f = [&](double x) { return overlap_ratio(members, x, i, j, lp); };
    return integrate(f, lo, hi, cfg);
}

void finalize(OverlapMatrix& out) {
    out.entries.symmetrize();
    const std::size_t n = out.entries.size();
    double residual = 0.0;
    bool any_zero = false;
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (out.entries(i, j) < 0.0) out.entries(i, j) = 0.0; // quadrature noise
            if (out.entries(i, j) == 0.0) any_zero = true;
            row += out.entries(i, j);
        }
        residual = std::max(residual, std::abs(row - 1.0));
    }
    out.row_sum_residual = residual;
    out.has_zero_entries = any_zero;
}

} // namespace

OverlapMatrix build_overlap(const std::vector<Member>& members, const QuadConfig& cfg,
                            unsigned n_threads) {
    cfg.validate();
    if (members.empty()) throw validation_error("build_overlap requires at least one member");
    const ModelKind kind = members.front().kind();
    for (const Member& m : members)
        if (m.kind() != kind)
            throw validation_error("build_overlap requires members of one model kind");
    if (kind == ModelKind::discrete) {
        const std::size_t support = members.front().pmf().size();
        for (const Member& m : members)
            if (m.pmf().size() != support)
                throw validation_error("Discrete members must share a support size");
    }
    if (kind == ModelKind::gaussian_loc_multi) {
        for (const Member& m : members)
            if (m.mean_vec().size() != 1)
                throw validation_error(
                    "overlap matrices for GaussianLocMulti need dimension 1");
    }

    const std::size_t n = members.size();
    OverlapMatrix out;
    out.members = members;
    out.entries = SquareMatrix(n);
    if (n == 1) {
        out.entries(0, 0) = 1.0;
        finalize(out);
        return out;
    }

    // Upper triangle as a flat worklist; every entry is an independent
    // quadrature, so the parallel schedule cannot affect the values.
    std::vector<std::pair<std::size_t, std::size_t>> work;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) work.emplace_back(i, j);
    std::vector<double> values(work.size());
    parallel_for(work.size(), n_threads, [&](std::size_t w) {
        const auto [i, j] = work[w];
        double v = 0.0;
        switch (kind) {
        case ModelKind::discrete: v = discrete_entry(members, i, j); break;
        case ModelKind::poisson: v = poisson_entry(members, cfg, i, j); break;
        default: v = continuous_entry(members, cfg, i, j); break;
        }
        values[w] = v;
    });
    for (std::size_t w = 0; w < work.size(); ++w) {
        const auto [i, j] = work[w];
        out.entries(i, j) = values[w];
        out.entries(j, i) = values[w];
    }

    finalize(out);
    if (out.row_sum_residual > 1e-6)
        throw numerical_error("overlap quadrature failure: row sum residual " +
                              std::to_string(out.row_sum_residual));
    return out;
}

OverlapMatrix overlap_from_entries(SquareMatrix entries) {
    OverlapMatrix out;
    out.entries = std::move(entries);
    finalize(out);
    return out;
}

namespace {

double sinkhorn_residual(const SquareMatrix& a) {
    const std::size_t n = a.size();
    double res = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0, col = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            row += a(i, j);
            col += a(j, i);
        }
        res = std::max({res, std::abs(row - 1.0), std::abs(col - 1.0)});
    }
    return res;
}

void sinkhorn_iterate(SquareMatrix& a, double tol, int max_iter) {
    const std::size_t n = a.size();
    for (int iter = 0; iter < max_iter; ++iter) {
        if (sinkhorn_residual(a) < tol) return;
        for (std::size_t i = 0; i < n; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < n; ++j) row += a(i, j);
            for (std::size_t j = 0; j < n; ++j) a(i, j) /= row;
        }
        for (std::size_t j = 0; j < n; ++j) {
            double col = 0.0;
            for (std::size_t i = 0; i < n; ++i) col += a(i, j);
            for (std::size_t i = 0; i < n; ++i) a(i, j) /= col;
        }
    }
    if (sinkhorn_residual(a) >= tol)
        throw numerical_error("sinkhorn projection did not converge; residual " +
                              std::to_string(sinkhorn_residual(a)));
}

} // namespace

SquareMatrix sinkhorn_project(const SquareMatrix& m, double tol, int max_iter,
                              bool symmetric_output) {
    if (!(tol > 0.0)) throw validation_error("sinkhorn tol must be > 0");
    if (max_iter < 1) throw validation_error("sinkhorn max_iter must be >= 1");
    const std::size_t n = m.size();
    if (n == 0) throw validation_error("sinkhorn input must be nonempty");
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (!(m(i, j) > 0.0))
                throw validation_error("sinkhorn input entries must be > 0");

    SquareMatrix a = m;
    // Iterate to a quarter of the requested tol so the final symmetrization
    // cannot push residuals back over it.
    sinkhorn_iterate(a, 0.25 * tol, max_iter);
    if (symmetric_output) {
        a.symmetrize();
        sinkhorn_iterate(a, 0.25 * tol, max_iter);
        a.symmetrize();
    }
    return a;
}

double trace_capacity_lb(const OverlapMatrix& a) {
    double tr = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) tr += a.entries(i, i);
    return tr - 1.0;
}

} // namespace permix
