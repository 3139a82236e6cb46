#include "permix/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "permix/spectrum.hpp"

namespace permix {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool ordered_kind(ModelKind kind) {
    return kind == ModelKind::gaussian_loc || kind == ModelKind::poisson ||
           kind == ModelKind::gaussian_scale;
}

// Natural 1D coordinate along which renyi_half is monotone in the gap.
double order_param(const Member& m) {
    switch (m.kind()) {
    case ModelKind::gaussian_loc: return m.mean();
    case ModelKind::poisson: return std::sqrt(m.rate());
    case ModelKind::gaussian_scale: return std::log(m.sigma());
    default:
        throw validation_error(
            "dp1d needs a 1D-ordered family (GaussianLoc, Poisson, GaussianScale)");
    }
}

std::vector<double> pairwise_divergences(const std::vector<Member>& members) {
    const std::size_t n = members.size();
    std::vector<double> d(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = renyi_half(members[i], members[j]);
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    return d;
}

Partition singleton_partition(std::size_t n) {
    Partition p;
    p.k = n;
    p.diameter = 0.0;
    p.block_of.resize(n);
    std::iota(p.block_of.begin(), p.block_of.end(), 0);
    return p;
}

double partition_diameter_value(const std::vector<double>& d, std::size_t n,
                                const std::vector<std::size_t>& block_of) {
    double dia = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (block_of[i] == block_of[j]) dia = std::max(dia, d[i * n + j]);
    return dia;
}

Partition dp1d_partition(const std::vector<Member>& members, std::size_t k) {
    const std::size_t n = members.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return order_param(members[x]) < order_param(members[y]);
    });
    const std::vector<double> d = pairwise_divergences(members);

    // Monotonicity along the sorted parameter means a contiguous block's
    // diameter is its endpoint divergence, so a greedy scan checks
    // feasibility of any threshold t.
    auto blocks_needed = [&](double t) {
        std::size_t blocks = 0;
        std::size_t i = 0;
        while (i < n) {
            ++blocks;
            std::size_t j = i;
            while (j + 1 < n && d[order[i] * n + order[j + 1]] <= t) ++j;
            i = j + 1;
        }
        return blocks;
    };

    std::vector<double> candidates;
    candidates.push_back(0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) candidates.push_back(d[i * n + j]);
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()),
                     candidates.end());

    std::size_t lo = 0, hi = candidates.size() - 1;
    while (lo < hi) {
        const std::size_t mid = (lo + hi) / 2;
        if (blocks_needed(candidates[mid]) <= k)
            hi = mid;
        else
            lo = mid + 1;
    }
    const double t = candidates[lo];

    Partition p;
    p.block_of.resize(n);
    std::size_t block = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        p.block_of[order[i]] = block;
        while (j + 1 < n && d[order[i] * n + order[j + 1]] <= t) {
            ++j;
            p.block_of[order[j]] = block;
        }
        ++block;
        i = j + 1;
    }
    p.k = block;
    p.diameter = partition_diameter_value(d, n, p.block_of);
    return p;
}

struct BrutePartitionSearch {
    const std::vector<double>& d;
    std::size_t n;
    std::size_t k;
    std::vector<std::size_t> assign;
    std::vector<std::size_t> best_assign;
    double best = kInf;

    void run(std::size_t i, std::size_t used, double cur_max) {
        if (cur_max >= best) return;
        if (i == n) {
            best = cur_max;
            best_assign = assign;
            return;
        }
        const std::size_t open_limit = std::min(used + 1, k);
        for (std::size_t b = 0; b < open_limit; ++b) {
            double m = cur_max;
            for (std::size_t j = 0; j < i && m < best; ++j)
                if (assign[j] == b) m = std::max(m, d[i * n + j]);
            assign[i] = b;
            run(i + 1, std::max(used, b + 1), m);
        }
    }
};

Partition brute_partition(const std::vector<Member>& members, std::size_t k) {
    const std::size_t n = members.size();
    if (n > 12) throw capacity_error("brute partition enumeration limited to n <= 12");
    const std::vector<double> d = pairwise_divergences(members);
    BrutePartitionSearch search{d, n, k, std::vector<std::size_t>(n), {}, kInf};
    search.run(0, 0, 0.0);
    Partition p;
    p.block_of = search.best_assign;
    p.k = *std::max_element(p.block_of.begin(), p.block_of.end()) + 1;
    p.diameter = partition_diameter_value(d, n, p.block_of);
    return p;
}

} // namespace

Partition partition_diameter(const std::vector<Member>& members, std::size_t k,
                             PartitionMethod method) {
    if (members.empty()) throw validation_error("partition_diameter needs members");
    if (k < 1) throw validation_error("partition_diameter needs k >= 1");
    const std::size_t n = members.size();
    if (k >= n) return singleton_partition(n);
    if (method == PartitionMethod::dp1d) {
        if (!ordered_kind(members.front().kind()))
            throw validation_error(
                "dp1d needs a 1D-ordered family (GaussianLoc, Poisson, GaussianScale)");
        return dp1d_partition(members, k);
    }
    return brute_partition(members, k);
}

namespace {

struct ExpansionSearch {
    std::size_t n;
    std::size_t k;
    const std::vector<double>& w; // off-diagonal weights, w[u*n+v]
    const std::vector<double>& deg;
    std::vector<int> label;       // 0 = unused, 1..k = sets
    std::vector<double> degsum;
    std::vector<double> internal;
    std::vector<std::size_t> count;
    std::vector<int> best_label;
    double best = kInf;

    double max_conductance() const {
        double worst = 0.0;
        for (std::size_t s = 1; s <= k; ++s) {
            double phi = 0.0;
            if (degsum[s] > 0.0) phi = (degsum[s] - 2.0 * internal[s]) / degsum[s];
            worst = std::max(worst, phi);
        }
        return worst;
    }

    void run(std::size_t v, std::size_t used) {
        if (k - used > n - v) return; // not enough vertices left to fill all sets
        if (v == n) {
            const double rho = max_conductance();
            if (rho < best) {
                best = rho;
                best_label = label;
            }
            return;
        }
        // Interchangeable set labels: a new set may only be the next unused one.
        const std::size_t label_limit = std::min(used + 1, k);
        for (std::size_t s = 0; s <= label_limit; ++s) {
            label[v] = static_cast<int>(s);
            if (s == 0) {
                run(v + 1, used);
                continue;
            }
            double cross = 0.0;
            for (std::size_t u = 0; u < v; ++u)
                if (label[u] == static_cast<int>(s)) cross += w[v * n + u];
            degsum[s] += deg[v];
            internal[s] += cross;
            count[s] += 1;
            run(v + 1, std::max(used, s));
            degsum[s] -= deg[v];
            internal[s] -= cross;
            count[s] -= 1;
        }
        label[v] = 0;
    }
};

} // namespace

ExpansionResult kway_expansion(const OverlapMatrix& a, std::size_t k) {
    const std::size_t n = a.size();
    if (k < 1) throw validation_error("kway_expansion needs k >= 1");
    if (k > n) throw validation_error("kway_expansion needs k <= n");
    if (std::pow(static_cast<double>(k + 1), static_cast<double>(n)) > 2e8)
        throw capacity_error("kway_expansion assignment budget (k+1)^n exceeds 2e8");

    std::vector<double> w(n * n, 0.0);
    std::vector<double> deg(n, 0.0);
    for (std::size_t u = 0; u < n; ++u)
        for (std::size_t v = 0; v < n; ++v) {
            if (u == v) continue;
            w[u * n + v] = a.entries(u, v);
            deg[u] += a.entries(u, v);
        }

    ExpansionSearch search{n,
                           k,
                           w,
                           deg,
                           std::vector<int>(n, 0),
                           std::vector<double>(k + 1, 0.0),
                           std::vector<double>(k + 1, 0.0),
                           std::vector<std::size_t>(k + 1, 0),
                           {},
                           kInf};
    search.run(0, 0);

    ExpansionResult out;
    out.rho = search.best;
    out.witness_sets.assign(k, {});
    for (std::size_t v = 0; v < n; ++v) {
        const int s = search.best_label[v];
        if (s > 0) out.witness_sets[static_cast<std::size_t>(s - 1)].push_back(v);
    }
    return out;
}

InequalityAudit inequality_audit(const OverlapMatrix& a,
                                 const std::vector<Member>& members, std::size_t k) {
    const std::size_t n = a.size();
    if (members.size() != n)
        throw validation_error("inequality_audit needs one member per matrix row");
    if (k < 1 || k > n) throw validation_error("inequality_audit needs 1 <= k <= n");

    const SpectrumReport spec = eigen_sym(a.entries);
    InequalityAudit out;
    out.lambda_k = spec.eigenvalues[k - 1];
    out.cheeger_lhs = 0.5 * (1.0 - out.lambda_k);
    out.rho_k = kway_expansion(a, k).rho;
    out.cheeger_slack = out.rho_k - out.cheeger_lhs;
    out.cheeger_pass = out.cheeger_slack >= -1e-12;

    const PartitionMethod method = ordered_kind(members.front().kind())
                                       ? PartitionMethod::dp1d
                                       : PartitionMethod::brute;
    const double dk = partition_diameter(members, k, method).diameter;

    if (k == 1 && n >= 5 && n <= 8) {
        const double rho5 = kway_expansion(a, 5).rho;
        const double lhs = 0.25 * std::exp(-dk);
        out.comb_lhs = lhs;
        out.comb_rho5 = rho5;
        out.comb_slack = rho5 - lhs;
        out.comb_pass = rho5 >= lhs - 1e-12;
    }

    if (10 * k <= n) {
        const double l10k = spec.eigenvalues[10 * k - 1];
        out.reported_ratio = (1.0 - l10k) * std::log(5.0 * static_cast<double>(k)) *
                             std::exp(2.0 * dk);
    } else {
        out.reported_ratio = std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

namespace {

void mixture_domain(const std::vector<Member>& members, const QuadConfig& cfg,
                    double& lo, double& hi) {
    const ModelKind kind = members.front().kind();
    if (kind == ModelKind::gaussian_scale) {
        double sd_max = 0.0;
        for (const Member& m : members) sd_max = std::max(sd_max, m.sigma());
        lo = -cfg.domain_pad * sd_max;
        hi = cfg.domain_pad * sd_max;
        return;
    }
    double pmin = kInf, pmax = -kInf;
    for (const Member& m : members) {
        const double mu = (kind == ModelKind::gaussian_loc) ? m.mean() : m.mean_vec()[0];
        pmin = std::min(pmin, mu);
        pmax = std::max(pmax, mu);
    }
    lo = pmin - cfg.domain_pad;
    hi = pmax + cfg.domain_pad;
}

// chi^2(P_i || sum_j rho_j P_j) for every i, plus the prior-weighted total.
struct MixtureEval {
    std::vector<double> chi;
    double value = 0.0;
};

MixtureEval eval_mixture_information(const std::vector<Member>& grid,
                                     const std::vector<double>& rho,
                                     const QuadConfig& cfg) {
    const std::size_t n = grid.size();
    const ModelKind kind = grid.front().kind();
    std::vector<double> log_rho(n);
    for (std::size_t j = 0; j < n; ++j) log_rho[j] = std::log(rho[j]);

    MixtureEval out;
    out.chi.assign(n, 0.0);

    auto mix_log = [&](double x, std::vector<double>& lp) {
        double m = -kInf;
        for (std::size_t j = 0; j < n; ++j) {
            lp[j] = log_density(grid[j], x) + log_rho[j];
            m = std::max(m, lp[j]);
        }
        if (!std::isfinite(m)) return m;
        double s = 0.0;
        for (double v : lp) s += std::exp(v - m);
        return m + std::log(s);
    };

    if (kind == ModelKind::discrete) {
        const std::size_t support = grid.front().pmf().size();
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t c = 0; c < support; ++c) {
                double mix = 0.0;
                for (std::size_t j = 0; j < n; ++j) mix += rho[j] * grid[j].pmf()[c];
                const double p = grid[i].pmf()[c];
                if (mix == 0.0) {
                    if (p > 0.0)
                        throw numerical_error("mixture lost support of a grid member");
                    continue;
                }
                acc += p * p / mix;
            }
            out.chi[i] = acc - 1.0;
        }
    } else if (kind == ModelKind::poisson) {
        double rate_max = 0.0;
        for (const Member& m : grid) rate_max = std::max(rate_max, m.rate());
        const std::size_t x_max = cfg.poisson_tail.cutoff(rate_max);
        std::vector<double> lp(n);
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t x = 0; x <= x_max; ++x) {
                const double lm = mix_log(static_cast<double>(x), lp);
                if (!std::isfinite(lm)) continue;
                acc += std::exp(2.0 * log_density(grid[i], static_cast<double>(x)) - lm);
            }
            out.chi[i] = acc - 1.0;
        }
    } else {
        double lo = 0.0, hi = 0.0;
        mixture_domain(grid, cfg, lo, hi);
        std::vector<double> lp(n);
        for (std::size_t i = 0; i < n; ++i) {
            auto f = [&](double x) {
                const double lm = mix_log(x, lp);
                if (!std::isfinite(lm)) return 0.0;
                return std::exp(2.0 * log_density(grid[i], x) - lm);
            };
            out.chi[i] = integrate(f, lo, hi, cfg) - 1.0;
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(out.chi[i]))
            throw numerical_error("chi^2 against the mixture is not finite");
        out.value += rho[i] * out.chi[i];
    }
    return out;
}

} // namespace

CapacityResult capacity_lower(const std::vector<Member>& grid, int iters, double tol,
                              const QuadConfig& cfg) {
    cfg.validate();
    if (grid.empty()) throw validation_error("capacity_lower needs a nonempty grid");
    if (iters < 0) throw validation_error("capacity_lower needs iters >= 0");
    if (!(tol >= 0.0)) throw validation_error("capacity_lower needs tol >= 0");
    const ModelKind kind = grid.front().kind();
    for (const Member& m : grid)
        if (m.kind() != kind)
            throw validation_error("capacity grid must use one model kind");

    const std::size_t n = grid.size();
    CapacityResult out;
    out.prior.weights.assign(n, 1.0 / static_cast<double>(n));
    if (n == 1) return out;

    std::vector<double> rho = out.prior.weights;
    MixtureEval cur = eval_mixture_information(grid, rho, cfg);
    out.value = cur.value;
    out.prior.weights = rho;

    double eta = 1.0;
    for (int it = 0; it < iters; ++it) {
        const double gmax = *std::max_element(cur.chi.begin(), cur.chi.end());
        std::vector<double> next(n);
        double norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            next[i] = rho[i] * std::exp(eta * (cur.chi[i] - gmax));
            norm += next[i];
        }
        for (double& v : next) v /= norm;

        const MixtureEval trial = eval_mixture_information(grid, next, cfg);
        ++out.iterations_used;
        if (trial.value > out.value) {
            const double gain = trial.value - out.value;
            rho = std::move(next);
            cur = trial;
            out.value = trial.value;
            out.prior.weights = rho;
            if (gain < tol) break;
        } else {
            eta *= 0.5;
            if (eta < 1e-6) break;
        }
    }
    return out;
}

double capacity_upper_ratio(const std::vector<Member>& members, const Member& reference) {
    if (members.empty()) throw validation_error("capacity_upper_ratio needs members");
    if (reference.kind() == ModelKind::discrete) {
        const std::vector<double>& q = reference.pmf();
        double sup = 0.0;
        for (const Member& m : members) {
            if (m.kind() != ModelKind::discrete)
                throw validation_error("discrete reference needs discrete members");
            const std::vector<double>& p = m.pmf();
            if (p.size() != q.size())
                throw validation_error("Discrete members must share a support size");
            for (std::size_t c = 0; c < q.size(); ++c) {
                if (p[c] == 0.0) continue;
                if (q[c] == 0.0) return kInf;
                sup = std::max(sup, p[c] / q[c]);
            }
        }
        return sup - 1.0;
    }
    if (reference.kind() == ModelKind::gaussian_scale) {
        const double tau = reference.sigma();
        if (!(tau > 1.0))
            throw validation_error(
                "GaussianScale reference needs sigma > 1 for a bounded ratio");
        double sup = 0.0;
        for (const Member& m : members) {
            if (m.kind() != ModelKind::gaussian_loc)
                throw validation_error("GaussianScale reference needs GaussianLoc members");
            const double th = m.mean();
            sup = std::max(sup, tau * std::exp(th * th / (2.0 * (tau * tau - 1.0))));
        }
        return sup - 1.0;
    }
    throw validation_error("unsupported reference kind for capacity_upper_ratio");
}

double capacity_upper_ratio_discrete_simplex(std::size_t m, double eps) {
    if (m < 1) throw validation_error("simplex family needs m >= 1 categories");
    if (!(eps > 0.0 && eps <= 1.0))
        throw validation_error("simplex family needs eps in (0, 1]");
    // The pmf concentrated on the pinned category satisfies the constraint, so
    // the ratio supremum against the uniform reference is m regardless of eps.
    return static_cast<double>(m) - 1.0;
}

double capacity_upper_ratio_gaussian_family(double mu, const std::vector<double>& tau_grid) {
    if (!(mu >= 0.0)) throw validation_error("gaussian family needs mu >= 0");
    if (tau_grid.empty()) throw validation_error("tau grid must be nonempty");
    double best = kInf;
    for (double tau : tau_grid) {
        if (!(tau > 1.0))
            throw validation_error("every tau in the grid must exceed 1");
        best = std::min(best, tau * std::exp(mu * mu / (2.0 * (tau * tau - 1.0))) - 1.0);
    }
    return best;
}

double bound_dim_independent(const std::vector<double>& dk_schedule, double cap) {
    if (!(cap >= 0.0)) throw validation_error("cap must be >= 0");
    for (std::size_t i = 0; i < dk_schedule.size(); ++i) {
        if (!(dk_schedule[i] >= 0.0))
            throw validation_error("diameter schedule entries must be >= 0");
        if (i > 0 && dk_schedule[i] > dk_schedule[i - 1] + 1e-12)
            throw validation_error("diameter schedule must be nonincreasing");
    }
    const std::size_t terms = static_cast<std::size_t>(std::floor(cap)) + 1;
    if (dk_schedule.size() < terms)
        throw validation_error("diameter schedule shorter than floor(cap) + 1");
    double acc = 0.0;
    for (std::size_t i = 0; i < terms; ++i) acc += dk_schedule[i];
    // log_plus(x) = log(max(x, e)), so the tail term is (cap+1) at small cap.
    const double inner = std::max(std::log(cap), std::numbers::e);
    return acc + (cap + 1.0) * std::log(inner);
}

double bound_dim_dependent(std::size_t n, const std::vector<double>& blocks) {
    if (n < 1) throw validation_error("bound_dim_dependent needs n >= 1");
    if (blocks.empty()) throw validation_error("bound_dim_dependent needs blocks");
    const std::size_t k = blocks.size();
    double acc = 0.0;
    for (double b : blocks) {
        if (std::isnan(b) || b < 0.0)
            throw validation_error("block certificates must be >= 0");
        acc += b;
    }
    if (k == 1) return acc;
    const double dk = static_cast<double>(k);
    const double dn = static_cast<double>(n);
    return 0.5 * (dk - 1.0) * std::log(2.0 * std::numbers::pi * (dn + dk) / dk) + acc;
}

double bound_dim_dependent_best(std::size_t n,
                                const std::vector<std::vector<double>>& block_sets) {
    if (block_sets.empty())
        throw validation_error("bound_dim_dependent_best needs candidates");
    double best = kInf;
    for (const auto& blocks : block_sets)
        best = std::min(best, bound_dim_dependent(n, blocks));
    return best;
}

} // namespace permix
