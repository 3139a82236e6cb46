#include "permix/compound.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "permix/families.hpp"
#include "permix/parallel.hpp"
#include "permix/permanent.hpp"
#include "permix/rng.hpp"

namespace permix {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Log likelihood up to per-observation constants, which cancel in every
// posterior ratio computed here.
double log_lik(CompoundModel model, double theta, double x) {
    if (model == CompoundModel::gaussian_loc) {
        const double d = x - theta;
        return -0.5 * d * d;
    }
    if (theta == 0.0) return x == 0.0 ? 0.0 : -kInf;
    return x * std::log(theta) - theta;
}

bool all_theta_equal(const CompoundInstance& inst) {
    for (double t : inst.theta)
        if (t != inst.theta.front()) return false;
    return true;
}

void validate_observation(const CompoundInstance& inst, double x) {
    if (inst.model == CompoundModel::poisson) {
        if (!(std::isfinite(x) && x >= 0.0 && x == std::floor(x)))
            throw validation_error("Poisson observations must be counts >= 0");
    } else if (!std::isfinite(x)) {
        throw validation_error("observations must be finite");
    }
}

// Posterior mean of the first unit's parameter given only its own
// observation, under the empirical prior over theta.
double separable_first(const CompoundInstance& inst, double x0) {
    const std::size_t n = inst.size();
    if (all_theta_equal(inst)) return inst.theta.front();
    double m = -kInf;
    std::vector<double> w(n);
    for (std::size_t j = 0; j < n; ++j) {
        w[j] = log_lik(inst.model, inst.theta[j], x0);
        m = std::max(m, w[j]);
    }
    if (!std::isfinite(m))
        throw numerical_error("degenerate likelihood: all densities vanished at x");
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(w[j] - m);
        num += inst.theta[j] * e;
        den += e;
    }
    return num / den;
}

// Likelihood matrix with per-column log-domain max scaling; entries lie in
// [0, 1] with at least one 1 per column, which keeps Ryser well conditioned
// even when raw densities underflow.
SquareMatrix scaled_likelihood_matrix(const CompoundInstance& inst,
                                      const std::vector<double>& x) {
    const std::size_t n = inst.size();
    SquareMatrix m(n);
    for (std::size_t j = 0; j < n; ++j) {
        double colmax = -kInf;
        for (std::size_t k = 0; k < n; ++k) {
            const double l = log_lik(inst.model, inst.theta[k], x[j]);
            m(k, j) = l;
            colmax = std::max(colmax, l);
        }
        if (!std::isfinite(colmax))
            throw numerical_error("degenerate likelihood: a column of densities vanished");
        for (std::size_t k = 0; k < n; ++k) m(k, j) = std::exp(m(k, j) - colmax);
    }
    return m;
}

std::vector<double> posterior_first_from_matrix(const SquareMatrix& m,
                                                const LogValue& perm) {
    const std::size_t n = m.size();
    std::vector<double> pf(n, 0.0);
    std::vector<double> basis(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        basis[k] = 1.0;
        const LogValue lv = weighted_column_permanent(m, 0, basis);
        basis[k] = 0.0;
        if (!lv.zero_flag) pf[k] = std::exp(lv.log_magnitude - perm.log_magnitude);
    }
    return pf;
}

} // namespace

void validate_instance(const CompoundInstance& inst) {
    if (inst.theta.empty()) throw validation_error("compound instance needs n >= 1");
    for (double t : inst.theta) {
        if (!std::isfinite(t)) throw validation_error("theta must be finite");
        if (inst.model == CompoundModel::poisson && t < 0.0)
            throw validation_error("Poisson theta must be >= 0");
    }
}

std::vector<double> separable_oracle(const CompoundInstance& inst,
                                     const std::vector<double>& x) {
    validate_instance(inst);
    const std::size_t n = inst.size();
    if (x.size() != n) throw validation_error("observation vector length mismatch");
    for (double xi : x) validate_observation(inst, xi);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = separable_first(inst, x[i]);
    return out;
}

OracleEval pi_oracle(const CompoundInstance& inst, const std::vector<double>& x) {
    validate_instance(inst);
    const std::size_t n = inst.size();
    if (n > 25) throw capacity_error("pi_oracle limited to n <= 25");
    if (x.size() != n) throw validation_error("observation vector length mismatch");
    for (double xi : x) validate_observation(inst, xi);

    OracleEval out;
    if (all_theta_equal(inst)) {
        // Permutation symmetry makes every posterior quantity constant.
        out.sep.assign(n, inst.theta.front());
        out.pi.assign(n, inst.theta.front());
        out.posterior_first.assign(n, 1.0 / static_cast<double>(n));
        return out;
    }

    out.sep = separable_oracle(inst, x);
    const SquareMatrix m = scaled_likelihood_matrix(inst, x);
    const LogValue perm = permanent_exact(m, PermanentEngine::ryser);
    if (perm.zero_flag)
        throw numerical_error("degenerate likelihood: permanent vanished");
    out.pi.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const LogValue lv = weighted_column_permanent(m, i, inst.theta);
        out.pi[i] = lv.zero_flag
                        ? 0.0
                        : lv.sign * std::exp(lv.log_magnitude - perm.log_magnitude);
    }
    out.posterior_first = posterior_first_from_matrix(m, perm);
    return out;
}

std::vector<double> posterior_first_weights(const CompoundInstance& inst,
                                            const std::vector<double>& x) {
    validate_instance(inst);
    const std::size_t n = inst.size();
    if (n > 25) throw capacity_error("pi_oracle limited to n <= 25");
    if (x.size() != n) throw validation_error("observation vector length mismatch");
    if (all_theta_equal(inst))
        return std::vector<double>(n, 1.0 / static_cast<double>(n));
    const SquareMatrix m = scaled_likelihood_matrix(inst, x);
    const LogValue perm = permanent_exact(m, PermanentEngine::ryser);
    if (perm.zero_flag)
        throw numerical_error("degenerate likelihood: permanent vanished");
    return posterior_first_from_matrix(m, perm);
}

namespace {

double posterior_mean_first(const CompoundInstance& inst, const std::vector<double>& pf) {
    if (all_theta_equal(inst)) return inst.theta.front();
    double acc = 0.0;
    for (std::size_t k = 0; k < inst.size(); ++k) acc += pf[k] * inst.theta[k];
    return acc;
}

void draw_sample(const CompoundInstance& inst, RngStream& rng,
                 std::vector<std::size_t>& perm, std::vector<double>& x) {
    const std::size_t n = inst.size();
    perm.resize(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm);
    x.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = inst.theta[perm[i]];
        if (inst.model == CompoundModel::gaussian_loc)
            x[i] = t + rng.normal();
        else
            x[i] = static_cast<double>(rng.poisson(t));
    }
}

struct McAccumulated {
    double mean = 0.0;
    double se = 0.0;
    std::int64_t valid = 0;
};

McAccumulated reduce_mc(const std::vector<double>& values, const std::vector<char>& ok) {
    McAccumulated out;
    for (char c : ok) out.valid += c;
    if (out.valid == 0) return out;
    out.mean = pairwise_sum(values) / static_cast<double>(out.valid);
    if (out.valid > 1) {
        std::vector<double> dev(values.size(), 0.0);
        for (std::size_t s = 0; s < values.size(); ++s) {
            if (!ok[s]) continue;
            const double d = values[s] - out.mean;
            dev[s] = d * d;
        }
        const double var = pairwise_sum(dev) / static_cast<double>(out.valid - 1);
        out.se = std::sqrt(var / static_cast<double>(out.valid));
    }
    return out;
}

void enforce_abort_budget(std::int64_t aborted, std::int64_t samples) {
    if (static_cast<double>(aborted) > 1e-4 * static_cast<double>(samples))
        throw numerical_error("degenerate-likelihood aborts exceeded 0.01%: " +
                              std::to_string(aborted) + " of " +
                              std::to_string(samples));
}

} // namespace

GapEstimate regret_gap_mc(const CompoundInstance& inst, std::int64_t samples,
                          std::uint64_t seed, unsigned n_threads) {
    validate_instance(inst);
    if (samples < 1) throw validation_error("regret_gap_mc needs samples >= 1");
    const std::size_t n = inst.size();

    std::vector<double> values(static_cast<std::size_t>(samples), 0.0);
    std::vector<char> ok(static_cast<std::size_t>(samples), 1);
    parallel_for(static_cast<std::size_t>(samples), n_threads, [&](std::size_t s) {
        RngStream rng(seed, s);
        std::vector<std::size_t> perm;
        std::vector<double> x;
        draw_sample(inst, rng, perm, x);
        try {
            const double e1 = separable_first(inst, x[0]);
            const std::vector<double> pf = posterior_first_weights(inst, x);
            const double e2 = posterior_mean_first(inst, pf);
            const double d = e1 - e2;
            values[s] = static_cast<double>(n) * d * d;
        } catch (const numerical_error&) {
            ok[s] = 0;
        }
    });

    std::int64_t aborted = 0;
    for (char c : ok) aborted += 1 - c;
    enforce_abort_budget(aborted, samples);
    const McAccumulated acc = reduce_mc(values, ok);

    GapEstimate out;
    out.mean = acc.mean;
    out.std_error = acc.se;
    out.samples = acc.valid;
    out.seed = seed;
    out.aborted = aborted;
    return out;
}

OrthogonalityCheck orthogonality_check(const CompoundInstance& inst,
                                       std::int64_t samples, std::uint64_t seed,
                                       unsigned n_threads) {
    validate_instance(inst);
    if (samples < 1) throw validation_error("orthogonality_check needs samples >= 1");
    const std::size_t n = inst.size();

    const std::size_t count = static_cast<std::size_t>(samples);
    std::vector<double> lhs(count, 0.0);
    std::vector<double> rhs(count, 0.0);
    std::vector<char> ok(count, 1);
    parallel_for(count, n_threads, [&](std::size_t s) {
        RngStream rng(seed, s);
        std::vector<std::size_t> perm;
        std::vector<double> x;
        draw_sample(inst, rng, perm, x);
        try {
            const OracleEval eval = pi_oracle(inst, x);
            double sep_loss = 0.0, pi_loss = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double truth = inst.theta[perm[i]];
                sep_loss += (eval.sep[i] - truth) * (eval.sep[i] - truth);
                pi_loss += (eval.pi[i] - truth) * (eval.pi[i] - truth);
            }
            lhs[s] = sep_loss - pi_loss;
            const double e1 = eval.sep[0];
            const double e2 = posterior_mean_first(inst, eval.posterior_first);
            const double d = e1 - e2;
            rhs[s] = static_cast<double>(n) * d * d;
        } catch (const numerical_error&) {
            ok[s] = 0;
        }
    });

    std::int64_t aborted = 0;
    for (char c : ok) aborted += 1 - c;
    enforce_abort_budget(aborted, samples);

    const McAccumulated lhs_acc = reduce_mc(lhs, ok);
    const McAccumulated rhs_acc = reduce_mc(rhs, ok);
    std::vector<double> diff(count, 0.0);
    for (std::size_t s = 0; s < count; ++s)
        if (ok[s]) diff[s] = lhs[s] - rhs[s];
    const McAccumulated diff_acc = reduce_mc(diff, ok);

    OrthogonalityCheck out;
    out.lhs = lhs_acc.mean;
    out.rhs = rhs_acc.mean;
    out.combined_se = diff_acc.se;
    out.pass = std::abs(lhs_acc.mean - rhs_acc.mean) <= 4.0 * diff_acc.se;
    out.samples = lhs_acc.valid;
    out.aborted = aborted;
    return out;
}

namespace {

struct HalfNoiseMoments {
    double i0 = 0.0; // marginal mass of (Z, X1) at the observed X1
    double i1 = 0.0; // ... weighted by z
};

// Per-component moments of the intermediate variable Z1 given X1 = x0.
// Gaussian: Z ~ N(theta, 1/2), X1 = Z + N(0, 1/2). Poisson: Z ~ Poi(2 theta),
// X1 ~ Binomial(Z, 1/2). Constants common to all components are dropped.
HalfNoiseMoments half_noise_moments(CompoundModel model, double theta, double x0,
                                    double theta_max, const QuadConfig& cfg) {
    HalfNoiseMoments out;
    if (model == CompoundModel::gaussian_loc) {
        const double sd = std::sqrt(0.5);
        const double lo = std::min(theta, x0) - cfg.domain_pad * sd;
        const double hi = std::max(theta, x0) + cfg.domain_pad * sd;
        auto g = [&](double z) {
            const double a = z - theta;
            const double b = x0 - z;
            return std::exp(-a * a - b * b);
        };
        out.i0 = integrate([&](double z) { return g(z); }, lo, hi, cfg);
        out.i1 = integrate([&](double z) { return z * g(z); }, lo, hi, cfg);
        return out;
    }
    const std::size_t x0i = static_cast<std::size_t>(x0);
    const std::size_t z_hi = x0i + cfg.poisson_tail.cutoff(2.0 * theta_max);
    std::vector<double> log_terms;
    log_terms.reserve(z_hi - x0i + 1);
    double m = -kInf;
    for (std::size_t z = x0i; z <= z_hi; ++z) {
        const double dz = static_cast<double>(z);
        double lg;
        if (theta == 0.0)
            lg = (z == 0) ? 0.0 : -kInf;
        else
            lg = dz * std::log(2.0 * theta) - 2.0 * theta - std::lgamma(dz + 1.0);
        const double lh = std::lgamma(dz + 1.0) - std::lgamma(dz - x0 + 1.0) -
                          dz * std::log(2.0);
        const double lt = lg + lh;
        log_terms.push_back(lt);
        m = std::max(m, lt);
    }
    if (!std::isfinite(m)) return out;
    for (std::size_t idx = 0; idx < log_terms.size(); ++idx) {
        const double e = std::exp(log_terms[idx] - m);
        out.i0 += e;
        out.i1 += static_cast<double>(x0i + idx) * e;
    }
    const double scale = std::exp(m);
    out.i0 *= scale;
    out.i1 *= scale;
    return out;
}

} // namespace

InterpCheck interp_identity_check(const CompoundInstance& inst,
                                  const std::vector<double>& x,
                                  const QuadConfig& cfg) {
    validate_instance(inst);
    cfg.validate();
    const std::size_t n = inst.size();
    if (x.size() != n) throw validation_error("observation vector length mismatch");
    for (double xi : x) validate_observation(inst, xi);
    if (all_theta_equal(inst)) return {0.0, 0.0}; // oracles coincide pathwise

    const double x0 = x[0];
    const double e1 = separable_first(inst, x0);
    const std::vector<double> pf = posterior_first_weights(inst, x);
    const double e2 = posterior_mean_first(inst, pf);
    const double lhs = e1 - e2;
    const double coeff = (inst.model == CompoundModel::gaussian_loc) ? 2.0 : 1.0;

    // Route A: structural conditional means of the intermediate variable.
    double struct_z1, struct_zn;
    if (inst.model == CompoundModel::gaussian_loc) {
        struct_z1 = 0.5 * x0 + 0.5 * e1;
        struct_zn = 0.5 * x0 + 0.5 * e2;
    } else {
        struct_z1 = x0 + e1;
        struct_zn = x0 + e2;
    }

    // Route B: direct integration/summation over the intermediate variable.
    double theta_max = 0.0;
    for (double t : inst.theta) theta_max = std::max(theta_max, t);
    double sum_i0 = 0.0, sum_i1 = 0.0, zn_direct = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const HalfNoiseMoments mom =
            half_noise_moments(inst.model, inst.theta[k], x0, theta_max, cfg);
        sum_i0 += mom.i0;
        sum_i1 += mom.i1;
        if (mom.i0 > 0.0) {
            zn_direct += pf[k] * (mom.i1 / mom.i0);
        } else if (pf[k] > 1e-12) {
            throw numerical_error(
                "half-noise moment vanished for a component with posterior mass " +
                std::to_string(pf[k]));
        }
    }
    if (sum_i0 <= 0.0)
        throw numerical_error("half-noise marginal vanished at the observed point");
    const double z1_direct = sum_i1 / sum_i0;

    InterpCheck out;
    out.residual_direct = std::abs(lhs - coeff * (struct_z1 - struct_zn));
    out.residual_route = std::abs(lhs - coeff * (z1_direct - zn_direct));
    return out;
}

TransportationCheck transportation_check(double h,
                                         const std::vector<double>& mixing_rates,
                                         const std::vector<double>& mixing_weights,
                                         const std::vector<double>& mu_probs) {
    if (!(h >= 0.0)) throw validation_error("transportation_check needs h >= 0");
    if (mixing_rates.empty() || mixing_rates.size() != mixing_weights.size())
        throw validation_error("mixing rates and weights must match and be nonempty");
    double wsum = 0.0;
    for (std::size_t l = 0; l < mixing_rates.size(); ++l) {
        if (!(mixing_rates[l] >= 0.0 && mixing_rates[l] <= h))
            throw validation_error("mixing rates must lie in [0, h]");
        if (!(mixing_weights[l] >= 0.0))
            throw validation_error("mixing weights must be >= 0");
        wsum += mixing_weights[l];
    }
    if (std::abs(wsum - 1.0) > 1e-12)
        throw validation_error("mixing weights must sum to 1");
    if (mu_probs.empty()) throw validation_error("mu must be nonempty");
    double psum = 0.0, mu_mean = 0.0;
    for (std::size_t v = 0; v < mu_probs.size(); ++v) {
        if (!(mu_probs[v] >= 0.0)) throw validation_error("mu entries must be >= 0");
        psum += mu_probs[v];
        mu_mean += static_cast<double>(v) * mu_probs[v];
    }
    if (std::abs(psum - 1.0) > 1e-12)
        throw validation_error("mu must sum to 1");
    if (!(mu_mean >= 0.0 && mu_mean <= h + 1e-12))
        throw validation_error("mu mean must lie in [0, h] for the inequality to apply");

    double nu_mean = 0.0;
    for (std::size_t l = 0; l < mixing_rates.size(); ++l)
        nu_mean += mixing_weights[l] * mixing_rates[l];

    auto nu_pmf = [&](std::size_t v) {
        const double dv = static_cast<double>(v);
        double acc = 0.0;
        for (std::size_t l = 0; l < mixing_rates.size(); ++l) {
            const double lam = mixing_rates[l];
            if (mixing_weights[l] == 0.0) continue;
            if (lam == 0.0) {
                if (v == 0) acc += mixing_weights[l];
                continue;
            }
            acc += mixing_weights[l] *
                   std::exp(dv * std::log(lam) - lam - std::lgamma(dv + 1.0));
        }
        return acc;
    };

    double kl = 0.0;
    for (std::size_t v = 0; v < mu_probs.size(); ++v) {
        const double p = mu_probs[v];
        if (p == 0.0) continue;
        const double q = nu_pmf(v);
        if (q == 0.0) {
            kl = kInf;
            break;
        }
        kl += p * std::log(p / q);
    }
    kl = std::max(kl, 0.0); // rounding can leave a tiny negative sum at mu ~ nu

    TransportationCheck out;
    const double gap = mu_mean - nu_mean;
    out.lhs = gap * gap;
    out.rhs = 2.0 * h * (h + 2.0) * kl;
    out.pass = out.lhs <= out.rhs + 1e-12;
    return out;
}

TiltVarianceCheck tilt_variance_check(const GaussianMixture& post, double h,
                                      const std::vector<double>& t_grid) {
    if (post.means.empty() || post.means.size() != post.weights.size())
        throw validation_error("mixture means and weights must match and be nonempty");
    if (!(h >= 0.0)) throw validation_error("tilt_variance_check needs h >= 0");
    if (std::abs(post.sd - 0.5) > 1e-12)
        throw validation_error("tilt closed form requires common component sd 1/2");
    double wsum = 0.0;
    double mn = kInf, mx = -kInf;
    for (std::size_t k = 0; k < post.means.size(); ++k) {
        if (!std::isfinite(post.means[k]))
            throw validation_error("mixture means must be finite");
        if (!(post.weights[k] >= 0.0))
            throw validation_error("mixture weights must be >= 0");
        wsum += post.weights[k];
        mn = std::min(mn, post.means[k]);
        mx = std::max(mx, post.means[k]);
    }
    if (std::abs(wsum - 1.0) > 1e-12)
        throw validation_error("mixture weights must sum to 1");
    if (mx - mn > 0.5 * h + 1e-12)
        throw validation_error("mixture means must span at most h/2");
    if (t_grid.empty()) throw validation_error("t grid must be nonempty");

    const std::size_t kcount = post.means.size();
    TiltVarianceCheck out;
    out.bound = h * h / 16.0 + 0.25;
    for (double t : t_grid) {
        if (!std::isfinite(t)) throw validation_error("tilt grid must be finite");
        // Tilting by t shifts every component mean equally and reweights
        // components by exp(t * mean); only the reweighting moves the
        // between-component variance.
        double lmax = -kInf;
        std::vector<double> lw(kcount, -kInf);
        for (std::size_t k = 0; k < kcount; ++k) {
            if (post.weights[k] == 0.0) continue;
            lw[k] = std::log(post.weights[k]) + t * post.means[k];
            lmax = std::max(lmax, lw[k]);
        }
        double norm = 0.0, mean = 0.0;
        for (std::size_t k = 0; k < kcount; ++k) {
            if (lw[k] == -kInf) continue;
            const double w = std::exp(lw[k] - lmax);
            norm += w;
            mean += w * post.means[k];
        }
        mean /= norm;
        double between = 0.0;
        for (std::size_t k = 0; k < kcount; ++k) {
            if (lw[k] == -kInf) continue;
            const double w = std::exp(lw[k] - lmax) / norm;
            const double d = post.means[k] - mean;
            between += w * d * d;
        }
        out.max_var = std::max(out.max_var, post.sd * post.sd + between);
    }
    out.pass = out.max_var <= out.bound + 1e-12;
    return out;
}

ChainAudit mutual_info_chain_audit(double h, std::size_t n, std::int64_t samples,
                                   std::uint64_t seed, unsigned n_threads) {
    if (!(h > 0.0)) throw validation_error("chain audit needs h > 0");
    if (n < 2 || n % 2 != 0)
        throw validation_error("chain audit needs an even n >= 2");
    if (n > 10) throw capacity_error("chain audit limited to n <= 10");

    CompoundInstance inst;
    inst.model = CompoundModel::gaussian_loc;
    inst.theta.assign(n, -0.5 * h);
    for (std::size_t i = n / 2; i < n; ++i) inst.theta[i] = 0.5 * h;

    const GapEstimate gap = regret_gap_mc(inst, samples, seed, n_threads);

    // Half-noise family: Z_i = theta_i + N(0, 1/2); rescaling by sqrt(2)
    // turns it into the unit-variance family with means sqrt(2) * theta.
    std::vector<Member> half_noise;
    half_noise.reserve(n);
    for (double t : inst.theta)
        half_noise.push_back(Member::gaussian_loc(std::sqrt(2.0) * t));
    const double chi2_z = chi2_exact(half_noise);

    ChainAudit out;
    out.gap_mean = gap.mean;
    out.gap_se = gap.std_error;
    out.chi2_half_noise = chi2_z;
    const double denom = 2.0 * h * (h + 2.0);
    out.lhs = gap.mean / denom;
    out.rhs = std::log1p(chi2_z) + 4.0 * gap.std_error / denom;
    out.pass = out.lhs <= out.rhs;
    return out;
}

} // namespace permix
