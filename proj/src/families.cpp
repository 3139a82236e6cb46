#include "permix/families.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace permix {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw validation_error(std::string(what) + " must be finite");
}

bool is_index(double x) { return std::isfinite(x) && x == std::floor(x) && x >= 0.0; }

void require_same_kind(const Member& p, const Member& q, const char* op) {
    if (p.kind() != q.kind())
        throw validation_error(std::string(op) + " requires members of the same model kind");
}

} // namespace

Member Member::gaussian_loc(double mean) {
    require_finite(mean, "GaussianLoc mean");
    return Member(ModelKind::gaussian_loc, mean, {});
}

Member Member::poisson(double rate) {
    require_finite(rate, "Poisson rate");
    if (rate < 0.0) throw validation_error("Poisson rate must be >= 0");
    return Member(ModelKind::poisson, rate, {});
}

Member Member::discrete(std::vector<double> pmf) {
    if (pmf.empty()) throw validation_error("Discrete pmf must be nonempty");
    double sum = 0.0;
    for (double p : pmf) {
        require_finite(p, "Discrete pmf entry");
        if (p < 0.0) throw validation_error("Discrete pmf entries must be >= 0");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12)
        throw validation_error("Discrete pmf must sum to 1 within 1e-12");
    return Member(ModelKind::discrete, 0.0, std::move(pmf));
}

Member Member::gaussian_scale(double sigma) {
    require_finite(sigma, "GaussianScale sigma");
    if (!(sigma > 0.0)) throw validation_error("GaussianScale sigma must be > 0");
    return Member(ModelKind::gaussian_scale, sigma, {});
}

Member Member::gaussian_loc_multi(std::vector<double> mean) {
    if (mean.empty()) throw validation_error("GaussianLocMulti mean must be nonempty");
    for (double v : mean) require_finite(v, "GaussianLocMulti mean entry");
    return Member(ModelKind::gaussian_loc_multi, 0.0, std::move(mean));
}

double Member::mean() const {
    if (kind_ != ModelKind::gaussian_loc) throw validation_error("member is not GaussianLoc");
    return scalar_;
}

double Member::rate() const {
    if (kind_ != ModelKind::poisson) throw validation_error("member is not Poisson");
    return scalar_;
}

const std::vector<double>& Member::pmf() const {
    if (kind_ != ModelKind::discrete) throw validation_error("member is not Discrete");
    return vec_;
}

double Member::sigma() const {
    if (kind_ != ModelKind::gaussian_scale) throw validation_error("member is not GaussianScale");
    return scalar_;
}

const std::vector<double>& Member::mean_vec() const {
    if (kind_ != ModelKind::gaussian_loc_multi)
        throw validation_error("member is not GaussianLocMulti");
    return vec_;
}

double log_density(const Member& m, Observation x) {
    switch (m.kind()) {
    case ModelKind::gaussian_loc: {
        if (!std::isfinite(x)) throw validation_error("GaussianLoc observation must be finite");
        const double d = x - m.mean();
        return -0.5 * d * d - kHalfLog2Pi;
    }
    case ModelKind::poisson: {
        if (!is_index(x)) throw validation_error("Poisson observation must be a count >= 0");
        if (m.rate() == 0.0) return x == 0.0 ? 0.0 : -kInf;
        return x * std::log(m.rate()) - m.rate() - std::lgamma(x + 1.0);
    }
    case ModelKind::discrete: {
        if (!is_index(x) || x >= static_cast<double>(m.pmf().size()))
            throw validation_error("Discrete observation must be a category index < pmf length");
        const double p = m.pmf()[static_cast<std::size_t>(x)];
        return p > 0.0 ? std::log(p) : -kInf;
    }
    case ModelKind::gaussian_scale: {
        if (!std::isfinite(x)) throw validation_error("GaussianScale observation must be finite");
        const double z = x / m.sigma();
        return -0.5 * z * z - std::log(m.sigma()) - kHalfLog2Pi;
    }
    case ModelKind::gaussian_loc_multi: {
        if (m.mean_vec().size() != 1)
            throw validation_error("GaussianLocMulti density is only available in dimension 1");
        if (!std::isfinite(x)) throw validation_error("observation must be finite");
        const double d = x - m.mean_vec()[0];
        return -0.5 * d * d - kHalfLog2Pi;
    }
    }
    throw validation_error("unknown model kind");
}

double density(const Member& m, Observation x) { return std::exp(log_density(m, x)); }

double renyi_half(const Member& p, const Member& q) {
    if (p == q) return 0.0;
    require_same_kind(p, q, "renyi_half");
    switch (p.kind()) {
    case ModelKind::gaussian_loc: {
        const double d = p.mean() - q.mean();
        return 0.25 * d * d;
    }
    case ModelKind::poisson: {
        const double s = std::sqrt(p.rate()) - std::sqrt(q.rate());
        return s * s;
    }
    case ModelKind::gaussian_scale: {
        const double s1 = p.sigma() * p.sigma();
        const double s2 = q.sigma() * q.sigma();
        return std::log((s1 + s2) / (2.0 * p.sigma() * q.sigma()));
    }
    case ModelKind::gaussian_loc_multi: {
        if (p.mean_vec().size() != q.mean_vec().size())
            throw validation_error("GaussianLocMulti members must share a dimension");
        double d2 = 0.0;
        for (std::size_t i = 0; i < p.mean_vec().size(); ++i) {
            const double d = p.mean_vec()[i] - q.mean_vec()[i];
            d2 += d * d;
        }
        return 0.25 * d2;
    }
    case ModelKind::discrete: {
        if (p.pmf().size() != q.pmf().size())
            throw validation_error("Discrete members must share a support size");
        double affinity = 0.0;
        for (std::size_t c = 0; c < p.pmf().size(); ++c)
            affinity += std::sqrt(p.pmf()[c] * q.pmf()[c]);
        if (affinity <= 0.0) return kInf;
        // affinity <= 1 up to rounding; clamp so the result stays nonnegative
        return std::max(0.0, -2.0 * std::log(affinity));
    }
    }
    throw validation_error("unknown model kind");
}

double chi2_pair(const Member& p, const Member& q) {
    if (p == q) return 0.0;
    require_same_kind(p, q, "chi2_pair");
    switch (p.kind()) {
    case ModelKind::gaussian_loc: {
        const double d = p.mean() - q.mean();
        return std::expm1(d * d);
    }
    case ModelKind::gaussian_loc_multi: {
        if (p.mean_vec().size() != q.mean_vec().size())
            throw validation_error("GaussianLocMulti members must share a dimension");
        double d2 = 0.0;
        for (std::size_t i = 0; i < p.mean_vec().size(); ++i) {
            const double d = p.mean_vec()[i] - q.mean_vec()[i];
            d2 += d * d;
        }
        return std::expm1(d2);
    }
    case ModelKind::poisson: {
        const double l1 = p.rate();
        const double l2 = q.rate();
        if (l2 == 0.0) return l1 == 0.0 ? 0.0 : kInf;
        const double d = l1 - l2;
        return std::expm1(d * d / l2);
    }
    case ModelKind::gaussian_scale: {
        const double s1 = p.sigma() * p.sigma();
        const double s2 = q.sigma() * q.sigma();
        // The second moment integral diverges once s1 >= 2*s2.
        if (s1 >= 2.0 * s2) return kInf;
        return std::max(0.0, s2 / std::sqrt(s1 * (2.0 * s2 - s1)) - 1.0);
    }
    case ModelKind::discrete: {
        if (p.pmf().size() != q.pmf().size())
            throw validation_error("Discrete members must share a support size");
        double acc = 0.0;
        for (std::size_t c = 0; c < p.pmf().size(); ++c) {
            const double pc = p.pmf()[c];
            const double qc = q.pmf()[c];
            if (qc == 0.0) {
                if (pc > 0.0) return kInf;
                continue;
            }
            const double d = pc - qc;
            acc += d * d / qc;
        }
        return acc;
    }
    }
    throw validation_error("unknown model kind");
}

Observation sample(const Member& m, RngStream& rng) {
    switch (m.kind()) {
    case ModelKind::gaussian_loc:
        return m.mean() + rng.normal();
    case ModelKind::poisson:
        return static_cast<double>(rng.poisson(m.rate()));
    case ModelKind::discrete: {
        const double u = rng.uniform01();
        double cum = 0.0;
        const std::size_t last = m.pmf().size() - 1;
        for (std::size_t c = 0; c < last; ++c) {
            cum += m.pmf()[c];
            if (u <= cum) return static_cast<double>(c);
        }
        return static_cast<double>(last);
    }
    case ModelKind::gaussian_scale:
        return m.sigma() * rng.normal();
    case ModelKind::gaussian_loc_multi:
        if (m.mean_vec().size() != 1)
            throw validation_error("GaussianLocMulti sampling is only available in dimension 1");
        return m.mean_vec()[0] + rng.normal();
    }
    throw validation_error("unknown model kind");
}

std::vector<Member> shared_atom_members(std::size_t m, double eps) {
    if (m < 2) throw validation_error("shared_atom_members requires m >= 2");
    if (!(eps > 0.0 && eps < 1.0))
        throw validation_error("shared_atom_members requires eps in (0,1)");
    std::vector<Member> out;
    out.reserve(m - 1);
    for (std::size_t i = 1; i < m; ++i) {
        std::vector<double> pmf(m, 0.0);
        pmf[0] = eps;
        pmf[i] = 1.0 - eps;
        out.push_back(Member::discrete(std::move(pmf)));
    }
    return out;
}

std::vector<Member> swap_pair_members(double eps) {
    if (!(eps > 0.0 && eps < 1.0))
        throw validation_error("swap_pair_members requires eps in (0,1)");
    return {Member::discrete({1.0 - eps, eps}), Member::discrete({eps, 1.0 - eps})};
}

std::vector<Member> simplex_grid_members(std::size_t m, double eps,
                                         std::size_t count, std::uint64_t seed) {
    if (m < 1) throw validation_error("simplex_grid_members requires m >= 1");
    if (!(eps > 0.0 && eps <= 1.0))
        throw validation_error("simplex_grid_members requires eps in (0,1]");
    if (count < 1) throw validation_error("simplex_grid_members requires count >= 1");
    std::vector<Member> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        RngStream rng(seed, i);
        // Exponential spacings give a uniform draw from the simplex.
        std::vector<double> p(m);
        double total = 0.0;
        for (std::size_t c = 0; c < m; ++c) {
            p[c] = -std::log(rng.uniform01());
            total += p[c];
        }
        for (std::size_t c = 0; c < m; ++c)
            p[c] = (1.0 - eps) * p[c] / total + eps / static_cast<double>(m);
        out.push_back(Member::discrete(std::move(p)));
    }
    return out;
}

} // namespace permix
