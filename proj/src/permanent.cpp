#include "permix/permanent.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>

#include "permix/quadrature.hpp"

namespace permix {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Divide out each column's max |entry|. Scaled entries lie in [-1, 1], so the
// signed Ryser accumulation stays in a safe double range for n <= 30.
ColumnScaling scale_columns(SquareMatrix& m) {
    const std::size_t n = m.size();
    ColumnScaling sc;
    sc.scale_factors.assign(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        double c = 0.0;
        for (std::size_t i = 0; i < n; ++i) c = std::max(c, std::abs(m(i, j)));
        sc.scale_factors[j] = c;
        if (c == 0.0) continue; // zero column; permanent is zero
        for (std::size_t i = 0; i < n; ++i) m(i, j) /= c;
        sc.log_correction += std::log(c);
    }
    return sc;
}

LogValue pack_result(double scaled_value, const ColumnScaling& sc) {
    LogValue out;
    if (scaled_value == 0.0 ||
        std::any_of(sc.scale_factors.begin(), sc.scale_factors.end(),
                    [](double c) { return c == 0.0; }))
        return out;
    out.zero_flag = false;
    out.sign = scaled_value > 0.0 ? 1 : -1;
    out.log_magnitude = std::log(std::abs(scaled_value)) + sc.log_correction;
    return out;
}

// Ryser: Perm(M) = (-1)^n * sum over nonempty S of (-1)^|S| prod_i rowsum_S(i).
// Gray-code order flips one column per step; row sums are updated
// incrementally and refreshed periodically to cap drift.
double ryser_scaled(const SquareMatrix& m) {
    const std::size_t n = m.size();
    const std::uint64_t full = std::uint64_t(1) << n;
    std::vector<double> row_sum(n, 0.0);
    double total = 0.0;
    std::uint64_t gray = 0;
    for (std::uint64_t s = 1; s < full; ++s) {
        const unsigned j = static_cast<unsigned>(std::countr_zero(s));
        gray ^= std::uint64_t(1) << j;
        if ((gray >> j) & 1) {
            for (std::size_t i = 0; i < n; ++i) row_sum[i] += m(i, j);
        } else {
            for (std::size_t i = 0; i < n; ++i) row_sum[i] -= m(i, j);
        }
        if ((s & 0xFFFF) == 0) {
            // Rebuild row sums from the current subset to shed accumulated
            // rounding from the +/- updates.
            std::fill(row_sum.begin(), row_sum.end(), 0.0);
            for (unsigned c = 0; c < n; ++c) {
                if (!((gray >> c) & 1)) continue;
                for (std::size_t i = 0; i < n; ++i) row_sum[i] += m(i, c);
            }
        }
        double prod = 1.0;
        for (std::size_t i = 0; i < n; ++i) prod *= row_sum[i];
        total += (std::popcount(gray) % 2 == 0) ? prod : -prod;
    }
    return (n % 2 == 0) ? total : -total;
}

double naive_scaled(const SquareMatrix& m) {
    const std::size_t n = m.size();
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), 0);
    double total = 0.0;
    do {
        double prod = 1.0;
        for (std::size_t j = 0; j < n; ++j) prod *= m(p[j], j);
        total += prod;
    } while (std::next_permutation(p.begin(), p.end()));
    return total;
}

LogValue permanent_signed(SquareMatrix m, PermanentEngine engine) {
    const std::size_t n = m.size();
    if (n < 1) throw validation_error("permanent requires n >= 1");
    if (engine == PermanentEngine::naive && n > 9)
        throw capacity_error("naive permanent limited to n <= 9");
    if (n > 30) throw capacity_error("ryser permanent limited to n <= 30");
    const ColumnScaling sc = scale_columns(m);
    const double scaled =
        (engine == PermanentEngine::naive) ? naive_scaled(m) : ryser_scaled(m);
    return pack_result(scaled, sc);
}

} // namespace

LogValue permanent_exact(const SquareMatrix& m, PermanentEngine engine) {
    for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t j = 0; j < m.size(); ++j)
            if (!(m(i, j) >= 0.0))
                throw validation_error("permanent_exact requires nonnegative entries");
    return permanent_signed(m, engine);
}

LogValue weighted_column_permanent(const SquareMatrix& m, std::size_t col,
                                   const std::vector<double>& weights) {
    const std::size_t n = m.size();
    if (col >= n) throw validation_error("weighted column index out of range");
    if (weights.size() != n)
        throw validation_error("weighted_column_permanent needs n weights");
    for (double w : weights)
        if (!std::isfinite(w)) throw validation_error("weights must be finite");
    SquareMatrix sub = m;
    for (std::size_t i = 0; i < n; ++i) sub(i, col) = weights[i] * m(i, col);
    return permanent_signed(std::move(sub), PermanentEngine::ryser);
}

double chi2_exact(const std::vector<Member>& members, const QuadConfig& cfg) {
    const std::size_t n = members.size();
    if (n > 30) throw capacity_error("chi2_exact limited to n <= 30 members");
    const bool identical = std::all_of(members.begin(), members.end(),
                                       [&](const Member& m) { return m == members.front(); });
    if (identical && n > 0) return 0.0; // mixture and product law coincide
    const OverlapMatrix a = build_overlap(members, cfg);
    const LogValue perm = permanent_exact(a.entries, PermanentEngine::ryser);
    if (perm.zero_flag)
        throw numerical_error("overlap permanent vanished; matrix is singular in structure");
    const double log_one_plus =
        static_cast<double>(n) * std::log(static_cast<double>(n)) -
        std::lgamma(static_cast<double>(n) + 1.0) + perm.log_magnitude;
    double chi = std::expm1(log_one_plus);
    if (chi < 0.0) {
        if (chi < -1e-9)
            throw numerical_error("chi2_exact produced " + std::to_string(chi) +
                                  ", below the rounding tolerance");
        chi = 0.0;
    }
    return chi;
}

namespace {

// Streaming log-sum-exp accumulator with running-max rebase; terms may span
// hundreds of nats across a contingency enumeration.
class LogSumAccumulator {
public:
    void add(double log_term) {
        if (log_term == -kInf) return;
        if (log_term > max_) {
            acc_ = acc_ * std::exp(max_ - log_term) + 1.0;
            max_ = log_term;
        } else {
            acc_ += std::exp(log_term - max_);
        }
    }

    double log_sum() const {
        if (acc_ == 0.0) return -kInf;
        return max_ + std::log(acc_);
    }

private:
    double max_ = -kInf;
    double acc_ = 0.0;
};

// log(A^x / x!) for one contingency cell; zero overlap entries kill any term
// that would use them with positive count.
inline double cell_log(double log_a, std::size_t x, const std::vector<double>& lg) {
    if (x == 0) return 0.0;
    if (log_a == -kInf) return -kInf;
    return static_cast<double>(x) * log_a - lg[x];
}

} // namespace

double replicated_chi2(const OverlapMatrix& a, std::size_t m) {
    const std::size_t n = a.size();
    if (n != 2 && n != 3)
        throw validation_error("replicated_chi2 supports n in {2, 3}");
    if (m < 1) throw validation_error("replication factor must be >= 1");
    if (n == 3) {
        const double budget = std::pow(static_cast<double>(m + 1), 4.0);
        if (budget > 1e8)
            throw capacity_error("replicated_chi2 term budget (m+1)^4 exceeds 1e8");
    }

    std::vector<double> log_a(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double v = a.entries(i, j);
            log_a[i * n + j] = v > 0.0 ? std::log(v) : -kInf;
        }
    std::vector<double> lg(m + 1);
    for (std::size_t k = 0; k <= m; ++k) lg[k] = std::lgamma(static_cast<double>(k) + 1.0);

    LogSumAccumulator sum;
    if (n == 2) {
        // Row/column sums m force tables of the form [[t, m-t], [m-t, t]].
        for (std::size_t t = 0; t <= m; ++t) {
            const double log_term = cell_log(log_a[0], t, lg) +
                                    cell_log(log_a[1], m - t, lg) +
                                    cell_log(log_a[2], m - t, lg) +
                                    cell_log(log_a[3], t, lg);
            sum.add(log_term);
        }
    } else {
        // Free upper-left 2x2 block (x11, x12, x21, x22); the remaining five
        // cells are forced by the marginal constraints.
        for (std::size_t x11 = 0; x11 <= m; ++x11)
            for (std::size_t x12 = 0; x11 + x12 <= m; ++x12)
                for (std::size_t x21 = 0; x11 + x21 <= m; ++x21)
                    for (std::size_t x22 = 0; x12 + x22 <= m && x21 + x22 <= m; ++x22) {
                        const std::size_t s = x11 + x12 + x21 + x22;
                        if (s < m) continue; // bottom-right cell would go negative
                        const std::size_t x13 = m - x11 - x12;
                        const std::size_t x23 = m - x21 - x22;
                        const std::size_t x31 = m - x11 - x21;
                        const std::size_t x32 = m - x12 - x22;
                        const std::size_t x33 = s - m;
                        const double log_term = cell_log(log_a[0], x11, lg) +
                                                cell_log(log_a[1], x12, lg) +
                                                cell_log(log_a[2], x13, lg) +
                                                cell_log(log_a[3], x21, lg) +
                                                cell_log(log_a[4], x22, lg) +
                                                cell_log(log_a[5], x23, lg) +
                                                cell_log(log_a[6], x31, lg) +
                                                cell_log(log_a[7], x32, lg) +
                                                cell_log(log_a[8], x33, lg);
                        sum.add(log_term);
                    }
    }

    const double dn = static_cast<double>(n);
    const double dm = static_cast<double>(m);
    const double log_prefactor = dm * dn * std::log(dn) +
                                 2.0 * dn * std::lgamma(dm + 1.0) -
                                 std::lgamma(dm * dn + 1.0);
    const double log_one_plus = log_prefactor + sum.log_sum();
    double chi = std::expm1(log_one_plus);
    if (chi < 0.0) {
        if (chi < -1e-9)
            throw numerical_error("replicated_chi2 produced a negative value " +
                                  std::to_string(chi));
        chi = 0.0;
    }
    return chi;
}

double two_component_chi2(std::size_t half_n, double f) {
    if (half_n < 1) throw validation_error("two_component_chi2 requires m >= 1");
    if (!(f >= 0.0 && f < 1.0))
        throw validation_error("two_component_chi2 requires f in [0, 1)");
    if (f == 0.0) return 0.0;
    const double dm = static_cast<double>(half_n);
    const double log_f = std::log(f);
    const double lg_m1 = std::lgamma(dm + 1.0);
    const double lg_2m1 = std::lgamma(2.0 * dm + 1.0);
    LogSumAccumulator sum;
    for (std::size_t l = 1; l <= half_n; ++l) {
        const double dl = static_cast<double>(l);
        const double log_binom_m = lg_m1 - std::lgamma(dl + 1.0) - std::lgamma(dm - dl + 1.0);
        const double log_binom_2m =
            lg_2m1 - std::lgamma(2.0 * dl + 1.0) - std::lgamma(2.0 * (dm - dl) + 1.0);
        sum.add(2.0 * log_binom_m - log_binom_2m + 2.0 * dl * log_f);
    }
    return std::exp(sum.log_sum());
}

double mixing_scalar(MixingModel model, double sep) {
    if (!(sep >= 0.0)) throw validation_error("mixing_scalar requires sep >= 0");
    if (model == MixingModel::poisson) return std::tanh(0.5 * sep);
    if (sep == 0.0) return 0.0;
    const double mu = sep;
    // E[1/cosh(mu Z)] under Z ~ N(0,1); sech written overflow-free.
    auto integrand = [mu](double z) {
        const double t = std::abs(mu * z);
        const double sech = 2.0 * std::exp(-t) / (1.0 + std::exp(-2.0 * t));
        return std::exp(-0.5 * z * z) * sech;
    };
    const double inv_sqrt_2pi = 0.39894228040143267793994605993438;
    const double expectation =
        inv_sqrt_2pi * integrate_adaptive(integrand, -12.0, 12.0, 1e-12);
    const double f = 1.0 - std::exp(-0.5 * mu * mu) * expectation;
    return std::clamp(f, 0.0, 1.0 - 1e-16);
}

} // namespace permix
