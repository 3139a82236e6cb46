#include "permix/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace permix {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double frobenius_norm(const SquareMatrix& m) {
    double acc = 0.0;
    for (double v : m.data()) acc += v * v;
    return std::sqrt(acc);
}

double off_diagonal_norm(const SquareMatrix& m) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t j = 0; j < m.size(); ++j)
            if (i != j) acc += m(i, j) * m(i, j);
    return std::sqrt(acc);
}

void require_symmetric(const SquareMatrix& m, double tol) {
    for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t j = i + 1; j < m.size(); ++j)
            if (std::abs(m(i, j) - m(j, i)) > tol)
                throw validation_error("matrix is not symmetric within tolerance");
}

// One Jacobi rotation zeroing a(p,q), accumulating the rotation into v.
void jacobi_rotate(SquareMatrix& a, SquareMatrix& v, std::size_t p, std::size_t q) {
    const double apq = a(p, q);
    if (apq == 0.0) return;
    const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
    const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                     (std::abs(theta) + std::sqrt(theta * theta + 1.0));
    const double c = 1.0 / std::sqrt(t * t + 1.0);
    const double s = t * c;
    const double tau = s / (1.0 + c);
    const std::size_t n = a.size();

    const double app = a(p, p);
    const double aqq = a(q, q);
    a(p, p) = app - t * apq;
    a(q, q) = aqq + t * apq;
    a(p, q) = 0.0;
    a(q, p) = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        if (k == p || k == q) continue;
        const double akp = a(k, p);
        const double akq = a(k, q);
        a(k, p) = akp - s * (akq + tau * akp);
        a(p, k) = a(k, p);
        a(k, q) = akq + s * (akp - tau * akq);
        a(q, k) = a(k, q);
    }
    for (std::size_t k = 0; k < n; ++k) {
        const double vkp = v(k, p);
        const double vkq = v(k, q);
        v(k, p) = vkp - s * (vkq + tau * vkp);
        v(k, q) = vkq + s * (vkp - tau * vkq);
    }
}

} // namespace

EigenDecomposition eigen_sym_full(const SquareMatrix& m) {
    const std::size_t n = m.size();
    if (n == 0) throw validation_error("eigen_sym input must be nonempty");
    if (n > 200) throw capacity_error("eigen_sym limited to n <= 200");
    require_symmetric(m, 1e-10);

    SquareMatrix a = m;
    a.symmetrize(); // remove sub-tolerance asymmetry before iterating
    SquareMatrix v = SquareMatrix::identity(n);
    const double target = 1e-13 * std::max(frobenius_norm(a),
                                           std::numeric_limits<double>::min());
    for (int sweep = 0; sweep < 100; ++sweep) {
        if (off_diagonal_norm(a) < target) break;
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q)
                jacobi_rotate(a, v, p, q);
    }
    if (off_diagonal_norm(a) >= target)
        throw numerical_error("jacobi eigensolver did not reach its off-diagonal target");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });

    EigenDecomposition out;
    out.report.source_dim = n;
    out.report.eigenvalues.resize(n);
    out.vectors = SquareMatrix(n);
    for (std::size_t k = 0; k < n; ++k) {
        out.report.eigenvalues[k] = a(order[k], order[k]);
        for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = v(i, order[k]);
    }
    return out;
}

SpectrumReport eigen_sym(const SquareMatrix& m) { return eigen_sym_full(m).report; }

namespace {

double clamp_unit(double lambda, int* clamped) {
    if (lambda < 0.0 || lambda > 1.0) {
        if (clamped) ++*clamped;
        return std::clamp(lambda, 0.0, 1.0);
    }
    return lambda;
}

} // namespace

double spectral_upper(const SpectrumReport& spec, int* clamped) {
    double acc = 0.0;
    for (std::size_t i = 1; i < spec.eigenvalues.size(); ++i) {
        const double l = clamp_unit(spec.eigenvalues[i], clamped);
        if (l >= 1.0 - 1e-12) return kInf;
        acc += -std::log1p(-l);
    }
    return acc;
}

double spectral_lower(const SpectrumReport& spec, int* clamped) {
    double acc = 0.0;
    for (std::size_t i = 1; i < spec.eigenvalues.size(); ++i) {
        const double l = clamp_unit(spec.eigenvalues[i], clamped);
        if (l >= 1.0 - 1e-12) return kInf;
        acc += -0.5 * std::log1p(-l * l);
    }
    return acc;
}

double diagonal_lower(const OverlapMatrix& a) {
    const std::size_t n = a.size();
    if (n == 0) throw validation_error("diagonal_lower needs a nonempty matrix");
    double acc = -0.5 * std::log(static_cast<double>(n));
    for (std::size_t i = 1; i < n; ++i) {
        const double d = std::min(a.entries(i, i), 1.0);
        const double one_minus = 1.0 - d * d;
        if (one_minus <= 0.0) return kInf;
        acc += -0.5 * std::log(one_minus);
    }
    return acc;
}

HessianCheck hessian_det_check(const SquareMatrix& a) {
    const std::size_t n = a.size();
    if (n < 2) throw validation_error("hessian_det_check requires n >= 2");
    if (n > 8) throw capacity_error("hessian_det_check limited to n <= 8");
    require_symmetric(a, 1e-10);
    for (double v : a.data())
        if (!(v > 0.0))
            throw validation_error("hessian_det_check requires strictly positive entries");
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) row += a(i, j);
        if (std::abs(row - 1.0) > 1e-6)
            throw validation_error("hessian_det_check requires a doubly stochastic matrix");
    }

    // Constrained Hessian over the free (n-1)x(n-1) block, the last row and
    // column being eliminated by the doubly stochastic constraints.
    const std::size_t d = (n - 1) * (n - 1);
    SquareMatrix h(d);
    const std::size_t last = n - 1;
    for (std::size_t i = 0; i < last; ++i)
        for (std::size_t j = 0; j < last; ++j) {
            const std::size_t r = i * last + j;
            for (std::size_t ip = 0; ip < last; ++ip)
                for (std::size_t jp = 0; jp < last; ++jp) {
                    const std::size_t c = ip * last + jp;
                    double v = 1.0 / a(last, last);
                    if (i == ip) v += 1.0 / a(i, last);
                    if (j == jp) v += 1.0 / a(last, j);
                    if (i == ip && j == jp) v += 1.0 / a(i, j);
                    h(r, c) = v;
                }
        }

    double scale = 0.0;
    for (double v : h.data()) scale = std::max(scale, std::abs(v));

    // det via LU with partial pivoting, accumulated as sum of log |pivot|.
    double log_det = 0.0;
    int sign = 1;
    for (std::size_t col = 0; col < d; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < d; ++r)
            if (std::abs(h(r, col)) > std::abs(h(piv, col))) piv = r;
        if (piv != col) {
            for (std::size_t c = 0; c < d; ++c) std::swap(h(col, c), h(piv, c));
            sign = -sign;
        }
        const double pivot = h(col, col);
        if (pivot == 0.0)
            throw numerical_error("hessian determinant pivot vanished");
        if (pivot < 0.0) {
            // H is PSD up to roundoff; a substantive negative pivot means the
            // input was not a valid overlap-like matrix.
            if (-pivot > 1e-12 * scale)
                throw numerical_error("hessian lost positive definiteness: pivot " +
                                      std::to_string(pivot));
            sign = -sign;
        }
        log_det += std::log(std::abs(pivot));
        for (std::size_t r = col + 1; r < d; ++r) {
            const double factor = h(r, col) / pivot;
            if (factor == 0.0) continue;
            for (std::size_t c = col; c < d; ++c) h(r, c) -= factor * h(col, c);
        }
    }

    const SpectrumReport spec = eigen_sym(a);
    double log_rhs = -std::log(static_cast<double>(n));
    for (double v : a.data()) log_rhs -= std::log(v);
    for (std::size_t k = 1; k < n; ++k) {
        const double l = spec.eigenvalues[k];
        const double one_minus = 1.0 - l * l;
        if (one_minus <= 0.0)
            throw numerical_error("overlap spectrum reached 1 in hessian identity");
        log_rhs += std::log(one_minus);
    }

    HessianCheck out;
    out.log_lhs = log_det;
    out.log_rhs = log_rhs;
    out.lhs = sign * std::exp(log_det);
    out.rhs = std::exp(log_rhs);
    out.rel_err = (sign > 0) ? std::abs(std::expm1(log_det - log_rhs)) : kInf;
    return out;
}

BoundsReport bounds_report(const OverlapMatrix& a, std::optional<double> chi2) {
    const SpectrumReport spec = eigen_sym(a.entries);
    BoundsReport out;
    out.log_upper = spectral_upper(spec);
    out.log_lower_spectral = spectral_lower(spec);
    out.log_lower_diagonal = diagonal_lower(a);
    if (chi2) out.log_exact = std::log1p(*chi2);
    return out;
}

} // namespace permix
