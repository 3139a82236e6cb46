#ifndef PERMIX_MATRIX_HPP
#define PERMIX_MATRIX_HPP

#include <cstddef>
#include <vector>

#include "permix/errors.hpp"

namespace permix {

// Dense square matrix, row-major, value semantics. Kept deliberately small:
// the sizes in this project are tiny (n <= 30) and clarity beats cleverness.
class SquareMatrix {
public:
    SquareMatrix() = default;

    explicit SquareMatrix(std::size_t n, double fill = 0.0)
        : n_(n), data_(n * n, fill) {}

    static SquareMatrix identity(std::size_t n) {
        SquareMatrix m(n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static SquareMatrix constant(std::size_t n, double v) {
        return SquareMatrix(n, v);
    }

    std::size_t size() const { return n_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    SquareMatrix transposed() const {
        SquareMatrix t(n_);
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < n_; ++j)
                t(j, i) = (*this)(i, j);
        return t;
    }

    void symmetrize() {
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = i + 1; j < n_; ++j) {
                double v = 0.5 * ((*this)(i, j) + (*this)(j, i));
                (*this)(i, j) = v;
                (*this)(j, i) = v;
            }
    }

    // Reorder rows and columns by the same permutation: out(i,j) = in(p[i], p[j]).
    SquareMatrix permuted(const std::vector<std::size_t>& p) const {
        if (p.size() != n_) throw validation_error("permutation size mismatch");
        SquareMatrix out(n_);
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < n_; ++j)
                out(i, j) = (*this)(p[i], p[j]);
        return out;
    }

private:
    std::size_t n_ = 0;
    std::vector<double> data_;
};

} // namespace permix

#endif
