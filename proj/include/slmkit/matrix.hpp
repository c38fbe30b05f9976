// Dense row-major matrix and the small direct linear algebra kernels the
// compression solvers need (Cholesky, triangular solves, explicit inverses).
// Everything is 64-bit; checkpoints downcast to 32-bit at the I/O boundary.
#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace slmkit {

class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw std::invalid_argument("DenseMatrix: data length " + std::to_string(data_.size()) +
                                        " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
        }
    }

    static DenseMatrix identity(std::size_t n) {
        DenseMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double* row_ptr(std::size_t r) { return data_.data() + r * cols_; }
    const double* row_ptr(std::size_t r) const { return data_.data() + r * cols_; }

    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double frobenius_norm() const {
        double s = 0.0;
        for (double v : data_) s += v * v;
        return std::sqrt(s);
    }

    DenseMatrix transposed() const {
        DenseMatrix t(cols_, rows_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
        return t;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner dims " + std::to_string(a.cols()) + " vs " +
                                    std::to_string(b.rows()));
    }
    DenseMatrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* arow = a.row_ptr(i);
        double* orow = out.row_ptr(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double av = arow[k];
            if (av == 0.0) continue;
            const double* brow = b.row_ptr(k);
            for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

// AᵀA without forming Aᵀ.
inline DenseMatrix gram_of(const DenseMatrix& a) {
    DenseMatrix out(a.cols(), a.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const double* row = a.row_ptr(r);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double vi = row[i];
            if (vi == 0.0) continue;
            double* orow = out.row_ptr(i);
            for (std::size_t j = 0; j < a.cols(); ++j) orow[j] += vi * row[j];
        }
    }
    return out;
}

inline DenseMatrix subtract(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("subtract: shape mismatch");
    DenseMatrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out.raw()[i] = a.raw()[i] - b.raw()[i];
    return out;
}

// In-place lower Cholesky of an SPD matrix. Throws with the failing pivot index.
inline DenseMatrix cholesky_lower(const DenseMatrix& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("cholesky: matrix not square");
    const std::size_t n = a.rows();
    DenseMatrix L(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double diag = a(j, j);
        for (std::size_t k = 0; k < j; ++k) diag -= L(j, k) * L(j, k);
        if (!(diag > 0.0)) {
            throw std::runtime_error("cholesky: non-positive pivot " + std::to_string(diag) +
                                     " at index " + std::to_string(j));
        }
        const double ljj = std::sqrt(diag);
        L(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= L(i, k) * L(j, k);
            L(i, j) = s / ljj;
        }
    }
    return L;
}

// Solves (L Lᵀ) X = B given the lower Cholesky factor.
inline DenseMatrix cholesky_solve(const DenseMatrix& L, const DenseMatrix& b) {
    const std::size_t n = L.rows();
    if (b.rows() != n) throw std::invalid_argument("cholesky_solve: rhs rows mismatch");
    DenseMatrix x = b;
    // forward: L y = b
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < i; ++k) {
            const double lik = L(i, k);
            if (lik == 0.0) continue;
            for (std::size_t j = 0; j < x.cols(); ++j) x(i, j) -= lik * x(k, j);
        }
        const double d = L(i, i);
        for (std::size_t j = 0; j < x.cols(); ++j) x(i, j) /= d;
    }
    // backward: Lᵀ x = y
    for (std::size_t ii = n; ii-- > 0;) {
        for (std::size_t k = ii + 1; k < n; ++k) {
            const double lki = L(k, ii);
            if (lki == 0.0) continue;
            for (std::size_t j = 0; j < x.cols(); ++j) x(ii, j) -= lki * x(k, j);
        }
        const double d = L(ii, ii);
        for (std::size_t j = 0; j < x.cols(); ++j) x(ii, j) /= d;
    }
    return x;
}

inline DenseMatrix spd_inverse(const DenseMatrix& a) {
    return cholesky_solve(cholesky_lower(a), DenseMatrix::identity(a.rows()));
}

// Deterministic fill helpers used all over the tests and the toy model init.
inline void fill_gaussian(DenseMatrix& m, std::mt19937_64& rng, double stddev = 1.0) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : m.raw()) v = dist(rng);
}

inline DenseMatrix random_gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed, double stddev = 1.0) {
    DenseMatrix m(rows, cols);
    std::mt19937_64 rng(seed);
    fill_gaussian(m, rng, stddev);
    return m;
}

// Random SPD matrix AᵀA + eps·I, a standard test-instance generator.
inline DenseMatrix random_spd(std::size_t n, std::uint64_t seed, double eps = 1e-3) {
    DenseMatrix a = random_gaussian(n + 2, n, seed);
    DenseMatrix h = gram_of(a);
    for (std::size_t i = 0; i < n; ++i) h(i, i) += eps;
    return h;
}

}  // namespace slmkit
