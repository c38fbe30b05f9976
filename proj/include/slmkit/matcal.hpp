// Layerwise calibration core: streaming Gram accumulation H = XᵀX, damped
// factorization of H + λI, the reconstruction objective tr((W-Ŵ)ᵀH(W-Ŵ)),
// and support-constrained least-squares refits. Shared by the pruning and
// quantization solvers.
#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "slmkit/matrix.hpp"

namespace slmkit::matcal {

struct LayerCalibration {
    std::size_t dim = 0;
    DenseMatrix gram;  // d×d, symmetric PSD
    std::size_t n_tokens = 0;
    std::optional<DenseMatrix> cross;  // B = H·W cache, d×p

    explicit LayerCalibration(std::size_t d) : dim(d), gram(d, d) {}
};

struct DampedFactor {
    std::size_t dim = 0;
    DenseMatrix lower_factor;  // Cholesky of H + λI
    double lambda = 0.0;
    DenseMatrix inverse;  // explicit (H + λI)⁻¹
};

inline void gram_accumulate(LayerCalibration& calib, const DenseMatrix& x) {
    if (x.cols() != calib.dim) {
        throw std::invalid_argument("gram_accumulate: X has " + std::to_string(x.cols()) +
                                    " cols, calibration dim is " + std::to_string(calib.dim));
    }
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const double* row = x.row_ptr(r);
        for (std::size_t i = 0; i < calib.dim; ++i) {
            const double vi = row[i];
            if (vi == 0.0) continue;
            double* grow = calib.gram.row_ptr(i);
            for (std::size_t j = 0; j < calib.dim; ++j) grow[j] += vi * row[j];
        }
    }
    // symmetrize to suppress accumulation drift
    for (std::size_t i = 0; i < calib.dim; ++i) {
        for (std::size_t j = i + 1; j < calib.dim; ++j) {
            const double m = 0.5 * (calib.gram(i, j) + calib.gram(j, i));
            calib.gram(i, j) = m;
            calib.gram(j, i) = m;
        }
    }
    calib.n_tokens += x.rows();
    calib.cross.reset();
}

inline double mean_diagonal(const DenseMatrix& h) {
    double s = 0.0;
    for (std::size_t i = 0; i < h.rows(); ++i) s += h(i, i);
    return h.rows() ? s / static_cast<double>(h.rows()) : 0.0;
}

inline DenseMatrix damped_gram(const DenseMatrix& h, double lambda) {
    DenseMatrix hd = h;
    for (std::size_t i = 0; i < hd.rows(); ++i) hd(i, i) += lambda;
    return hd;
}

inline double damping_lambda(const DenseMatrix& h, double lambda_rel) {
    double lam = lambda_rel * mean_diagonal(h);
    // dead calibration (all-zero H) still needs a strictly positive shift
    if (lam <= 0.0) lam = lambda_rel;
    return lam;
}

inline DampedFactor damp_and_factor(const LayerCalibration& calib, double lambda_rel) {
    if (!(lambda_rel > 0.0)) throw std::invalid_argument("damp_and_factor: lambda_rel must be > 0");
    DampedFactor f;
    f.dim = calib.dim;
    f.lambda = damping_lambda(calib.gram, lambda_rel);
    const DenseMatrix hd = damped_gram(calib.gram, f.lambda);
    f.lower_factor = cholesky_lower(hd);
    f.inverse = cholesky_solve(f.lower_factor, DenseMatrix::identity(calib.dim));
    return f;
}

// tr((W-Ŵ)ᵀ H (W-Ŵ)) = ‖X(W-Ŵ)‖²_F, computed without X.
inline double reconstruction_error(const LayerCalibration& calib, const DenseMatrix& w,
                                   const DenseMatrix& what) {
    if (w.rows() != calib.dim || what.rows() != w.rows() || what.cols() != w.cols()) {
        throw std::invalid_argument("reconstruction_error: shape mismatch");
    }
    const DenseMatrix d = subtract(w, what);
    const DenseMatrix hd = matmul(calib.gram, d);
    double err = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) err += d.raw()[i] * hd.raw()[i];
    return err < 0.0 ? 0.0 : err;  // clamp tiny negative round-off
}

using IndexSet = std::vector<std::size_t>;

inline DenseMatrix select_rows(const DenseMatrix& m, const IndexSet& idx) {
    DenseMatrix out(idx.size(), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(idx[i], j);
    return out;
}

inline DenseMatrix select_submatrix(const DenseMatrix& m, const IndexSet& rows, const IndexSet& cols) {
    DenseMatrix out(rows.size(), cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = m(rows[i], cols[j]);
    return out;
}

// Exact minimizer of the reconstruction error restricted to support S:
//   Ŵ_S = (H_SS + λI)⁻¹ H_{S,:} W
inline DenseMatrix refit_support(const LayerCalibration& calib, const DenseMatrix& w,
                                 const IndexSet& keep, double lambda_rel) {
    if (keep.empty()) throw std::invalid_argument("refit_support: empty support");
    for (std::size_t i : keep)
        if (i >= calib.dim) throw std::invalid_argument("refit_support: index out of range");
    const double lam = damping_lambda(calib.gram, lambda_rel);
    DenseMatrix hss = select_submatrix(calib.gram, keep, keep);
    for (std::size_t i = 0; i < keep.size(); ++i) hss(i, i) += lam;
    // rhs = H_{S,:} W
    DenseMatrix rhs(keep.size(), w.cols());
    for (std::size_t i = 0; i < keep.size(); ++i) {
        const double* hrow = calib.gram.row_ptr(keep[i]);
        double* orow = rhs.row_ptr(i);
        for (std::size_t k = 0; k < calib.dim; ++k) {
            const double hv = hrow[k];
            if (hv == 0.0) continue;
            const double* wrow = w.row_ptr(k);
            for (std::size_t j = 0; j < w.cols(); ++j) orow[j] += hv * wrow[j];
        }
    }
    return cholesky_solve(cholesky_lower(hss), rhs);
}

// Places refit rows back on their support, zero elsewhere.
inline DenseMatrix embed_support(const DenseMatrix& ws, const IndexSet& keep, std::size_t dim) {
    DenseMatrix out(dim, ws.cols());
    for (std::size_t i = 0; i < keep.size(); ++i)
        for (std::size_t j = 0; j < ws.cols(); ++j) out(keep[i], j) = ws(i, j);
    return out;
}

}  // namespace slmkit::matcal
