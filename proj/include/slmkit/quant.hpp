// Post-training weight quantization: uniform integer grids (fit + RTN),
// GPTQ-style sequential error compensation, QuantEase cyclic coordinate
// descent, and SmoothQuant scale migration. All solvers minimize the
// layerwise objective tr((W-Ŵ)ᵀH(W-Ŵ)) over their respective grids.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "slmkit/fp8.hpp"
#include "slmkit/matcal.hpp"
#include "slmkit/matrix.hpp"

namespace slmkit::quant {

enum class Scheme { symmetric, asymmetric };
enum class Granularity { per_channel, per_tensor };

struct QuantGrid {
    int bits = 4;
    Scheme scheme = Scheme::symmetric;
    Granularity granularity = Granularity::per_channel;
    std::vector<double> scales;       // one per output channel, or size 1 per-tensor
    std::vector<int> zero_points;     // asymmetric only; zeros otherwise
    int q_min = 0;
    int q_max = 0;

    double scale_for(std::size_t col) const {
        return granularity == Granularity::per_channel ? scales[col] : scales[0];
    }
    int zero_point_for(std::size_t col) const {
        if (zero_points.empty()) return 0;
        return granularity == Granularity::per_channel ? zero_points[col] : zero_points[0];
    }
    // std::round rounds halves away from zero, which is the grid's tie rule.
    int encode(double x, std::size_t col) const {
        const double code = std::round(x / scale_for(col) + zero_point_for(col));
        return static_cast<int>(std::clamp(code, static_cast<double>(q_min), static_cast<double>(q_max)));
    }
    double decode(int code, std::size_t col) const {
        return (code - zero_point_for(col)) * scale_for(col);
    }
};

struct QuantizedMatrix {
    std::vector<int> codes;  // row-major d×p
    std::size_t rows = 0;
    std::size_t cols = 0;
    QuantGrid grid;

    int& code(std::size_t r, std::size_t c) { return codes[r * cols + c]; }
    int code(std::size_t r, std::size_t c) const { return codes[r * cols + c]; }

    DenseMatrix dequantize() const {
        DenseMatrix out(rows, cols);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) out(r, c) = grid.decode(code(r, c), c);
        return out;
    }
};

// Per-output-channel (column of W) or per-tensor grid fit.
inline QuantGrid fit_grid(const DenseMatrix& w, int bits, Scheme scheme, Granularity granularity) {
    if (bits < 2 || bits > 8) throw std::invalid_argument("fit_grid: bits must be in [2, 8]");
    QuantGrid g;
    g.bits = bits;
    g.scheme = scheme;
    g.granularity = granularity;
    if (scheme == Scheme::symmetric) {
        g.q_min = -(1 << (bits - 1));
        g.q_max = (1 << (bits - 1)) - 1;
    } else {
        g.q_min = 0;
        g.q_max = (1 << bits) - 1;
    }
    const std::size_t n_ch = granularity == Granularity::per_channel ? w.cols() : 1;
    g.scales.assign(n_ch, 1.0);
    if (scheme == Scheme::asymmetric) g.zero_points.assign(n_ch, 0);

    auto fit_channel = [&](std::size_t ch, double lo, double hi) {
        if (scheme == Scheme::symmetric) {
            const double absmax = std::max(std::fabs(lo), std::fabs(hi));
            g.scales[ch] = absmax > 0.0 ? absmax / g.q_max : 1.0;  // all-zero channel floor
        } else {
            const double range = hi - lo;
            if (range <= 0.0) {
                g.scales[ch] = 1.0;
                g.zero_points[ch] = std::clamp(static_cast<int>(std::round(-lo)), g.q_min, g.q_max);
            } else {
                g.scales[ch] = range / (g.q_max - g.q_min);
                g.zero_points[ch] =
                    std::clamp(static_cast<int>(std::round(-lo / g.scales[ch])), g.q_min, g.q_max);
            }
        }
    };

    if (granularity == Granularity::per_channel) {
        for (std::size_t c = 0; c < w.cols(); ++c) {
            double lo = 0.0, hi = 0.0;
            for (std::size_t r = 0; r < w.rows(); ++r) {
                lo = std::min(lo, w(r, c));
                hi = std::max(hi, w(r, c));
            }
            fit_channel(c, lo, hi);
        }
    } else {
        double lo = 0.0, hi = 0.0;
        for (double v : w.raw()) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        fit_channel(0, lo, hi);
    }
    return g;
}

inline QuantizedMatrix rtn_quantize(const DenseMatrix& w, const QuantGrid& grid) {
    QuantizedMatrix q;
    q.rows = w.rows();
    q.cols = w.cols();
    q.grid = grid;
    q.codes.resize(w.size());
    for (std::size_t r = 0; r < w.rows(); ++r)
        for (std::size_t c = 0; c < w.cols(); ++c) q.code(r, c) = grid.encode(w(r, c), c);
    return q;
}

// Sequential per-input-dim quantization with OBS error compensation on the
// not-yet-quantized rows, driven by the damped inverse Hessian.
inline QuantizedMatrix gptq_quantize(const DenseMatrix& w, const matcal::LayerCalibration& calib,
                                     const QuantGrid& grid, double lambda_rel) {
    if (w.rows() != calib.dim) {
        throw std::invalid_argument("gptq_quantize: W rows " + std::to_string(w.rows()) +
                                    " != calibration dim " + std::to_string(calib.dim));
    }
    const matcal::DampedFactor f = matcal::damp_and_factor(calib, lambda_rel);
    const std::size_t d = w.rows(), p = w.cols();

    // hinv holds the inverse Hessian of the not-yet-quantized dims; after each
    // dim is frozen it is downdated by the rank-one Schur complement.
    DenseMatrix hinv = f.inverse;
    DenseMatrix work = w;
    QuantizedMatrix q;
    q.rows = d;
    q.cols = p;
    q.grid = grid;
    q.codes.resize(d * p);

    for (std::size_t j = 0; j < d; ++j) {
        const double hjj = hinv(j, j);
        if (!(hjj > 0.0)) {
            throw std::runtime_error("gptq_quantize: non-positive inverse-Hessian diagonal at dim " +
                                     std::to_string(j));
        }
        for (std::size_t c = 0; c < p; ++c) {
            const int code = grid.encode(work(j, c), c);
            q.code(j, c) = code;
            const double residual = work(j, c) - grid.decode(code, c);
            if (residual == 0.0) continue;
            for (std::size_t i = j + 1; i < d; ++i) {
                work(i, c) -= hinv(i, j) / hjj * residual;
            }
        }
        for (std::size_t i = j + 1; i < d; ++i) {
            const double fac = hinv(i, j) / hjj;
            if (fac == 0.0) continue;
            for (std::size_t k = j + 1; k < d; ++k) hinv(i, k) -= fac * hinv(j, k);
        }
    }
    return q;
}

// QuantEase: cyclic coordinate descent over (input dim, output channel) pairs.
// Each update snaps the unconstrained coordinate minimizer to the grid, which
// never increases the damped quadratic; optional trace records the objective
// after every coordinate touch.
struct QuantEaseResult {
    QuantizedMatrix quantized;
    std::size_t sweeps_run = 0;
    std::vector<double> objective_trace;  // filled only when trace=true
};

inline QuantEaseResult quantease_sweep(const DenseMatrix& w, const QuantizedMatrix& what0,
                                       const matcal::LayerCalibration& calib, const QuantGrid& grid,
                                       std::size_t n_sweeps, double lambda_rel, bool trace = false) {
    if (what0.rows != w.rows() || what0.cols != w.cols()) {
        throw std::invalid_argument("quantease_sweep: warm start shape mismatch");
    }
    const std::size_t d = w.rows(), p = w.cols();
    const double lam = matcal::damping_lambda(calib.gram, lambda_rel);
    const DenseMatrix hd = matcal::damped_gram(calib.gram, lam);

    QuantEaseResult res;
    res.quantized = what0;
    res.quantized.grid = grid;
    QuantizedMatrix& q = res.quantized;

    DenseMatrix what = q.dequantize();
    const DenseMatrix b = matmul(hd, w);     // B = (H+λI)W, cached
    DenseMatrix hwhat = matmul(hd, what);    // maintained incrementally

    // Objective per column: (w_c - ŵ_c)ᵀ (H+λI) (w_c - ŵ_c), summed over columns.
    auto total_objective = [&]() {
        double obj = 0.0;
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t c = 0; c < p; ++c)
                obj += (w(i, c) - what(i, c)) * (b(i, c) - hwhat(i, c));
        return obj;
    };
    double obj = trace ? total_objective() : 0.0;
    if (trace) res.objective_trace.push_back(obj);

    for (std::size_t sweep = 0; sweep < n_sweeps; ++sweep) {
        bool changed = false;
        for (std::size_t c = 0; c < p; ++c) {
            for (std::size_t j = 0; j < d; ++j) {
                const double hjj = hd(j, j);
                const double grad_residual = b(j, c) - hwhat(j, c);  // (H(w - ŵ))_jc
                const double w_star = what(j, c) + grad_residual / hjj;
                const int new_code = grid.encode(w_star, c);
                const double new_val = grid.decode(new_code, c);
                const double delta = new_val - what(j, c);
                if (delta != 0.0) {
                    // Δf = -2δ(H(w-ŵ))_j + δ²H_jj
                    if (trace) obj += -2.0 * delta * grad_residual + delta * delta * hjj;
                    q.code(j, c) = new_code;
                    what(j, c) = new_val;
                    for (std::size_t i = 0; i < d; ++i) hwhat(i, c) += hd(i, j) * delta;
                    changed = true;
                }
                if (trace) res.objective_trace.push_back(obj);
            }
        }
        ++res.sweeps_run;
        if (!changed) break;
    }
    return res;
}

// SmoothQuant scale migration: s_j = act_absmax_j^α / max|W_{j,:}|^(1-α).
// Dividing activations by s and multiplying weight rows by s leaves XW exact.
struct SmoothResult {
    std::vector<double> scales;
    DenseMatrix w_scaled;
};

inline SmoothResult smoothquant_scales(const std::vector<double>& act_absmax, const DenseMatrix& w,
                                       double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("smoothquant_scales: alpha outside [0,1]");
    if (act_absmax.size() != w.rows()) throw std::invalid_argument("smoothquant_scales: absmax size mismatch");
    constexpr double kFloor = 1e-8;
    SmoothResult r;
    r.scales.resize(w.rows());
    r.w_scaled = w;
    for (std::size_t j = 0; j < w.rows(); ++j) {
        double wmax = 0.0;
        for (std::size_t c = 0; c < w.cols(); ++c) wmax = std::max(wmax, std::fabs(w(j, c)));
        const double a = std::max(act_absmax[j], kFloor);
        const double wm = std::max(wmax, kFloor);
        double s = std::pow(a, alpha) / std::pow(wm, 1.0 - alpha);
        if (s < kFloor) s = kFloor;
        r.scales[j] = s;
        for (std::size_t c = 0; c < w.cols(); ++c) r.w_scaled(j, c) = s * w(j, c);
    }
    return r;
}

// Snaps every entry to the nearest e4m3 value (weight-only FP8 simulation).
inline DenseMatrix fp8_quantize_matrix(const DenseMatrix& w) {
    DenseMatrix out = w;
    for (double& v : out.raw()) v = fp8::quantize_value(v);
    return out;
}

}  // namespace slmkit::quant
