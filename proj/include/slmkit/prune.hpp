// Structured pruning over the layerwise reconstruction objective: greedy
// group-OBS backward elimination with compensation, swap local search, a
// brute-force enumeration oracle, and gradual removal schedules.
#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "slmkit/matcal.hpp"
#include "slmkit/matrix.hpp"

namespace slmkit::prune {

using matcal::IndexSet;
using matcal::LayerCalibration;

enum class GroupKind { mlp_neuron, attn_head };

struct GroupPartition {
    std::size_t dim = 0;
    std::vector<IndexSet> groups;  // disjoint, covering 0..dim
    GroupKind kind = GroupKind::mlp_neuron;

    static GroupPartition singletons(std::size_t dim) {
        GroupPartition p;
        p.dim = dim;
        p.kind = GroupKind::mlp_neuron;
        p.groups.resize(dim);
        for (std::size_t i = 0; i < dim; ++i) p.groups[i] = {i};
        return p;
    }
    static GroupPartition heads(std::size_t n_heads, std::size_t head_dim) {
        GroupPartition p;
        p.dim = n_heads * head_dim;
        p.kind = GroupKind::attn_head;
        p.groups.resize(n_heads);
        for (std::size_t h = 0; h < n_heads; ++h)
            for (std::size_t k = 0; k < head_dim; ++k) p.groups[h].push_back(h * head_dim + k);
        return p;
    }

    void validate() const {
        std::vector<char> seen(dim, 0);
        for (const auto& g : groups)
            for (std::size_t i : g) {
                if (i >= dim || seen[i]) throw std::invalid_argument("GroupPartition: groups must partition 0..dim");
                seen[i] = 1;
            }
        for (char c : seen)
            if (!c) throw std::invalid_argument("GroupPartition: groups must cover 0..dim");
    }
};

struct PruneStep {
    std::size_t removed_group = 0;
    double score = 0.0;      // ΔE of the removal (phase 1) or objective delta (phase 2)
    double objective = 0.0;  // objective after the step
};

struct PruneResult {
    IndexSet kept;           // surviving group indices, sorted
    DenseMatrix w_hat;       // refit weights on the kept input dims (|rows(S)|×p)
    double objective = 0.0;  // reconstruction error of w_hat embedded on the kept support
    std::vector<PruneStep> trace;
};

struct PruneConfig {
    std::size_t k_remove = 0;
    std::size_t n_steps = 1;
    std::size_t swap_iters_max = 16;
    double lambda_rel = 0.01;
    bool exact_refit_every_step = true;
};

// Flattens kept group indices into the kept input-dimension set, sorted.
inline IndexSet kept_dims(const GroupPartition& partition, const IndexSet& kept_groups) {
    IndexSet dims;
    for (std::size_t g : kept_groups)
        for (std::size_t i : partition.groups[g]) dims.push_back(i);
    std::sort(dims.begin(), dims.end());
    return dims;
}

// Group-OBS score: exact objective increase of zeroing group g with optimal
// compensation, ΔE_g = tr(W_gᵀ [(H⁻¹)_gg]⁻¹ W_g). hinv is the damped inverse
// restricted to the current live support; W rows follow the same ordering.
inline double obs_group_score(const DenseMatrix& hinv, const DenseMatrix& w, const IndexSet& group) {
    const DenseMatrix hinv_gg = matcal::select_submatrix(hinv, group, group);
    const DenseMatrix w_g = matcal::select_rows(w, group);
    DenseMatrix solved;
    try {
        solved = cholesky_solve(cholesky_lower(hinv_gg), w_g);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(std::string("obs_group_score: singular (H^-1)_gg block: ") + e.what());
    }
    double score = 0.0;
    for (std::size_t i = 0; i < w_g.size(); ++i) score += w_g.raw()[i] * solved.raw()[i];
    return score < 0.0 ? 0.0 : score;
}

namespace detail {

// Mutable greedy state over the live support: weight rows, damped inverse
// Hessian on the live dims, and the dim ordering they share.
struct LiveState {
    IndexSet dims;        // original dim ids, position-aligned with w rows / hinv
    DenseMatrix w;        // live rows of the (compensated) weight matrix
    DenseMatrix hinv;     // inverse of damped H restricted to live dims
};

inline IndexSet positions_of(const IndexSet& dims, const IndexSet& subset) {
    IndexSet pos;
    for (std::size_t d : subset) {
        const auto it = std::lower_bound(dims.begin(), dims.end(), d);
        pos.push_back(static_cast<std::size_t>(it - dims.begin()));
    }
    return pos;
}

// Removes the given positions from the live state: applies the OBS
// compensation W ← W − H⁻¹_{:,g}[(H⁻¹)_gg]⁻¹ W_g and downdates the inverse
// via the block-inversion identity.
inline void remove_positions(LiveState& s, const IndexSet& pos_sorted) {
    const DenseMatrix hinv_gg = matcal::select_submatrix(s.hinv, pos_sorted, pos_sorted);
    const DenseMatrix w_g = matcal::select_rows(s.w, pos_sorted);
    const DenseMatrix L = cholesky_lower(hinv_gg);
    const DenseMatrix comp = cholesky_solve(L, w_g);  // [(H⁻¹)_gg]⁻¹ W_g

    const std::size_t n = s.dims.size();
    IndexSet keep_pos;
    {
        std::vector<char> drop(n, 0);
        for (std::size_t p : pos_sorted) drop[p] = 1;
        for (std::size_t i = 0; i < n; ++i)
            if (!drop[i]) keep_pos.push_back(i);
    }

    // H⁻¹_{r,g}, r = kept rows
    const std::size_t g = pos_sorted.size();
    DenseMatrix hinv_rg(keep_pos.size(), g);
    for (std::size_t i = 0; i < keep_pos.size(); ++i)
        for (std::size_t j = 0; j < g; ++j) hinv_rg(i, j) = s.hinv(keep_pos[i], pos_sorted[j]);

    // weight compensation on kept rows
    DenseMatrix w_new(keep_pos.size(), s.w.cols());
    for (std::size_t i = 0; i < keep_pos.size(); ++i)
        for (std::size_t c = 0; c < s.w.cols(); ++c) {
            double v = s.w(keep_pos[i], c);
            for (std::size_t j = 0; j < g; ++j) v -= hinv_rg(i, j) * comp(j, c);
            w_new(i, c) = v;
        }

    // inverse downdate: Hinv_rr − Hinv_rg (Hinv_gg)⁻¹ Hinv_gr
    const DenseMatrix correction = cholesky_solve(L, hinv_rg.transposed());  // g × r
    DenseMatrix hinv_new(keep_pos.size(), keep_pos.size());
    for (std::size_t i = 0; i < keep_pos.size(); ++i)
        for (std::size_t k = 0; k < keep_pos.size(); ++k) {
            double v = s.hinv(keep_pos[i], keep_pos[k]);
            for (std::size_t j = 0; j < g; ++j) v -= hinv_rg(i, j) * correction(j, k);
            hinv_new(i, k) = v;
        }

    IndexSet dims_new;
    for (std::size_t i : keep_pos) dims_new.push_back(s.dims[i]);
    s.dims = std::move(dims_new);
    s.w = std::move(w_new);
    s.hinv = std::move(hinv_new);
}

inline double refit_objective(const LayerCalibration& calib, const DenseMatrix& w,
                              const GroupPartition& partition, const IndexSet& kept_groups,
                              double lambda_rel) {
    const IndexSet dims = kept_dims(partition, kept_groups);
    const DenseMatrix ws = matcal::refit_support(calib, w, dims, lambda_rel);
    return matcal::reconstruction_error(calib, w, matcal::embed_support(ws, dims, calib.dim));
}

}  // namespace detail

// Greedy group-OBS elimination (phase 1) followed by best-improvement swap
// local search on the exact refit objective (phase 2).
inline PruneResult prune_groups(const LayerCalibration& calib, const DenseMatrix& w,
                                const GroupPartition& partition, const PruneConfig& cfg) {
    partition.validate();
    if (w.rows() != calib.dim) throw std::invalid_argument("prune_groups: W rows != calibration dim");
    if (cfg.k_remove >= partition.groups.size() && cfg.k_remove != 0) {
        throw std::invalid_argument("prune_groups: k_remove must be < number of groups");
    }

    const matcal::DampedFactor f = matcal::damp_and_factor(calib, cfg.lambda_rel);

    detail::LiveState state;
    state.dims.resize(calib.dim);
    for (std::size_t i = 0; i < calib.dim; ++i) state.dims[i] = i;
    state.w = w;
    state.hinv = f.inverse;

    std::vector<std::size_t> live_groups(partition.groups.size());
    for (std::size_t g = 0; g < live_groups.size(); ++g) live_groups[g] = g;
    IndexSet removed;

    PruneResult res;

    // phase 1: greedy backward elimination
    for (std::size_t step = 0; step < cfg.k_remove; ++step) {
        double best_score = std::numeric_limits<double>::infinity();
        std::size_t best_g = 0;
        for (std::size_t g : live_groups) {
            const IndexSet pos = detail::positions_of(state.dims, partition.groups[g]);
            const double score = obs_group_score(state.hinv, state.w, pos);
            if (score < best_score) {  // ties keep the lowest group index (scan order)
                best_score = score;
                best_g = g;
            }
        }
        IndexSet pos = detail::positions_of(state.dims, partition.groups[best_g]);
        std::sort(pos.begin(), pos.end());
        try {
            detail::remove_positions(state, pos);
        } catch (const std::runtime_error&) {
            // inverse downdate went bad: re-factor H on the remaining support
            IndexSet dims_left;
            for (std::size_t d : state.dims) {
                bool in_group = false;
                for (std::size_t gi : partition.groups[best_g]) in_group |= (gi == d);
                if (!in_group) dims_left.push_back(d);
            }
            DenseMatrix h_sub = matcal::select_submatrix(calib.gram, dims_left, dims_left);
            const double lam = matcal::damping_lambda(calib.gram, cfg.lambda_rel);
            for (std::size_t i = 0; i < dims_left.size(); ++i) h_sub(i, i) += lam;
            state.hinv = spd_inverse(h_sub);
            const DenseMatrix ws = matcal::refit_support(calib, w, dims_left, cfg.lambda_rel);
            state.dims = dims_left;
            state.w = ws;
        }
        live_groups.erase(std::remove(live_groups.begin(), live_groups.end(), best_g), live_groups.end());
        removed.push_back(best_g);

        PruneStep ps;
        ps.removed_group = best_g;
        ps.score = best_score;
        ps.objective = detail::refit_objective(calib, w, partition, live_groups, cfg.lambda_rel);
        res.trace.push_back(ps);
    }

    IndexSet kept = live_groups;
    std::sort(kept.begin(), kept.end());
    std::sort(removed.begin(), removed.end());
    double objective = detail::refit_objective(calib, w, partition, kept, cfg.lambda_rel);

    // phase 2: best-improvement swaps on the exact refit objective
    for (std::size_t iter = 0; iter < cfg.swap_iters_max && !removed.empty(); ++iter) {
        double best_obj = objective;
        std::size_t best_out = 0, best_in = 0;
        bool improved = false;
        for (std::size_t oi = 0; oi < kept.size(); ++oi) {
            for (std::size_t ri = 0; ri < removed.size(); ++ri) {
                IndexSet cand = kept;
                cand[oi] = removed[ri];
                std::sort(cand.begin(), cand.end());
                const double obj = detail::refit_objective(calib, w, partition, cand, cfg.lambda_rel);
                if (obj < best_obj) {
                    best_obj = obj;
                    best_out = oi;
                    best_in = ri;
                    improved = true;
                }
            }
        }
        if (!improved) break;
        const std::size_t going_out = kept[best_out];
        kept[best_out] = removed[best_in];
        removed[best_in] = going_out;
        std::sort(kept.begin(), kept.end());
        std::sort(removed.begin(), removed.end());
        PruneStep ps;
        ps.removed_group = going_out;
        ps.score = objective - best_obj;
        ps.objective = best_obj;
        res.trace.push_back(ps);
        objective = best_obj;
    }

    const IndexSet dims = kept_dims(partition, kept);
    res.kept = kept;
    res.w_hat = matcal::refit_support(calib, w, dims, cfg.lambda_rel);
    res.objective = matcal::reconstruction_error(calib, w, matcal::embed_support(res.w_hat, dims, calib.dim));
    return res;
}

inline std::uint64_t binomial(std::size_t n, std::size_t k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    std::uint64_t r = 1;
    for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

// Exhaustive oracle: exact refit on every support of the requested size.
inline PruneResult brute_force_prune(const LayerCalibration& calib, const DenseMatrix& w,
                                     const GroupPartition& partition, std::size_t k_remove,
                                     double lambda_rel = 0.01) {
    partition.validate();
    const std::size_t n = partition.groups.size();
    if (k_remove >= n) throw std::invalid_argument("brute_force_prune: k_remove must be < number of groups");
    if (binomial(n, k_remove) > 200000) {
        throw std::invalid_argument("brute_force_prune: combinatorial budget exceeded");
    }
    const std::size_t keep_n = n - k_remove;
    IndexSet kept(keep_n);
    for (std::size_t i = 0; i < keep_n; ++i) kept[i] = i;

    PruneResult best;
    best.objective = std::numeric_limits<double>::infinity();
    bool more = true;
    while (more) {
        const double obj = detail::refit_objective(calib, w, partition, kept, lambda_rel);
        // lexicographic enumeration keeps the smallest set among exact ties
        if (obj < best.objective) {
            best.objective = obj;
            best.kept = kept;
        }
        // advance to next combination of keep_n out of n
        more = false;
        for (std::size_t i = keep_n; i-- > 0;) {
            if (kept[i] < i + n - keep_n) {
                ++kept[i];
                for (std::size_t j = i + 1; j < keep_n; ++j) kept[j] = kept[j - 1] + 1;
                more = true;
                break;
            }
        }
    }
    const IndexSet dims = kept_dims(partition, best.kept);
    best.w_hat = matcal::refit_support(calib, w, dims, lambda_rel);
    best.objective =
        matcal::reconstruction_error(calib, w, matcal::embed_support(best.w_hat, dims, calib.dim));
    return best;
}

// Splits total_remove across n_steps as evenly as possible, remainder first.
inline std::vector<std::size_t> gradual_schedule(std::size_t total_remove, std::size_t n_steps) {
    if (n_steps < 1) throw std::invalid_argument("gradual_schedule: n_steps must be >= 1");
    if (n_steps > total_remove) throw std::invalid_argument("gradual_schedule: n_steps exceeds total_remove");
    const std::size_t base = total_remove / n_steps;
    const std::size_t rem = total_remove % n_steps;
    std::vector<std::size_t> out(n_steps, base);
    for (std::size_t i = 0; i < rem; ++i) ++out[i];
    return out;
}

}  // namespace slmkit::prune
