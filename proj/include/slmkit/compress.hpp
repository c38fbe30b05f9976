// Model-level compression: tap-based calibration collection, structured
// pruning of MLP neurons and attention heads, and whole-model weight
// quantization with per-projection reconstruction reports.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "slmkit/distill.hpp"
#include "slmkit/matcal.hpp"
#include "slmkit/prune.hpp"
#include "slmkit/quant.hpp"
#include "slmkit/toylm.hpp"

namespace slmkit::compress {

struct TapCalibration {
    matcal::LayerCalibration calib;
    std::vector<double> act_absmax;  // per input dim, over all calibration tokens

    explicit TapCalibration(std::size_t d) : calib(d), act_absmax(d, 0.0) {}
};

// Runs the calibration sequences through the model once and accumulates a
// Gram matrix (plus activation absmax) for every requested tap.
inline std::map<std::string, TapCalibration> collect_calibrations(
    const toylm::ToyModel& model, const std::vector<std::vector<int>>& sequences,
    const toylm::TapRequest& req) {
    if (sequences.empty()) throw std::invalid_argument("collect_calibrations: no calibration sequences");
    std::map<std::string, TapCalibration> out;
    for (const auto& seq : sequences) {
        const auto fr = toylm::forward(model, seq, &req);
        for (const auto& [name, x] : fr.taps) {
            auto it = out.find(name);
            if (it == out.end()) it = out.emplace(name, TapCalibration(x.cols())).first;
            matcal::gram_accumulate(it->second.calib, x);
            for (std::size_t r = 0; r < x.rows(); ++r) {
                const double* row = x.row_ptr(r);
                for (std::size_t c = 0; c < x.cols(); ++c) {
                    it->second.act_absmax[c] = std::max(it->second.act_absmax[c], std::fabs(row[c]));
                }
            }
        }
    }
    return out;
}

struct LayerPruneReport {
    prune::PruneResult result;
    std::size_t removed = 0;
};

// Removes n_remove MLP neurons from one layer: refits mlp_down on the
// surviving rows and deletes the matching mlp_gate/mlp_up columns.
inline LayerPruneReport prune_mlp(toylm::ToyModel& model, std::size_t layer, std::size_t n_remove,
                                  const std::vector<std::vector<int>>& calib_sequences,
                                  const prune::PruneConfig& cfg = {}) {
    if (layer >= model.config.n_layers) throw std::invalid_argument("prune_mlp: layer out of range");
    const std::size_t d_int = model.layer_shapes[layer].d_intermediate;
    if (n_remove >= d_int) throw std::invalid_argument("prune_mlp: n_remove must be < d_intermediate");
    if (calib_sequences.empty()) throw std::invalid_argument("prune_mlp: no calibration sequences");
    if (n_remove == 0) {
        // nothing to remove; a damped refit would only perturb the weights
        LayerPruneReport rep;
        for (std::size_t i = 0; i < d_int; ++i) rep.result.kept.push_back(i);
        rep.result.w_hat = model.t.layers[layer].mlp_down;
        return rep;
    }

    toylm::TapRequest req;
    req.layers = {layer};
    req.attn_o_in = false;
    req.mlp_down_in = true;
    const auto taps = collect_calibrations(model, calib_sequences, req);
    const auto& tc = taps.at("layer" + std::to_string(layer) + ".mlp_down_in");

    prune::PruneConfig pc = cfg;
    pc.k_remove = n_remove;
    toylm::LayerTensors& lt = model.t.layers[layer];
    LayerPruneReport rep;
    rep.result = prune::prune_groups(tc.calib, lt.mlp_down, prune::GroupPartition::singletons(d_int), pc);
    rep.removed = n_remove;

    const matcal::IndexSet kept = rep.result.kept;  // singleton groups: group id == dim id
    lt.mlp_down = rep.result.w_hat;
    DenseMatrix gate(model.config.d_model, kept.size()), up(model.config.d_model, kept.size());
    for (std::size_t r = 0; r < model.config.d_model; ++r) {
        for (std::size_t i = 0; i < kept.size(); ++i) {
            gate(r, i) = lt.mlp_gate(r, kept[i]);
            up(r, i) = lt.mlp_up(r, kept[i]);
        }
    }
    lt.mlp_gate = std::move(gate);
    lt.mlp_up = std::move(up);
    model.layer_shapes[layer].d_intermediate = kept.size();
    return rep;
}

// Removes n_remove attention heads from one layer: refits attn_o on the
// surviving head rows and deletes the matching attn_q/k/v columns.
inline LayerPruneReport prune_heads(toylm::ToyModel& model, std::size_t layer, std::size_t n_remove,
                                    const std::vector<std::vector<int>>& calib_sequences,
                                    const prune::PruneConfig& cfg = {}) {
    if (layer >= model.config.n_layers) throw std::invalid_argument("prune_heads: layer out of range");
    const std::size_t n_heads = model.layer_shapes[layer].n_heads;
    const std::size_t hd = model.config.head_dim;
    if (n_remove >= n_heads) throw std::invalid_argument("prune_heads: n_remove must be < head count");
    if (calib_sequences.empty()) throw std::invalid_argument("prune_heads: no calibration sequences");
    if (n_remove == 0) {
        LayerPruneReport rep;
        for (std::size_t h = 0; h < n_heads; ++h) rep.result.kept.push_back(h);
        rep.result.w_hat = model.t.layers[layer].attn_o;
        return rep;
    }

    toylm::TapRequest req;
    req.layers = {layer};
    req.attn_o_in = true;
    req.mlp_down_in = false;
    const auto taps = collect_calibrations(model, calib_sequences, req);
    const auto& tc = taps.at("layer" + std::to_string(layer) + ".attn_o_in");

    prune::PruneConfig pc = cfg;
    pc.k_remove = n_remove;
    toylm::LayerTensors& lt = model.t.layers[layer];
    const auto partition = prune::GroupPartition::heads(n_heads, hd);
    LayerPruneReport rep;
    rep.result = prune::prune_groups(tc.calib, lt.attn_o, partition, pc);
    rep.removed = n_remove;

    const matcal::IndexSet dims = prune::kept_dims(partition, rep.result.kept);
    lt.attn_o = rep.result.w_hat;
    DenseMatrix q(model.config.d_model, dims.size()), k(model.config.d_model, dims.size()),
        v(model.config.d_model, dims.size());
    for (std::size_t r = 0; r < model.config.d_model; ++r) {
        for (std::size_t i = 0; i < dims.size(); ++i) {
            q(r, i) = lt.attn_q(r, dims[i]);
            k(r, i) = lt.attn_k(r, dims[i]);
            v(r, i) = lt.attn_v(r, dims[i]);
        }
    }
    lt.attn_q = std::move(q);
    lt.attn_k = std::move(k);
    lt.attn_v = std::move(v);
    model.layer_shapes[layer].n_heads = rep.result.kept.size();
    return rep;
}

enum class QuantScheme { w4a16_rtn, w4a16_gptq, w4a16_quantease, w8a8_smooth, fp8 };

inline const char* scheme_name(QuantScheme s) {
    switch (s) {
        case QuantScheme::w4a16_rtn: return "W4A16_RTN";
        case QuantScheme::w4a16_gptq: return "W4A16_GPTQ";
        case QuantScheme::w4a16_quantease: return "W4A16_QUANTEASE";
        case QuantScheme::w8a8_smooth: return "W8A8_SMOOTH";
        case QuantScheme::fp8: return "FP8";
    }
    return "?";
}

inline QuantScheme parse_scheme(const std::string& s) {
    for (QuantScheme q : {QuantScheme::w4a16_rtn, QuantScheme::w4a16_gptq, QuantScheme::w4a16_quantease,
                          QuantScheme::w8a8_smooth, QuantScheme::fp8}) {
        if (s == scheme_name(q)) return q;
    }
    throw std::invalid_argument("unknown quantization scheme: " + s);
}

struct ProjectionReport {
    std::string name;
    double recon_error = 0.0;
};

struct QuantizeReport {
    std::vector<ProjectionReport> projections;
    double total_recon_error = 0.0;
    double val_loss_before = 0.0;
    double val_loss_after = 0.0;
    double val_loss_delta = 0.0;
    bool has_val = false;
};

namespace detail {

inline bool scheme_needs_calibration(QuantScheme s) {
    return s == QuantScheme::w4a16_gptq || s == QuantScheme::w4a16_quantease ||
           s == QuantScheme::w8a8_smooth;
}

// Quantizes one projection in place and returns its dequantized simulation.
inline DenseMatrix quantize_projection(const DenseMatrix& w, QuantScheme scheme,
                                       const TapCalibration* tc, double lambda_rel,
                                       std::size_t quantease_sweeps) {
    switch (scheme) {
        case QuantScheme::fp8:
            return quant::fp8_quantize_matrix(w);
        case QuantScheme::w4a16_rtn: {
            const auto grid = quant::fit_grid(w, 4, quant::Scheme::symmetric, quant::Granularity::per_channel);
            return quant::rtn_quantize(w, grid).dequantize();
        }
        case QuantScheme::w4a16_gptq: {
            const auto grid = quant::fit_grid(w, 4, quant::Scheme::symmetric, quant::Granularity::per_channel);
            return quant::gptq_quantize(w, tc->calib, grid, lambda_rel).dequantize();
        }
        case QuantScheme::w4a16_quantease: {
            const auto grid = quant::fit_grid(w, 4, quant::Scheme::symmetric, quant::Granularity::per_channel);
            const auto warm = quant::gptq_quantize(w, tc->calib, grid, lambda_rel);
            return quant::quantease_sweep(w, warm, tc->calib, grid, quantease_sweeps, lambda_rel)
                .quantized.dequantize();
        }
        case QuantScheme::w8a8_smooth: {
            // migrate activation outliers into the weights, quantize the scaled
            // weights at 8 bits, then fold the scales back out
            const auto sm = quant::smoothquant_scales(tc->act_absmax, w, 0.5);
            const auto grid =
                quant::fit_grid(sm.w_scaled, 8, quant::Scheme::symmetric, quant::Granularity::per_channel);
            DenseMatrix deq = quant::rtn_quantize(sm.w_scaled, grid).dequantize();
            for (std::size_t r = 0; r < deq.rows(); ++r)
                for (std::size_t c = 0; c < deq.cols(); ++c) deq(r, c) /= sm.scales[r];
            return deq;
        }
    }
    throw std::logic_error("quantize_projection: unreachable");
}

}  // namespace detail

// Replaces every attention/MLP projection with its dequantized simulation.
// Embeddings, norms and the unembedding are untouched. W8A8 additionally
// turns on dynamic int8 activation fake-quant in the forward pass.
inline QuantizeReport quantize_model(toylm::ToyModel& model, QuantScheme scheme,
                                     const std::vector<std::vector<int>>* calib_sequences,
                                     const synth::SynthDataset* val = nullptr, double lambda_rel = 0.01,
                                     std::size_t quantease_sweeps = 10) {
    const bool needs_calib = detail::scheme_needs_calibration(scheme);
    if (needs_calib && (calib_sequences == nullptr || calib_sequences->empty())) {
        throw std::invalid_argument(std::string("quantize_model: scheme ") + scheme_name(scheme) +
                                    " requires calibration data");
    }
    QuantizeReport rep;
    if (val) {
        rep.has_val = true;
        rep.val_loss_before = distill::eval_model(model, *val, false).loss;
    }

    std::map<std::string, TapCalibration> taps;
    if (calib_sequences && !calib_sequences->empty()) {
        toylm::TapRequest req;
        req.attn_in = true;
        req.attn_o_in = true;
        req.mlp_in = true;
        req.mlp_down_in = true;
        taps = collect_calibrations(model, *calib_sequences, req);
    }

    for (std::size_t l = 0; l < model.config.n_layers; ++l) {
        const std::string p = "layer" + std::to_string(l);
        toylm::LayerTensors& lt = model.t.layers[l];
        const std::pair<DenseMatrix*, std::string> jobs[] = {
            {&lt.attn_q, p + ".attn_in"},   {&lt.attn_k, p + ".attn_in"},
            {&lt.attn_v, p + ".attn_in"},   {&lt.attn_o, p + ".attn_o_in"},
            {&lt.mlp_gate, p + ".mlp_in"},  {&lt.mlp_up, p + ".mlp_in"},
            {&lt.mlp_down, p + ".mlp_down_in"},
        };
        const char* names[] = {"attn_q", "attn_k", "attn_v", "attn_o", "mlp_gate", "mlp_up", "mlp_down"};
        for (std::size_t j = 0; j < 7; ++j) {
            const TapCalibration* tc = nullptr;
            if (!taps.empty()) tc = &taps.at(jobs[j].second);
            DenseMatrix deq =
                detail::quantize_projection(*jobs[j].first, scheme, tc, lambda_rel, quantease_sweeps);
            ProjectionReport pr;
            pr.name = p + "." + names[j];
            if (tc) pr.recon_error = matcal::reconstruction_error(tc->calib, *jobs[j].first, deq);
            rep.total_recon_error += pr.recon_error;
            rep.projections.push_back(std::move(pr));
            *jobs[j].first = std::move(deq);
        }
    }

    if (scheme == QuantScheme::w8a8_smooth) {
        model.act_quant = toylm::ToyModel::ActQuant::int8_dynamic;
    }

    if (val) {
        rep.val_loss_after = distill::eval_model(model, *val, false).loss;
        rep.val_loss_delta = rep.val_loss_after - rep.val_loss_before;
    }
    return rep;
}

}  // namespace slmkit::compress
