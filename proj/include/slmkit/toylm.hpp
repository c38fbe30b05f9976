// Toy decoder-only transformer: pre-norm blocks, causal multi-head attention,
// gated SiLU MLP, learned absolute positions, RMS-style norms. Exact
// reverse-mode gradients, KV-cache generation, and activation taps feeding
// the compression solvers. All math in 64-bit.
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "slmkit/fp8.hpp"
#include "slmkit/matrix.hpp"

namespace slmkit::toylm {

// reserved token ids
inline constexpr int kPad = 0;
inline constexpr int kEos = 1;
inline constexpr int kYes = 2;
inline constexpr int kNo = 3;

struct ModelConfig {
    std::size_t vocab_size = 64;
    std::size_t d_model = 32;
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    std::size_t head_dim = 8;
    std::size_t d_intermediate = 128;
    std::size_t max_seq_len = 128;
    double norm_eps = 1e-6;

    void validate() const {
        if (vocab_size < 4) throw std::invalid_argument("ModelConfig: vocab_size must be >= 4");
        if (n_heads * head_dim != d_model) {
            throw std::invalid_argument("ModelConfig: n_heads * head_dim must equal d_model");
        }
    }
};

// Per-layer shapes are the source of truth after pruning.
struct LayerShape {
    std::size_t n_heads = 0;
    std::size_t d_intermediate = 0;
};

struct LayerTensors {
    DenseMatrix attn_q, attn_k, attn_v;  // d_model × n_heads·head_dim
    DenseMatrix attn_o;                  // n_heads·head_dim × d_model
    DenseMatrix mlp_gate, mlp_up;        // d_model × d_intermediate
    DenseMatrix mlp_down;                // d_intermediate × d_model
    DenseMatrix norm1, norm2;            // 1 × d_model
};

struct ModelTensors {
    DenseMatrix token_embedding;       // V × d_model
    DenseMatrix positional_embedding;  // max_seq_len × d_model
    std::vector<LayerTensors> layers;
    DenseMatrix final_norm;   // 1 × d_model
    DenseMatrix unembedding;  // d_model × V
};

struct ToyModel {
    ModelConfig config;
    std::vector<LayerShape> layer_shapes;
    ModelTensors t;

    // W8A8/FP8 simulation hook: fake-quantize projection inputs in forward.
    enum class ActQuant { none, int8_dynamic, fp8 };
    ActQuant act_quant = ActQuant::none;

    std::size_t attn_width(std::size_t layer) const {
        return layer_shapes[layer].n_heads * config.head_dim;
    }
};

// Visits every trainable tensor as (name, matrix); the shared naming scheme
// for checkpoints, gradients and the optimizer.
template <typename ModelLike, typename Fn>
void visit_tensors(ModelLike& m, Fn&& fn) {
    fn("token_embedding", m.token_embedding);
    fn("positional_embedding", m.positional_embedding);
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        fn(p + "attn_q", m.layers[l].attn_q);
        fn(p + "attn_k", m.layers[l].attn_k);
        fn(p + "attn_v", m.layers[l].attn_v);
        fn(p + "attn_o", m.layers[l].attn_o);
        fn(p + "mlp_gate", m.layers[l].mlp_gate);
        fn(p + "mlp_up", m.layers[l].mlp_up);
        fn(p + "mlp_down", m.layers[l].mlp_down);
        fn(p + "norm1", m.layers[l].norm1);
        fn(p + "norm2", m.layers[l].norm2);
    }
    fn("final_norm", m.final_norm);
    fn("unembedding", m.unembedding);
}

inline ModelTensors zeros_like(const ToyModel& model) {
    ModelTensors g;
    g.token_embedding = DenseMatrix(model.t.token_embedding.rows(), model.t.token_embedding.cols());
    g.positional_embedding =
        DenseMatrix(model.t.positional_embedding.rows(), model.t.positional_embedding.cols());
    g.layers.resize(model.t.layers.size());
    for (std::size_t l = 0; l < model.t.layers.size(); ++l) {
        const LayerTensors& src = model.t.layers[l];
        LayerTensors& dst = g.layers[l];
        dst.attn_q = DenseMatrix(src.attn_q.rows(), src.attn_q.cols());
        dst.attn_k = DenseMatrix(src.attn_k.rows(), src.attn_k.cols());
        dst.attn_v = DenseMatrix(src.attn_v.rows(), src.attn_v.cols());
        dst.attn_o = DenseMatrix(src.attn_o.rows(), src.attn_o.cols());
        dst.mlp_gate = DenseMatrix(src.mlp_gate.rows(), src.mlp_gate.cols());
        dst.mlp_up = DenseMatrix(src.mlp_up.rows(), src.mlp_up.cols());
        dst.mlp_down = DenseMatrix(src.mlp_down.rows(), src.mlp_down.cols());
        dst.norm1 = DenseMatrix(1, src.norm1.cols());
        dst.norm2 = DenseMatrix(1, src.norm2.cols());
    }
    g.final_norm = DenseMatrix(1, model.t.final_norm.cols());
    g.unembedding = DenseMatrix(model.t.unembedding.rows(), model.t.unembedding.cols());
    return g;
}

inline ToyModel init_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ToyModel m;
    m.config = cfg;
    m.layer_shapes.assign(cfg.n_layers, LayerShape{cfg.n_heads, cfg.d_intermediate});
    std::mt19937_64 rng(seed);

    auto gauss = [&](std::size_t r, std::size_t c, double scale) {
        DenseMatrix mat(r, c);
        fill_gaussian(mat, rng, scale);
        return mat;
    };
    const double emb_scale = 0.5 / std::sqrt(static_cast<double>(cfg.d_model));
    m.t.token_embedding = gauss(cfg.vocab_size, cfg.d_model, emb_scale);
    m.t.positional_embedding = gauss(cfg.max_seq_len, cfg.d_model, emb_scale);
    m.t.layers.resize(cfg.n_layers);
    const std::size_t aw = cfg.n_heads * cfg.head_dim;
    for (auto& l : m.t.layers) {
        const double s_d = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
        const double s_aw = 1.0 / std::sqrt(static_cast<double>(aw));
        const double s_i = 1.0 / std::sqrt(static_cast<double>(cfg.d_intermediate));
        l.attn_q = gauss(cfg.d_model, aw, s_d);
        l.attn_k = gauss(cfg.d_model, aw, s_d);
        l.attn_v = gauss(cfg.d_model, aw, s_d);
        l.attn_o = gauss(aw, cfg.d_model, s_aw);
        l.mlp_gate = gauss(cfg.d_model, cfg.d_intermediate, s_d);
        l.mlp_up = gauss(cfg.d_model, cfg.d_intermediate, s_d);
        l.mlp_down = gauss(cfg.d_intermediate, cfg.d_model, s_i);
        l.norm1 = DenseMatrix(1, cfg.d_model, 1.0);
        l.norm2 = DenseMatrix(1, cfg.d_model, 1.0);
    }
    m.t.final_norm = DenseMatrix(1, cfg.d_model, 1.0);
    m.t.unembedding = gauss(cfg.d_model, cfg.vocab_size, 1.0 / std::sqrt(static_cast<double>(cfg.d_model)));
    return m;
}

struct KVCache {
    // per layer, cached_len × live_heads·head_dim
    std::vector<DenseMatrix> keys;
    std::vector<DenseMatrix> values;
    std::size_t cached_len = 0;
};

struct TapRequest {
    std::vector<std::size_t> layers;  // empty = all layers
    bool attn_in = false;       // input of attn_q/k/v (post norm1)
    bool attn_o_in = true;      // concatenated head outputs feeding attn_o
    bool mlp_in = false;        // input of mlp_gate/up (post norm2)
    bool mlp_down_in = true;    // gated activation feeding mlp_down
};

struct ForwardResult {
    DenseMatrix logits;                       // T × V
    std::map<std::string, DenseMatrix> taps;  // "layer<i>.<kind>"
};

// wall-clock split of one forward pass, filled when requested
struct BlockTiming {
    double attention_s = 0.0;  // norm1 through the attn_o residual add
    double mlp_s = 0.0;        // norm2 through the mlp_down residual add
    double other_s = 0.0;      // embeddings, final norm, unembedding
};

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double silu(double x) { return x * sigmoid(x); }
inline double silu_grad(double x) {
    const double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
}

// y = x ⊙ g / rms(x) rowwise; returns per-row rms for backward reuse.
inline DenseMatrix rmsnorm(const DenseMatrix& x, const DenseMatrix& gain, double eps,
                           std::vector<double>* rms_out = nullptr) {
    DenseMatrix y(x.rows(), x.cols());
    if (rms_out) rms_out->resize(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double ms = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) ms += x(r, c) * x(r, c);
        const double rms = std::sqrt(ms / static_cast<double>(x.cols()) + eps);
        if (rms_out) (*rms_out)[r] = rms;
        for (std::size_t c = 0; c < x.cols(); ++c) y(r, c) = x(r, c) * gain(0, c) / rms;
    }
    return y;
}

inline void rmsnorm_backward(const DenseMatrix& x, const DenseMatrix& gain,
                             const std::vector<double>& rms, const DenseMatrix& dy, DenseMatrix& dx,
                             DenseMatrix& dgain) {
    const double d = static_cast<double>(x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const double inv = 1.0 / rms[r];
        double dot = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) dot += gain(0, c) * dy(r, c) * x(r, c);
        for (std::size_t c = 0; c < x.cols(); ++c) {
            dx(r, c) += gain(0, c) * dy(r, c) * inv - x(r, c) * dot * inv * inv * inv / d;
            dgain(0, c) += x(r, c) * inv * dy(r, c);
        }
    }
}

inline void softmax_row_inplace(double* row, std::size_t n) {
    double mx = row[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, row[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        row[i] = std::exp(row[i] - mx);
        sum += row[i];
    }
    for (std::size_t i = 0; i < n; ++i) row[i] /= sum;
}

// per-tensor dynamic activation fake-quant used by the W8A8/FP8 simulations
inline void act_fake_quant(DenseMatrix& x, ToyModel::ActQuant mode) {
    if (mode == ToyModel::ActQuant::none) return;
    double absmax = 0.0;
    for (double v : x.raw()) absmax = std::max(absmax, std::fabs(v));
    if (absmax == 0.0) return;
    if (mode == ToyModel::ActQuant::int8_dynamic) {
        const double scale = absmax / 127.0;
        for (double& v : x.raw()) {
            v = std::clamp(std::round(v / scale), -128.0, 127.0) * scale;
        }
    } else {  // fp8: rescale absmax onto the e4m3 range, snap, scale back
        const double scale = fp8::kMaxFinite / absmax;
        for (double& v : x.raw()) v = fp8::quantize_value(v * scale) / scale;
    }
}

struct LayerActivations {
    DenseMatrix x_in;   // layer input
    std::vector<double> rms1, rms2;
    DenseMatrix a;      // post norm1
    DenseMatrix q, k, v;
    std::vector<DenseMatrix> probs;  // per head, T × key_len
    DenseMatrix ctx;    // concatenated head outputs
    DenseMatrix x_mid;  // after attention residual
    DenseMatrix b;      // post norm2
    DenseMatrix gate, up, act;
};

struct Activations {
    DenseMatrix x0;
    std::vector<LayerActivations> layers;
    DenseMatrix x_last;
    std::vector<double> rms_final;
    DenseMatrix final_normed;
};

}  // namespace detail

// Core forward pass. `cache` may hold a prefix; new keys/values are appended.
// `acts` (when non-null) records everything backward needs; recording is not
// supported together with a non-empty cache.
inline ForwardResult forward(const ToyModel& model, const std::vector<int>& tokens,
                             const TapRequest* taps = nullptr, KVCache* cache = nullptr,
                             detail::Activations* acts = nullptr, BlockTiming* timing = nullptr) {
    const ModelConfig& cfg = model.config;
    using clock = std::chrono::steady_clock;
    auto tick = clock::now();
    auto lap = [&]() {
        const auto t = clock::now();
        const double s = std::chrono::duration<double>(t - tick).count();
        tick = t;
        return s;
    };
    const std::size_t T = tokens.size();
    const std::size_t past = cache ? cache->cached_len : 0;
    if (T + past > cfg.max_seq_len) {
        throw std::invalid_argument("forward: context overflow (" + std::to_string(T + past) + " > " +
                                    std::to_string(cfg.max_seq_len) + ")");
    }
    if (acts && past > 0) throw std::invalid_argument("forward: cannot record activations with a cache");
    if (taps) {
        for (std::size_t l : taps->layers) {
            if (l >= cfg.n_layers) {
                throw std::invalid_argument("forward: unknown tap layer " + std::to_string(l));
            }
        }
    }
    for (int t : tokens) {
        if (t < 0 || static_cast<std::size_t>(t) >= cfg.vocab_size) {
            throw std::invalid_argument("forward: token id out of range");
        }
    }
    if (cache && cache->keys.empty()) {
        cache->keys.resize(cfg.n_layers);
        cache->values.resize(cfg.n_layers);
        for (std::size_t l = 0; l < cfg.n_layers; ++l) {
            cache->keys[l] = DenseMatrix(0, model.attn_width(l));
            cache->values[l] = DenseMatrix(0, model.attn_width(l));
        }
    }

    auto tapped = [&](std::size_t layer) {
        if (!taps) return false;
        if (taps->layers.empty()) return true;
        return std::find(taps->layers.begin(), taps->layers.end(), layer) != taps->layers.end();
    };

    ForwardResult out;

    DenseMatrix x(T, cfg.d_model);
    for (std::size_t t = 0; t < T; ++t) {
        const double* emb = model.t.token_embedding.row_ptr(tokens[t]);
        const double* pos = model.t.positional_embedding.row_ptr(past + t);
        for (std::size_t c = 0; c < cfg.d_model; ++c) x(t, c) = emb[c] + pos[c];
    }
    if (acts) {
        acts->x0 = x;
        acts->layers.resize(cfg.n_layers);
    }
    if (timing) timing->other_s += lap();

    const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim));

    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const LayerTensors& lt = model.t.layers[l];
        const std::size_t n_h = model.layer_shapes[l].n_heads;
        const std::size_t hd = cfg.head_dim;
        const std::size_t aw = n_h * hd;
        detail::LayerActivations* la = acts ? &acts->layers[l] : nullptr;
        if (la) la->x_in = x;

        std::vector<double> rms1;
        DenseMatrix a = detail::rmsnorm(x, lt.norm1, cfg.norm_eps, &rms1);
        detail::act_fake_quant(a, model.act_quant);
        if (tapped(l) && taps->attn_in) out.taps["layer" + std::to_string(l) + ".attn_in"] = a;

        DenseMatrix q = matmul(a, lt.attn_q);
        DenseMatrix k_new = matmul(a, lt.attn_k);
        DenseMatrix v_new = matmul(a, lt.attn_v);

        // full key/value views: cached prefix plus new rows
        const DenseMatrix* k_past = cache ? &cache->keys[l] : nullptr;
        const DenseMatrix* v_past = cache ? &cache->values[l] : nullptr;
        const std::size_t key_len = past + T;

        DenseMatrix ctx(T, aw);
        if (la) la->probs.resize(n_h);
        for (std::size_t h = 0; h < n_h; ++h) {
            const std::size_t off = h * hd;
            DenseMatrix probs(T, key_len);
            for (std::size_t t = 0; t < T; ++t) {
                const std::size_t limit = past + t + 1;  // causal: keys <= absolute position
                double* prow = probs.row_ptr(t);
                for (std::size_t s = 0; s < limit; ++s) {
                    const double* krow = s < past ? k_past->row_ptr(s) : k_new.row_ptr(s - past);
                    double dot = 0.0;
                    for (std::size_t c = 0; c < hd; ++c) dot += q(t, off + c) * krow[off + c];
                    prow[s] = dot * inv_sqrt_hd;
                }
                detail::softmax_row_inplace(prow, limit);
                for (std::size_t s = limit; s < key_len; ++s) prow[s] = 0.0;
                for (std::size_t s = 0; s < limit; ++s) {
                    const double* vrow = s < past ? v_past->row_ptr(s) : v_new.row_ptr(s - past);
                    const double p = prow[s];
                    if (p == 0.0) continue;
                    for (std::size_t c = 0; c < hd; ++c) ctx(t, off + c) += p * vrow[c + off];
                }
            }
            if (la) la->probs[h] = std::move(probs);
        }
        detail::act_fake_quant(ctx, model.act_quant);
        if (tapped(l) && taps->attn_o_in) out.taps["layer" + std::to_string(l) + ".attn_o_in"] = ctx;

        const DenseMatrix attn_out = matmul(ctx, lt.attn_o);
        for (std::size_t i = 0; i < x.size(); ++i) x.raw()[i] += attn_out.raw()[i];

        if (la) {
            la->rms1 = std::move(rms1);
            la->a = std::move(a);
            la->q = std::move(q);
            la->k = k_new;
            la->v = v_new;
            la->ctx = ctx;
            la->x_mid = x;
        }
        if (cache) {
            DenseMatrix& ck = cache->keys[l];
            DenseMatrix& cv = cache->values[l];
            DenseMatrix nk(past + T, aw), nv(past + T, aw);
            for (std::size_t r = 0; r < past; ++r)
                for (std::size_t c = 0; c < aw; ++c) {
                    nk(r, c) = ck(r, c);
                    nv(r, c) = cv(r, c);
                }
            for (std::size_t r = 0; r < T; ++r)
                for (std::size_t c = 0; c < aw; ++c) {
                    nk(past + r, c) = k_new(r, c);
                    nv(past + r, c) = v_new(r, c);
                }
            ck = std::move(nk);
            cv = std::move(nv);
        }
        if (timing) timing->attention_s += lap();

        std::vector<double> rms2;
        DenseMatrix b = detail::rmsnorm(x, lt.norm2, cfg.norm_eps, &rms2);
        detail::act_fake_quant(b, model.act_quant);
        if (tapped(l) && taps->mlp_in) out.taps["layer" + std::to_string(l) + ".mlp_in"] = b;

        DenseMatrix gate = matmul(b, lt.mlp_gate);
        DenseMatrix up = matmul(b, lt.mlp_up);
        DenseMatrix act(T, model.layer_shapes[l].d_intermediate);
        for (std::size_t i = 0; i < act.size(); ++i) act.raw()[i] = detail::silu(gate.raw()[i]) * up.raw()[i];
        detail::act_fake_quant(act, model.act_quant);
        if (tapped(l) && taps->mlp_down_in) out.taps["layer" + std::to_string(l) + ".mlp_down_in"] = act;

        const DenseMatrix mlp_out = matmul(act, lt.mlp_down);
        for (std::size_t i = 0; i < x.size(); ++i) x.raw()[i] += mlp_out.raw()[i];

        if (la) {
            la->rms2 = std::move(rms2);
            la->b = std::move(b);
            la->gate = std::move(gate);
            la->up = std::move(up);
            la->act = std::move(act);
        }
        if (timing) timing->mlp_s += lap();
    }

    std::vector<double> rms_final;
    DenseMatrix f = detail::rmsnorm(x, model.t.final_norm, cfg.norm_eps, &rms_final);
    out.logits = matmul(f, model.t.unembedding);
    if (acts) {
        acts->x_last = std::move(x);
        acts->rms_final = std::move(rms_final);
        acts->final_normed = std::move(f);
    }
    if (cache) cache->cached_len = past + T;
    if (timing) timing->other_s += lap();
    return out;
}

// Exact reverse-mode gradients of the forward pass w.r.t. every tensor, given
// dLoss/dlogits. Activation fake-quant must be off (it is not differentiable).
inline ModelTensors backward(const ToyModel& model, const std::vector<int>& tokens,
                             const DenseMatrix& loss_grads) {
    if (model.act_quant != ToyModel::ActQuant::none) {
        throw std::invalid_argument("backward: activation fake-quant is forward-only");
    }
    const ModelConfig& cfg = model.config;
    const std::size_t T = tokens.size();
    if (loss_grads.rows() != T || loss_grads.cols() != cfg.vocab_size) {
        throw std::invalid_argument("backward: loss_grads must be T × vocab");
    }
    if (!loss_grads.all_finite()) throw std::invalid_argument("backward: loss_grads not finite");

    detail::Activations acts;
    forward(model, tokens, nullptr, nullptr, &acts);

    ModelTensors g = zeros_like(model);

    // logits = final_normed · unembedding
    DenseMatrix d_f = matmul(loss_grads, model.t.unembedding.transposed());
    {
        const DenseMatrix gu = matmul(acts.final_normed.transposed(), loss_grads);
        for (std::size_t i = 0; i < gu.size(); ++i) g.unembedding.raw()[i] += gu.raw()[i];
    }
    DenseMatrix dx(T, cfg.d_model);
    detail::rmsnorm_backward(acts.x_last, model.t.final_norm, acts.rms_final, d_f, dx, g.final_norm);

    const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim));

    for (std::size_t l = cfg.n_layers; l-- > 0;) {
        const LayerTensors& lt = model.t.layers[l];
        LayerTensors& gl = g.layers[l];
        const detail::LayerActivations& la = acts.layers[l];
        const std::size_t n_h = model.layer_shapes[l].n_heads;
        const std::size_t hd = cfg.head_dim;

        // --- MLP block ---
        // x_out = x_mid + act · mlp_down
        const DenseMatrix& d_xout = dx;  // gradient w.r.t. layer output
        DenseMatrix d_act = matmul(d_xout, lt.mlp_down.transposed());
        {
            const DenseMatrix gd = matmul(la.act.transposed(), d_xout);
            for (std::size_t i = 0; i < gd.size(); ++i) gl.mlp_down.raw()[i] += gd.raw()[i];
        }
        DenseMatrix d_gate(la.gate.rows(), la.gate.cols());
        DenseMatrix d_up(la.up.rows(), la.up.cols());
        for (std::size_t i = 0; i < d_act.size(); ++i) {
            const double gv = la.gate.raw()[i];
            d_gate.raw()[i] = d_act.raw()[i] * la.up.raw()[i] * detail::silu_grad(gv);
            d_up.raw()[i] = d_act.raw()[i] * detail::silu(gv);
        }
        DenseMatrix d_b = matmul(d_gate, lt.mlp_gate.transposed());
        {
            const DenseMatrix t2 = matmul(d_up, lt.mlp_up.transposed());
            for (std::size_t i = 0; i < d_b.size(); ++i) d_b.raw()[i] += t2.raw()[i];
            const DenseMatrix gg = matmul(la.b.transposed(), d_gate);
            for (std::size_t i = 0; i < gg.size(); ++i) gl.mlp_gate.raw()[i] += gg.raw()[i];
            const DenseMatrix gup = matmul(la.b.transposed(), d_up);
            for (std::size_t i = 0; i < gup.size(); ++i) gl.mlp_up.raw()[i] += gup.raw()[i];
        }
        DenseMatrix d_xmid(T, cfg.d_model);
        detail::rmsnorm_backward(la.x_mid, lt.norm2, la.rms2, d_b, d_xmid, gl.norm2);
        // residual: d_xmid also receives d_xout directly
        for (std::size_t i = 0; i < d_xmid.size(); ++i) d_xmid.raw()[i] += d_xout.raw()[i];

        // --- attention block ---
        // x_mid = x_in + ctx · attn_o
        DenseMatrix d_ctx = matmul(d_xmid, lt.attn_o.transposed());
        {
            const DenseMatrix go = matmul(la.ctx.transposed(), d_xmid);
            for (std::size_t i = 0; i < go.size(); ++i) gl.attn_o.raw()[i] += go.raw()[i];
        }
        DenseMatrix d_q(T, n_h * hd), d_k(T, n_h * hd), d_v(T, n_h * hd);
        for (std::size_t h = 0; h < n_h; ++h) {
            const std::size_t off = h * hd;
            const DenseMatrix& p = la.probs[h];  // T × T
            // d_v += pᵀ d_ctx_h ; d_p = d_ctx_h vᵀ
            for (std::size_t t = 0; t < T; ++t) {
                for (std::size_t s = 0; s <= t; ++s) {
                    const double pv = p(t, s);
                    if (pv == 0.0) continue;
                    for (std::size_t c = 0; c < hd; ++c) d_v(s, off + c) += pv * d_ctx(t, off + c);
                }
            }
            for (std::size_t t = 0; t < T; ++t) {
                // dp_s = Σ_c d_ctx(t,c) v(s,c); softmax backward on row t
                std::vector<double> dp(t + 1, 0.0);
                for (std::size_t s = 0; s <= t; ++s)
                    for (std::size_t c = 0; c < hd; ++c) dp[s] += d_ctx(t, off + c) * la.v(s, off + c);
                double dot = 0.0;
                for (std::size_t s = 0; s <= t; ++s) dot += dp[s] * p(t, s);
                for (std::size_t s = 0; s <= t; ++s) {
                    const double ds = p(t, s) * (dp[s] - dot) * inv_sqrt_hd;
                    if (ds == 0.0) continue;
                    for (std::size_t c = 0; c < hd; ++c) {
                        d_q(t, off + c) += ds * la.k(s, off + c);
                        d_k(s, off + c) += ds * la.q(t, off + c);
                    }
                }
            }
        }
        DenseMatrix d_a = matmul(d_q, lt.attn_q.transposed());
        {
            const DenseMatrix t2 = matmul(d_k, lt.attn_k.transposed());
            const DenseMatrix t3 = matmul(d_v, lt.attn_v.transposed());
            for (std::size_t i = 0; i < d_a.size(); ++i) d_a.raw()[i] += t2.raw()[i] + t3.raw()[i];
            const DenseMatrix gq = matmul(la.a.transposed(), d_q);
            const DenseMatrix gk = matmul(la.a.transposed(), d_k);
            const DenseMatrix gv = matmul(la.a.transposed(), d_v);
            for (std::size_t i = 0; i < gq.size(); ++i) {
                gl.attn_q.raw()[i] += gq.raw()[i];
                gl.attn_k.raw()[i] += gk.raw()[i];
                gl.attn_v.raw()[i] += gv.raw()[i];
            }
        }
        DenseMatrix d_xin(T, cfg.d_model);
        detail::rmsnorm_backward(la.x_in, lt.norm1, la.rms1, d_a, d_xin, gl.norm1);
        for (std::size_t i = 0; i < d_xin.size(); ++i) d_xin.raw()[i] += d_xmid.raw()[i];
        dx = std::move(d_xin);
    }

    // embeddings
    for (std::size_t t = 0; t < T; ++t) {
        double* gtok = g.token_embedding.row_ptr(tokens[t]);
        double* gpos = g.positional_embedding.row_ptr(t);
        const double* row = dx.row_ptr(t);
        for (std::size_t c = 0; c < cfg.d_model; ++c) {
            gtok[c] += row[c];
            gpos[c] += row[c];
        }
    }
    return g;
}

struct GenerateResult {
    std::vector<int> tokens;
    bool truncated = false;
};

inline GenerateResult generate(const ToyModel& model, const std::vector<int>& prompt, double temperature,
                               std::size_t max_tokens, std::uint64_t seed) {
    if (prompt.empty()) throw std::invalid_argument("generate: prompt must be nonempty");
    if (temperature < 0.0) throw std::invalid_argument("generate: temperature must be >= 0");
    GenerateResult res;
    std::mt19937_64 rng(seed);
    KVCache cache;

    std::vector<int> pending = prompt;
    if (pending.size() > model.config.max_seq_len) {
        // keep the tail that fits, flag the truncation
        pending.erase(pending.begin(),
                      pending.end() - static_cast<std::ptrdiff_t>(model.config.max_seq_len));
        res.truncated = true;
    }

    for (std::size_t step = 0; step < max_tokens; ++step) {
        if (cache.cached_len + pending.size() > model.config.max_seq_len) {
            res.truncated = true;
            break;
        }
        const ForwardResult fr = forward(model, pending, nullptr, &cache);
        const std::size_t last = fr.logits.rows() - 1;
        const std::size_t v = model.config.vocab_size;
        int next;
        if (temperature == 0.0) {
            next = 0;
            double best = fr.logits(last, 0);
            for (std::size_t i = 1; i < v; ++i) {
                if (fr.logits(last, i) > best) {  // ties keep the lowest id
                    best = fr.logits(last, i);
                    next = static_cast<int>(i);
                }
            }
        } else {
            std::vector<double> p(v);
            for (std::size_t i = 0; i < v; ++i) p[i] = fr.logits(last, i) / temperature;
            detail::softmax_row_inplace(p.data(), v);
            std::discrete_distribution<int> dist(p.begin(), p.end());
            next = dist(rng);
        }
        res.tokens.push_back(next);
        if (next == kEos) break;
        pending = {next};
    }
    return res;
}

inline std::size_t count_params(const ToyModel& model) {
    std::size_t n = 0;
    visit_tensors(model.t, [&](const std::string&, const DenseMatrix& m) { n += m.size(); });
    return n;
}

// FLOP model: 2·m·n·k per matmul plus 2·T²·hd per head for scores and the
// same again for the value mix (causality ignored; upper bound at full T).
inline std::size_t flops_prefill(const ToyModel& model, std::size_t seq_len) {
    const ModelConfig& cfg = model.config;
    const std::size_t T = seq_len;
    std::size_t fl = 0;
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const std::size_t aw = model.attn_width(l);
        const std::size_t di = model.layer_shapes[l].d_intermediate;
        fl += 2 * T * cfg.d_model * aw * 3;                       // q, k, v
        fl += 2 * T * T * aw * 2;                                 // scores + value mix
        fl += 2 * T * aw * cfg.d_model;                           // output proj
        fl += 2 * T * cfg.d_model * di * 2 + 2 * T * di * cfg.d_model;  // gate, up, down
    }
    fl += 2 * T * cfg.d_model * cfg.vocab_size;  // unembedding
    return fl;
}

}  // namespace slmkit::toylm
