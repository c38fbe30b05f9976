// Knowledge-distillation losses (FKL, RKL, JSD(β)) with analytic gradients,
// the mixed KD/CE sequence loss with prompt/response weighting, on-policy
// batch construction, and the SGD training loop with warmup + cosine decay.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "slmkit/synth.hpp"
#include "slmkit/toylm.hpp"

namespace slmkit::distill {

enum class DivergenceKind { fkl, rkl, jsd };

struct TokenDistribution {
    std::vector<double> probs;

    static TokenDistribution from_logits(const double* logits, std::size_t v, double temperature = 1.0) {
        if (!(temperature > 0.0)) throw std::invalid_argument("TokenDistribution: temperature must be > 0");
        TokenDistribution d;
        d.probs.assign(logits, logits + v);
        for (double& x : d.probs) x /= temperature;
        toylm::detail::softmax_row_inplace(d.probs.data(), v);
        return d;
    }
};

struct KDLossConfig {
    DivergenceKind divergence = DivergenceKind::fkl;
    double jsd_beta = 0.5;
    double kd_weight = 0.9;
    double ce_weight = 0.1;
    double prompt_weight = 0.05;
    double temperature = 1.0;
    double epsilon_floor = 1e-12;

    void validate() const {
        if (std::fabs(kd_weight + ce_weight - 1.0) > 1e-9) {
            throw std::invalid_argument("KDLossConfig: kd_weight + ce_weight must equal 1");
        }
        if (prompt_weight < 0.0 || prompt_weight > 1.0) {
            throw std::invalid_argument("KDLossConfig: prompt_weight outside [0,1]");
        }
        if (divergence == DivergenceKind::jsd && (jsd_beta <= 0.0 || jsd_beta >= 1.0)) {
            throw std::invalid_argument("KDLossConfig: JSD beta must be in (0,1)");
        }
    }
};

struct SamplingSchedule {
    double on_policy_fraction = 1.0;  // fr
    std::size_t max_new_tokens = 1;   // tk
    double temperature = 0.9;
    std::uint64_t seed = 0;
};

inline double divergence(DivergenceKind kind, const TokenDistribution& p, const TokenDistribution& q,
                         double jsd_beta = 0.5, double eps = 1e-12) {
    if (p.probs.size() != q.probs.size()) throw std::invalid_argument("divergence: vocab mismatch");
    const std::size_t v = p.probs.size();
    auto fkl = [&](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < v; ++i) {
            if (a[i] <= 0.0) continue;  // 0·log(0/x) = 0
            s += a[i] * std::log(a[i] / std::max(b[i], eps));
        }
        return std::max(s, 0.0);
    };
    switch (kind) {
        case DivergenceKind::fkl:
            return fkl(p.probs, q.probs);
        case DivergenceKind::rkl:
            return fkl(q.probs, p.probs);
        case DivergenceKind::jsd: {
            std::vector<double> m(v);
            for (std::size_t i = 0; i < v; ++i) m[i] = jsd_beta * p.probs[i] + (1.0 - jsd_beta) * q.probs[i];
            return jsd_beta * fkl(p.probs, m) + (1.0 - jsd_beta) * fkl(q.probs, m);
        }
    }
    throw std::logic_error("divergence: unreachable");
}

// ∂D/∂z where q = softmax(z). FKL has the closed form q − p; RKL and JSD go
// through dD/dq then the softmax Jacobian.
inline std::vector<double> divergence_grad(DivergenceKind kind, const TokenDistribution& p,
                                           const std::vector<double>& student_logits,
                                           double jsd_beta = 0.5, double eps = 1e-12) {
    const std::size_t v = p.probs.size();
    if (student_logits.size() != v) throw std::invalid_argument("divergence_grad: vocab mismatch");
    const TokenDistribution q = TokenDistribution::from_logits(student_logits.data(), v);
    std::vector<double> grad(v, 0.0);
    if (kind == DivergenceKind::fkl) {
        for (std::size_t i = 0; i < v; ++i) grad[i] = q.probs[i] - p.probs[i];
        return grad;
    }
    // dD/dq, then grad_i = q_i (g_i − Σ_j g_j q_j)
    std::vector<double> dq(v, 0.0);
    if (kind == DivergenceKind::rkl) {
        for (std::size_t i = 0; i < v; ++i) {
            dq[i] = std::log(std::max(q.probs[i], eps) / std::max(p.probs[i], eps)) + 1.0;
        }
    } else {
        for (std::size_t i = 0; i < v; ++i) {
            const double m = jsd_beta * p.probs[i] + (1.0 - jsd_beta) * q.probs[i];
            dq[i] = (1.0 - jsd_beta) * std::log(std::max(q.probs[i], eps) / std::max(m, eps));
        }
    }
    double dot = 0.0;
    for (std::size_t i = 0; i < v; ++i) dot += dq[i] * q.probs[i];
    for (std::size_t i = 0; i < v; ++i) grad[i] = q.probs[i] * (dq[i] - dot);
    return grad;
}

struct SequenceLoss {
    double loss = 0.0;
    DenseMatrix grad;  // T × V, ∂loss/∂student_logits
    bool prompt_term_empty = false;
};

// Position t of the inputs is already aligned with its target labels[t]
// (the caller shifts). Positions < prompt_len form the prompt term.
inline SequenceLoss kd_sequence_loss(const DenseMatrix& teacher_logits, const DenseMatrix& student_logits,
                                     const std::vector<int>& labels, std::size_t prompt_len,
                                     const KDLossConfig& cfg) {
    cfg.validate();
    const std::size_t T = student_logits.rows();
    const std::size_t v = student_logits.cols();
    if (teacher_logits.rows() != T || teacher_logits.cols() != v || labels.size() != T) {
        throw std::invalid_argument("kd_sequence_loss: shape mismatch");
    }
    if (prompt_len >= T) throw std::invalid_argument("kd_sequence_loss: prompt_len must be < T");

    SequenceLoss out;
    out.grad = DenseMatrix(T, v);
    const std::size_t n_prompt = prompt_len;
    const std::size_t n_resp = T - prompt_len;
    double w_prompt = cfg.prompt_weight;
    if (n_prompt == 0 && w_prompt > 0.0) {
        out.prompt_term_empty = true;  // prompt term defined as 0
        w_prompt = 0.0;
    }
    const double w_resp = 1.0 - w_prompt;

    double loss_resp = 0.0, loss_prompt = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        const bool is_prompt = t < prompt_len;
        const double region_w = (is_prompt ? w_prompt : w_resp) /
                                static_cast<double>(is_prompt ? n_prompt : n_resp);
        std::vector<double> z(v);
        for (std::size_t i = 0; i < v; ++i) z[i] = student_logits(t, i);
        const TokenDistribution q = TokenDistribution::from_logits(z.data(), v);

        double pos_loss = 0.0;
        std::vector<double> pos_grad(v, 0.0);
        if (cfg.kd_weight > 0.0) {
            std::vector<double> zt(v);
            for (std::size_t i = 0; i < v; ++i) zt[i] = teacher_logits(t, i);
            const TokenDistribution p = TokenDistribution::from_logits(zt.data(), v, cfg.temperature);
            if (cfg.temperature != 1.0) {
                std::vector<double> zs = z;
                for (double& x : zs) x /= cfg.temperature;
                const auto g = divergence_grad(cfg.divergence, p, zs, cfg.jsd_beta, cfg.epsilon_floor);
                const TokenDistribution qt = TokenDistribution::from_logits(z.data(), v, cfg.temperature);
                pos_loss += cfg.kd_weight * divergence(cfg.divergence, p, qt, cfg.jsd_beta, cfg.epsilon_floor);
                for (std::size_t i = 0; i < v; ++i) pos_grad[i] += cfg.kd_weight * g[i] / cfg.temperature;
            } else {
                const auto g = divergence_grad(cfg.divergence, p, z, cfg.jsd_beta, cfg.epsilon_floor);
                pos_loss += cfg.kd_weight * divergence(cfg.divergence, p, q, cfg.jsd_beta, cfg.epsilon_floor);
                for (std::size_t i = 0; i < v; ++i) pos_grad[i] += cfg.kd_weight * g[i];
            }
        }
        if (cfg.ce_weight > 0.0) {
            const int label = labels[t];
            if (label < 0 || static_cast<std::size_t>(label) >= v) {
                throw std::invalid_argument("kd_sequence_loss: label out of range");
            }
            pos_loss += cfg.ce_weight * -std::log(std::max(q.probs[label], cfg.epsilon_floor));
            for (std::size_t i = 0; i < v; ++i) {
                pos_grad[i] += cfg.ce_weight *
                               (q.probs[i] - (static_cast<int>(i) == label ? 1.0 : 0.0));
            }
        }
        (is_prompt ? loss_prompt : loss_resp) += pos_loss / static_cast<double>(is_prompt ? n_prompt : n_resp);
        for (std::size_t i = 0; i < v; ++i) out.grad(t, i) = region_w * pos_grad[i];
    }
    out.loss = w_resp * loss_resp + w_prompt * loss_prompt;
    return out;
}

struct BatchItem {
    std::vector<int> tokens;
    std::size_t prompt_len = 0;
    int label = 0;
    bool on_policy = false;
};

// With probability fr each sequence's response is regenerated by the student.
inline std::vector<BatchItem> build_batch(const synth::SynthDataset& data, const toylm::ToyModel& student,
                                          const SamplingSchedule& schedule, std::uint64_t seed) {
    if (data.sequences.empty()) throw std::invalid_argument("build_batch: dataset is empty");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<BatchItem> out;
    out.reserve(data.sequences.size());
    for (std::size_t i = 0; i < data.sequences.size(); ++i) {
        BatchItem item;
        item.prompt_len = data.prompt_len[i];
        item.label = data.labels[i];
        const bool regen = schedule.on_policy_fraction > 0.0 && unit(rng) < schedule.on_policy_fraction;
        if (regen) {
            const std::vector<int> prompt(data.sequences[i].begin(),
                                          data.sequences[i].begin() + item.prompt_len);
            const auto gen =
                toylm::generate(student, prompt, schedule.temperature, schedule.max_new_tokens, rng());
            item.tokens = prompt;
            item.tokens.insert(item.tokens.end(), gen.tokens.begin(), gen.tokens.end());
            item.on_policy = true;
        } else {
            item.tokens = data.sequences[i];
        }
        out.push_back(std::move(item));
    }
    return out;
}

struct EvalMetrics {
    double loss = 0.0;  // mean response-token cross-entropy
    double auc = 0.0;
};

// Scores each sequence with one forward pass; P(YES) from the softmax
// restricted to {YES, NO} at the decision position.
inline EvalMetrics eval_model(const toylm::ToyModel& model, const synth::SynthDataset& data,
                              bool want_auc = true) {
    if (data.sequences.empty()) throw std::invalid_argument("eval_model: dataset is empty");
    double ce_sum = 0.0;
    std::size_t ce_count = 0;
    std::vector<double> scores;
    for (std::size_t i = 0; i < data.sequences.size(); ++i) {
        const auto& seq = data.sequences[i];
        const std::size_t pl = data.prompt_len[i];
        const auto fr = toylm::forward(model, seq);
        const std::size_t v = model.config.vocab_size;
        for (std::size_t t = pl; t < seq.size(); ++t) {
            const TokenDistribution q = TokenDistribution::from_logits(fr.logits.row_ptr(t - 1), v);
            ce_sum += -std::log(std::max(q.probs[seq[t]], 1e-12));
            ++ce_count;
        }
        if (want_auc) {
            const TokenDistribution q = TokenDistribution::from_logits(fr.logits.row_ptr(pl - 1), v);
            const double py = q.probs[toylm::kYes];
            const double pn = q.probs[toylm::kNo];
            scores.push_back(py / std::max(py + pn, 1e-300));
        }
    }
    EvalMetrics m;
    m.loss = ce_sum / static_cast<double>(std::max<std::size_t>(ce_count, 1));
    if (want_auc) m.auc = synth::auc(scores, data.labels);
    return m;
}

struct TrainConfig {
    double learning_rate = 0.05;
    std::size_t warmup_steps = 50;
    std::size_t total_steps = 0;  // 0 = filled from epochs × items
    double clip_norm = 1.0;
    std::uint64_t seed = 0;
};

struct EpochMetrics {
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_auc = 0.0;
};

namespace detail {

inline double schedule_lr(const TrainConfig& tc, std::size_t step) {
    const double peak = tc.learning_rate;
    if (tc.warmup_steps > 0 && step < tc.warmup_steps) {
        return peak * static_cast<double>(step + 1) / static_cast<double>(tc.warmup_steps);
    }
    if (tc.total_steps <= tc.warmup_steps) return peak;
    const double progress = static_cast<double>(step - tc.warmup_steps) /
                            static_cast<double>(tc.total_steps - tc.warmup_steps);
    return peak * 0.5 * (1.0 + std::cos(3.14159265358979323846 * std::min(progress, 1.0)));
}

inline double grad_global_norm(const toylm::ModelTensors& g) {
    double s = 0.0;
    toylm::visit_tensors(g, [&](const std::string&, const DenseMatrix& t) {
        for (double v : t.raw()) s += v * v;
    });
    return std::sqrt(s);
}

inline void sgd_step(toylm::ToyModel& model, const toylm::ModelTensors& g, double lr, double clip) {
    double scale = lr;
    if (clip > 0.0) {
        const double norm = grad_global_norm(g);
        if (norm > clip) scale = lr * clip / norm;
    }
    std::vector<DenseMatrix*> params;
    std::vector<const DenseMatrix*> grads;
    toylm::visit_tensors(model.t, [&](const std::string&, DenseMatrix& t) { params.push_back(&t); });
    toylm::visit_tensors(g, [&](const std::string&, const DenseMatrix& t) { grads.push_back(&t); });
    for (std::size_t i = 0; i < params.size(); ++i) {
        for (std::size_t j = 0; j < params[i]->size(); ++j) {
            params[i]->raw()[j] -= scale * grads[i]->raw()[j];
        }
    }
}

}  // namespace detail

// One pass over the batch items with SGD. The teacher may be null only when
// kd_weight is 0 (the SFT baseline). `step` is the global optimizer step,
// advanced in place so the lr schedule spans epochs.
inline EpochMetrics distill_epoch(toylm::ToyModel& student, const toylm::ToyModel* teacher,
                                  const std::vector<BatchItem>& items, const synth::SynthDataset& val,
                                  const KDLossConfig& cfg, const TrainConfig& tc, std::size_t& step) {
    cfg.validate();
    if (cfg.kd_weight > 0.0 && teacher == nullptr) {
        throw std::invalid_argument("distill_epoch: kd_weight > 0 requires a teacher");
    }
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (const BatchItem& item : items) {
        const std::size_t T = item.tokens.size();
        if (T < 2) continue;
        const std::vector<int> inputs(item.tokens.begin(), item.tokens.end() - 1);
        std::vector<int> labels(item.tokens.begin() + 1, item.tokens.end());
        const auto student_fr = toylm::forward(student, inputs);
        DenseMatrix teacher_logits(inputs.size(), student.config.vocab_size);
        if (teacher) {
            teacher_logits = toylm::forward(*teacher, inputs).logits;
        }
        // aligned position t predicts labels[t]; prompt region shrinks by the shift
        const std::size_t aligned_prompt = item.prompt_len > 0 ? item.prompt_len - 1 : 0;
        const auto sl =
            kd_sequence_loss(teacher_logits, student_fr.logits, labels, aligned_prompt, cfg);
        if (!std::isfinite(sl.loss)) {
            throw std::runtime_error("distill_epoch: divergent loss at step " + std::to_string(step) +
                                     "; last finite mean " +
                                     std::to_string(loss_sum / std::max<std::size_t>(loss_count, 1)));
        }
        loss_sum += sl.loss;
        ++loss_count;
        const auto grads = toylm::backward(student, inputs, sl.grad);
        detail::sgd_step(student, grads, detail::schedule_lr(tc, step), tc.clip_norm);
        ++step;
    }
    EpochMetrics m;
    m.train_loss = loss_sum / static_cast<double>(std::max<std::size_t>(loss_count, 1));
    const EvalMetrics em = eval_model(student, val);
    m.val_loss = em.loss;
    m.val_auc = em.auc;
    return m;
}

struct TrainHistory {
    std::vector<EpochMetrics> epochs;
    std::size_t best_epoch = 0;  // minimum val loss, ties -> earlier epoch
};

// Multi-epoch driver. Builds fresh batches per epoch (on-policy regenerates
// from the current student), tracks the best checkpoint by validation loss.
inline TrainHistory train(toylm::ToyModel& student, const toylm::ToyModel* teacher,
                          const synth::SynthDataset& train_data, const synth::SynthDataset& val_data,
                          const KDLossConfig& cfg, const SamplingSchedule& schedule, std::size_t epochs,
                          TrainConfig tc) {
    TrainHistory hist;
    if (tc.total_steps == 0) tc.total_steps = epochs * train_data.sequences.size();
    std::size_t step = 0;
    // the incumbent model competes too, so training never regresses on val
    double best_val = eval_model(student, val_data, false).loss;
    toylm::ModelTensors best_tensors = student.t;
    for (std::size_t e = 0; e < epochs; ++e) {
        const auto batch = build_batch(train_data, student, schedule, tc.seed + 0x9e3779b9 * (e + 1));
        const auto m = distill_epoch(student, teacher, batch, val_data, cfg, tc, step);
        hist.epochs.push_back(m);
        if (m.val_loss < best_val) {
            best_val = m.val_loss;
            best_tensors = student.t;
            hist.best_epoch = e;
        }
    }
    student.t = std::move(best_tensors);  // leave the student at its best checkpoint
    return hist;
}

struct TwoStageHistory {
    TrainHistory stage1;
    TrainHistory stage2;
};

// Word-level distillation first (fr = 0), then on-policy training starting
// from the best stage-1 checkpoint.
inline TwoStageHistory two_stage_train(toylm::ToyModel& student, const toylm::ToyModel& teacher,
                                       const synth::SynthDataset& train_data,
                                       const synth::SynthDataset& val_data, const KDLossConfig& stage1,
                                       const KDLossConfig& stage2, const SamplingSchedule& stage2_schedule,
                                       std::size_t epochs1, std::size_t epochs2, const TrainConfig& tc) {
    if (!(stage2_schedule.on_policy_fraction > 0.0)) {
        throw std::invalid_argument("two_stage_train: stage 2 requires on_policy_fraction > 0");
    }
    TwoStageHistory hist;
    SamplingSchedule off_policy;
    off_policy.on_policy_fraction = 0.0;
    hist.stage1 = train(student, &teacher, train_data, val_data, stage1, off_policy, epochs1, tc);
    // train() left the student at the best stage-1 checkpoint
    if (epochs2 > 0) {
        TrainConfig tc2 = tc;
        tc2.seed = tc.seed + 0x517cc1b727220a95ULL;
        hist.stage2 = train(student, &teacher, train_data, val_data, stage2, stage2_schedule, epochs2, tc2);
    }
    return hist;
}

}  // namespace slmkit::distill
