// Synthetic recommendation task: a user-cluster token, a history of
// (item, feedback) pairs, a candidate item, then a YES/NO decision token.
// Labels come from a hidden per-cluster preference model, so an oracle
// scorer exists and a trained model has real signal to find. Plus the AUC
// metric used everywhere.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "slmkit/toylm.hpp"

namespace slmkit::synth {

struct SynthConfig {
    std::size_t n_clusters = 8;
    std::size_t n_items = 24;
    std::size_t history_len = 4;
    std::size_t latent_dim = 4;
    double balance = 0.5;      // target positive fraction
    double label_gain = 16.0;   // sharpness of the Bernoulli label probability
    std::size_t vocab_size = 64;
};

struct SynthDataset {
    std::vector<std::vector<int>> sequences;
    std::vector<int> labels;              // 1 = YES at the decision position
    std::vector<std::size_t> prompt_len;  // tokens before the decision token
};

// Hidden preference model; tests use it as the Bayes-oracle scorer.
struct SynthTask {
    SynthConfig cfg;
    DenseMatrix cluster_pref;    // n_clusters × latent_dim
    DenseMatrix item_features;   // n_items × latent_dim
    double threshold = 0.0;      // shifts the label probability to hit `balance`

    int cluster_token(std::size_t c) const { return static_cast<int>(4 + c); }
    int item_token(std::size_t i) const { return static_cast<int>(4 + cfg.n_clusters + i); }

    double affinity(std::size_t cluster, std::size_t item) const {
        double z = 0.0;
        for (std::size_t k = 0; k < cfg.latent_dim; ++k)
            z += cluster_pref(cluster, k) * item_features(item, k);
        return z;
    }
    double yes_probability(std::size_t cluster, std::size_t item) const {
        return 1.0 / (1.0 + std::exp(-cfg.label_gain * (affinity(cluster, item) - threshold)));
    }
};

inline SynthTask make_task(const SynthConfig& cfg, std::uint64_t seed) {
    if (4 + cfg.n_clusters + cfg.n_items > cfg.vocab_size) {
        throw std::invalid_argument("synth: vocab too small for requested cluster/item alphabet");
    }
    SynthTask task;
    task.cfg = cfg;
    std::mt19937_64 rng(seed ^ 0x5f3759df9e3779b9ULL);
    task.cluster_pref = DenseMatrix(cfg.n_clusters, cfg.latent_dim);
    task.item_features = DenseMatrix(cfg.n_items, cfg.latent_dim);
    const double s = 1.0 / std::sqrt(static_cast<double>(cfg.latent_dim));
    fill_gaussian(task.cluster_pref, rng, s);
    fill_gaussian(task.item_features, rng, s);

    // pick the threshold as the (1-balance) quantile of all affinities
    std::vector<double> zs;
    zs.reserve(cfg.n_clusters * cfg.n_items);
    for (std::size_t c = 0; c < cfg.n_clusters; ++c)
        for (std::size_t i = 0; i < cfg.n_items; ++i) zs.push_back(task.affinity(c, i));
    std::sort(zs.begin(), zs.end());
    const double q = std::clamp(1.0 - cfg.balance, 0.0, 1.0);
    const std::size_t pos = std::min(zs.size() - 1, static_cast<std::size_t>(q * zs.size()));
    task.threshold = zs[pos];
    return task;
}

struct SynthResult {
    SynthTask task;
    SynthDataset data;
};

// Draws sequences from an existing task; separate sampling seeds over the
// same task give train/validation splits that actually share the latent
// preference model.
inline SynthDataset sample_dataset(const SynthTask& task, std::uint64_t seed, std::size_t n_users,
                                   std::size_t items_per_user) {
    if (n_users < 1 || items_per_user < 1)
        throw std::invalid_argument("sample_dataset: counts must be >= 1");
    const SynthConfig& cfg = task.cfg;
    SynthDataset data;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick_cluster(0, cfg.n_clusters - 1);
    std::uniform_int_distribution<std::size_t> pick_item(0, cfg.n_items - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    for (std::size_t u = 0; u < n_users; ++u) {
        const std::size_t cluster = pick_cluster(rng);
        for (std::size_t s = 0; s < items_per_user; ++s) {
            std::vector<int> seq;
            seq.push_back(task.cluster_token(cluster));
            for (std::size_t h = 0; h < cfg.history_len; ++h) {
                const std::size_t item = pick_item(rng);
                const int fb = unit(rng) < task.yes_probability(cluster, item) ? toylm::kYes : toylm::kNo;
                seq.push_back(task.item_token(item));
                seq.push_back(fb);
            }
            const std::size_t candidate = pick_item(rng);
            seq.push_back(task.item_token(candidate));
            const int label = unit(rng) < task.yes_probability(cluster, candidate) ? 1 : 0;
            data.prompt_len.push_back(seq.size());
            seq.push_back(label ? toylm::kYes : toylm::kNo);
            data.sequences.push_back(std::move(seq));
            data.labels.push_back(label);
        }
    }
    return data;
}

inline SynthResult synth_data(std::uint64_t seed, std::size_t n_users, std::size_t items_per_user,
                              const SynthConfig& cfg = {}) {
    SynthResult res;
    res.task = make_task(cfg, seed);
    res.data = sample_dataset(res.task, seed, n_users, items_per_user);
    return res;
}

// AUC by average ranks; exactly equals the pairwise definition
// (#concordant + 0.5·#ties) / (#pos·#neg).
inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty()) {
        throw std::invalid_argument("auc: scores and labels must be nonempty and equal length");
    }
    std::size_t n_pos = 0;
    for (int l : labels) n_pos += (l != 0);
    const std::size_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("auc: need at least one positive and one negative");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));  // 1-based
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] != 0) rank_sum_pos += avg_rank;
        i = j;
    }
    return (rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1)) /
           (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

}  // namespace slmkit::synth
