// Prefill/decode latency harness: cold vs hot (shared-prefix KV cache reuse)
// time-to-first-token, per-token decode time, and the attention/MLP wall-clock
// split from the instrumented forward pass. Absolute numbers are machine
// dependent; only ratios are meaningful.
#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "slmkit/toylm.hpp"

namespace slmkit::bench {

struct BenchReport {
    std::size_t context_len = 0;
    std::size_t k_candidates = 0;
    bool hot = false;
    double p50_ttft_ms = 0.0;
    double p99_ttft_ms = 0.0;
    double mean_ttft_ms = 0.0;
    double suffix_mean_ttft_ms = 0.0;  // hot mode, prompts after the first
    double decode_ms_per_token = 0.0;
    // mean per prefill forward
    double attention_ms = 0.0;
    double mlp_ms = 0.0;
    double other_ms = 0.0;
};

inline double percentile(std::vector<double> v, double q) {
    if (v.empty()) throw std::invalid_argument("percentile: empty sample");
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return v[lo] * (1.0 - frac) + v[hi] * frac;
}

inline BenchReport run_bench(const toylm::ToyModel& model, std::size_t context_len, std::size_t k,
                             bool hot, std::size_t repeats, std::uint64_t seed,
                             double shared_prefix_fraction = 0.9, std::size_t decode_tokens = 8) {
    if (context_len < 2 || context_len > model.config.max_seq_len) {
        throw std::invalid_argument("run_bench: context_len outside [2, max_seq_len]");
    }
    if (k < 1 || repeats < 1) throw std::invalid_argument("run_bench: k and repeats must be >= 1");
    if (shared_prefix_fraction < 0.0 || shared_prefix_fraction >= 1.0) {
        throw std::invalid_argument("run_bench: shared_prefix_fraction outside [0,1)");
    }

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> tok(4, static_cast<int>(model.config.vocab_size) - 1);
    std::size_t prefix_len = static_cast<std::size_t>(shared_prefix_fraction * context_len);
    prefix_len = std::min(prefix_len, context_len - 1);
    std::vector<int> prefix(prefix_len);
    for (int& t : prefix) t = tok(rng);
    std::vector<std::vector<int>> suffixes(k);
    for (auto& s : suffixes) {
        s.resize(context_len - prefix_len);
        for (int& t : s) t = tok(rng);
    }
    auto full_prompt = [&](std::size_t i) {
        std::vector<int> p = prefix;
        p.insert(p.end(), suffixes[i].begin(), suffixes[i].end());
        return p;
    };

    using clock = std::chrono::steady_clock;
    auto ms_since = [](clock::time_point t0) {
        return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    };

    // warmup pass, discarded
    { toylm::KVCache warm; toylm::forward(model, full_prompt(0), nullptr, &warm); }

    BenchReport rep;
    rep.context_len = context_len;
    rep.k_candidates = k;
    rep.hot = hot;

    std::vector<double> ttft, suffix_ttft;
    toylm::BlockTiming split;
    std::size_t n_forwards = 0;

    for (std::size_t r = 0; r < repeats; ++r) {
        if (!hot) {
            for (std::size_t i = 0; i < k; ++i) {
                const auto p = full_prompt(i);
                const auto t0 = clock::now();
                toylm::forward(model, p, nullptr, nullptr, nullptr, &split);
                ttft.push_back(ms_since(t0));
                ++n_forwards;
            }
        } else {
            // first prompt pays the full prefill and seeds the shared-prefix cache
            toylm::KVCache prefix_cache;
            auto t0 = clock::now();
            toylm::forward(model, prefix, nullptr, &prefix_cache, nullptr, &split);
            const double prefix_ms = ms_since(t0);
            {
                toylm::KVCache c = prefix_cache;
                t0 = clock::now();
                toylm::forward(model, suffixes[0], nullptr, &c, nullptr, &split);
                ttft.push_back(prefix_ms + ms_since(t0));
                n_forwards += 2;
            }
            for (std::size_t i = 1; i < k; ++i) {
                toylm::KVCache c = prefix_cache;
                t0 = clock::now();
                toylm::forward(model, suffixes[i], nullptr, &c, nullptr, &split);
                const double ms = ms_since(t0);
                ttft.push_back(ms);
                suffix_ttft.push_back(ms);
                ++n_forwards;
            }
        }
    }

    // decode timing from one prefilled cache
    {
        toylm::KVCache cache;
        auto fr = toylm::forward(model, full_prompt(0), nullptr, &cache);
        int next = 4;
        const auto t0 = clock::now();
        std::size_t produced = 0;
        for (std::size_t s = 0; s < decode_tokens && cache.cached_len < model.config.max_seq_len; ++s) {
            fr = toylm::forward(model, {next}, nullptr, &cache);
            next = 4 + static_cast<int>(s % (model.config.vocab_size - 4));
            ++produced;
        }
        if (produced > 0) rep.decode_ms_per_token = ms_since(t0) / static_cast<double>(produced);
    }

    rep.p50_ttft_ms = percentile(ttft, 0.5);
    rep.p99_ttft_ms = percentile(ttft, 0.99);
    double sum = 0.0;
    for (double t : ttft) sum += t;
    rep.mean_ttft_ms = sum / static_cast<double>(ttft.size());
    if (!suffix_ttft.empty()) {
        double s2 = 0.0;
        for (double t : suffix_ttft) s2 += t;
        rep.suffix_mean_ttft_ms = s2 / static_cast<double>(suffix_ttft.size());
    }
    rep.attention_ms = split.attention_s * 1e3 / static_cast<double>(n_forwards);
    rep.mlp_ms = split.mlp_s * 1e3 / static_cast<double>(n_forwards);
    rep.other_ms = split.other_s * 1e3 / static_cast<double>(n_forwards);
    return rep;
}

}  // namespace slmkit::bench
