// Acceptance gate. Runs the exact/property suites and the seeded directional
// experiments, printing one pass/fail line per criterion. Exits nonzero if
// any criterion fails. Links the library only, no test framework.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "slmkit/bench.hpp"
#include "slmkit/checkpoint.hpp"
#include "slmkit/compress.hpp"
#include "slmkit/distill.hpp"
#include "slmkit/fp8.hpp"
#include "slmkit/pipeline.hpp"
#include "slmkit/synth.hpp"

using namespace slmkit;
using clock_type = std::chrono::steady_clock;

namespace {

int g_failures = 0;

double seconds_since(clock_type::time_point t0) {
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

void report(int id, const std::string& what, bool ok) {
    std::printf("criterion %2d: %-58s %s\n", id, what.c_str(), ok ? "pass" : "FAIL");
    if (!ok) ++g_failures;
}

matcal::LayerCalibration random_calibration(std::size_t d, std::size_t n_rows, std::uint64_t seed) {
    matcal::LayerCalibration calib(d);
    std::mt19937_64 rng(seed);
    matcal::gram_accumulate(calib, random_gaussian(n_rows, d, rng()));
    return calib;
}

matcal::LayerCalibration identity_calibration(std::size_t d) {
    matcal::LayerCalibration calib(d);
    for (std::size_t i = 0; i < d; ++i) calib.gram(i, i) = 1.0;
    calib.n_tokens = d;
    return calib;
}

// ---------------------------------------------------------------- criterion 1
void criterion_pruning_oracle() {
    const auto t0 = clock_type::now();
    const std::size_t d = 10, p = 4, k = 3, n_instances = 60;
    std::size_t near_optimal = 0;
    bool never_worse_than_greedy = true;
    for (std::size_t i = 0; i < n_instances; ++i) {
        const auto calib = random_calibration(d, 40, 9000 + i);
        const DenseMatrix w = random_gaussian(d, p, 100 + i);
        const auto part = prune::GroupPartition::singletons(d);
        const auto best = prune::brute_force_prune(calib, w, part, k);
        prune::PruneConfig cfg;
        cfg.k_remove = k;
        const auto got = prune::prune_groups(calib, w, part, cfg);
        prune::PruneConfig greedy_cfg = cfg;
        greedy_cfg.swap_iters_max = 0;
        const auto greedy = prune::prune_groups(calib, w, part, greedy_cfg);
        if (got.objective <= best.objective * 1.05 + 1e-12) ++near_optimal;
        if (got.objective > greedy.objective + 1e-9) never_worse_than_greedy = false;
    }
    const bool ok = near_optimal >= 57 && never_worse_than_greedy && seconds_since(t0) < 10.0;
    report(1, "greedy+swap pruning near brute-force optimum", ok);
}

// ---------------------------------------------------------------- criterion 2
void criterion_identity_gram_exactness() {
    const auto t0 = clock_type::now();
    bool ok = true;
    for (std::uint64_t s = 0; s < 10; ++s) {
        const std::size_t d = 8, p = 3, k = 3;
        const auto calib = identity_calibration(d);
        const DenseMatrix w = random_gaussian(d, p, 300 + s);
        const auto part = prune::GroupPartition::singletons(d);
        const auto best = prune::brute_force_prune(calib, w, part, k);
        prune::PruneConfig cfg;
        cfg.k_remove = k;
        const auto got = prune::prune_groups(calib, w, part, cfg);
        if (got.kept != best.kept || std::fabs(got.objective - best.objective) > 1e-9) ok = false;

        const auto grid = quant::fit_grid(w, 4, quant::Scheme::symmetric,
                                          quant::Granularity::per_channel);
        const auto rtn = quant::rtn_quantize(w, grid);
        const auto gptq = quant::gptq_quantize(w, calib, grid, 0.01);
        if (gptq.codes != rtn.codes) ok = false;
    }
    ok = ok && seconds_since(t0) < 1.0;
    report(2, "identity-Gram pruning and GPTQ collapse to exact/RTN", ok);
}

// ---------------------------------------------------------------- criterion 3
void criterion_quantease_monotone() {
    const auto t0 = clock_type::now();
    std::size_t violations = 0;
    for (std::size_t i = 0; i < 100; ++i) {
        const std::size_t d = 6 + i % 5, p = 3 + i % 3;
        const auto calib = random_calibration(d, 4 * d, 5000 + i);
        const DenseMatrix w = random_gaussian(d, p, 700 + i);
        const auto grid = quant::fit_grid(w, 4, quant::Scheme::symmetric,
                                          quant::Granularity::per_channel);
        const auto warm = quant::rtn_quantize(w, grid);
        const auto res = quant::quantease_sweep(w, warm, calib, grid, 5, 0.01, true);
        for (std::size_t j = 1; j < res.objective_trace.size(); ++j) {
            if (res.objective_trace[j] >
                res.objective_trace[j - 1] + 1e-9 * std::max(1.0, res.objective_trace[j - 1])) {
                ++violations;
            }
        }
    }
    const bool ok = violations == 0 && seconds_since(t0) < 30.0;
    report(3, "QuantEase objective trace monotone on 100 instances", ok);
}

// ---------------------------------------------------------------- criterion 4
void criterion_fp8() {
    const auto t0 = clock_type::now();
    bool ok = true;
    std::vector<double> table;
    for (int b = 0; b < 256; ++b) {
        const fp8::Fp8Value v{static_cast<std::uint8_t>(b)};
        const double x = fp8::decode(v);
        if (std::isnan(x)) {
            const auto re = fp8::encode(x);
            if ((re.byte & 0x7F) != fp8::kNanCode) ok = false;
            continue;
        }
        table.push_back(x);
        if (fp8::encode(x).byte != b) ok = false;
    }
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> u(-500.0, 500.0);
    for (int i = 0; i < 10000; ++i) {
        const double x = u(rng);
        const double got = fp8::quantize_value(x);
        double best = table[0];
        for (double c : table)
            if (std::fabs(x - c) < std::fabs(x - best)) best = c;
        if (std::fabs(x - got) > std::fabs(x - best) + 1e-12) ok = false;
    }
    if (fp8::quantize_value(1000.0) != 448.0 || fp8::quantize_value(-1e9) != -448.0) ok = false;
    ok = ok && seconds_since(t0) < 1.0;
    report(4, "fp8 e4m3 roundtrip, nearest-code and saturation", ok);
}

// ---------------------------------------------------------------- criterion 5
void criterion_divergences() {
    const auto t0 = clock_type::now();
    bool ok = true;
    std::mt19937_64 rng(77);
    const std::size_t v = 12;
    auto random_logits = [&]() {
        std::vector<double> z(v);
        std::normal_distribution<double> g(0.0, 1.5);
        for (double& x : z) x = g(rng);
        return z;
    };
    using distill::DivergenceKind;
    const DivergenceKind kinds[3] = {DivergenceKind::fkl, DivergenceKind::rkl,
                                     DivergenceKind::jsd};
    for (int i = 0; i < 50; ++i) {
        const auto zp = random_logits();
        const auto zq = random_logits();
        const auto p = distill::TokenDistribution::from_logits(zp.data(), v);
        const auto q = distill::TokenDistribution::from_logits(zq.data(), v);
        for (auto kind : kinds) {
            const double dv = distill::divergence(kind, p, q);
            if (dv < -1e-12) ok = false;
            if (distill::divergence(kind, p, p) > 1e-10) ok = false;
        }
        // JSD(0.5): symmetric and bounded by log 2
        const double j_pq = distill::divergence(DivergenceKind::jsd, p, q, 0.5);
        const double j_qp = distill::divergence(DivergenceKind::jsd, q, p, 0.5);
        if (std::fabs(j_pq - j_qp) > 1e-10 || j_pq > std::log(2.0) + 1e-12) ok = false;
        // forward KL gradient in logit space is q - p
        const auto g = distill::divergence_grad(DivergenceKind::fkl, p, zq);
        for (std::size_t t = 0; t < v; ++t)
            if (std::fabs(g[t] - (q.probs[t] - p.probs[t])) > 1e-10) ok = false;
        // every kind against central finite differences
        for (auto kind : kinds) {
            const auto grad = distill::divergence_grad(kind, p, zq, 0.4);
            for (std::size_t t = 0; t < v; t += 3) {
                const double h = 1e-6;
                auto up = zq, dn = zq;
                up[t] += h;
                dn[t] -= h;
                const auto qu = distill::TokenDistribution::from_logits(up.data(), v);
                const auto qd = distill::TokenDistribution::from_logits(dn.data(), v);
                const double fd =
                    (distill::divergence(kind, p, qu, 0.4) - distill::divergence(kind, p, qd, 0.4)) /
                    (2 * h);
                if (std::fabs(grad[t] - fd) > 1e-6 * std::max({1.0, std::fabs(fd)})) ok = false;
            }
        }
    }
    ok = ok && seconds_since(t0) < 5.0;
    report(5, "divergence properties and gradients vs finite differences", ok);
}

// ---------------------------------------------------------------- criterion 6
void criterion_model_gradients() {
    const auto t0 = clock_type::now();
    toylm::ModelConfig cfg;
    cfg.vocab_size = 12;
    cfg.d_model = 8;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.head_dim = 4;
    cfg.d_intermediate = 10;
    cfg.max_seq_len = 16;
    auto m = toylm::init_model(cfg, 7);
    bool ok = toylm::count_params(m) <= 5000;
    const std::vector<int> tokens = {1, 4, 2, 8, 3};
    const DenseMatrix lg = random_gaussian(tokens.size(), cfg.vocab_size, 99);
    auto loss = [&]() {
        const auto fr = toylm::forward(m, tokens);
        double s = 0.0;
        for (std::size_t i = 0; i < lg.size(); ++i) s += lg.raw()[i] * fr.logits.raw()[i];
        return s;
    };
    const auto g = toylm::backward(m, tokens, lg);
    std::mt19937_64 pick(123);
    toylm::visit_tensors(m.t, [&](const std::string& name, DenseMatrix& tensor) {
        const DenseMatrix* gt = nullptr;
        toylm::visit_tensors(g, [&](const std::string& n2, const DenseMatrix& t2) {
            if (n2 == name) gt = &t2;
        });
        if (!gt) {
            ok = false;
            return;
        }
        for (int probe = 0; probe < 6; ++probe) {
            const std::size_t idx = pick() % tensor.size();
            const double orig = tensor.raw()[idx];
            const double h = 1e-5;
            tensor.raw()[idx] = orig + h;
            const double up = loss();
            tensor.raw()[idx] = orig - h;
            const double dn = loss();
            tensor.raw()[idx] = orig;
            const double fd = (up - dn) / (2 * h);
            const double an = gt->raw()[idx];
            if (std::fabs(an - fd) > 1e-5 * std::max({1.0, std::fabs(fd), std::fabs(an)}))
                ok = false;
        }
    });
    ok = ok && seconds_since(t0) < 60.0;
    report(6, "model gradients match finite differences, all tensors", ok);
}

// ---------------------------------------------------------------- criterion 7
void criterion_cache_and_causality() {
    toylm::ModelConfig cfg;
    cfg.vocab_size = 12;
    cfg.d_model = 8;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.head_dim = 4;
    cfg.d_intermediate = 10;
    cfg.max_seq_len = 16;
    const auto m = toylm::init_model(cfg, 42);
    bool ok = true;
    const std::vector<int> tokens = {1, 4, 7, 2, 9, 3};
    const auto full = toylm::forward(m, tokens);
    for (std::size_t split = 1; split < tokens.size(); ++split) {
        toylm::KVCache cache;
        (void)toylm::forward(m, {tokens.begin(), tokens.begin() + split}, nullptr, &cache);
        const auto part = toylm::forward(m, {tokens.begin() + split, tokens.end()}, nullptr, &cache);
        for (std::size_t t = 0; t < tokens.size() - split; ++t)
            for (std::size_t vv = 0; vv < cfg.vocab_size; ++vv) {
                const double a = full.logits(split + t, vv);
                if (std::fabs(part.logits(t, vv) - a) > 1e-6 * std::max(1.0, std::fabs(a)))
                    ok = false;
            }
    }
    std::vector<int> perturbed = tokens;
    perturbed[4] = 11;
    const auto alt = toylm::forward(m, perturbed);
    for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t vv = 0; vv < cfg.vocab_size; ++vv)
            if (full.logits(t, vv) != alt.logits(t, vv)) ok = false;
    report(7, "KV-cache equivalence and strict causality", ok);
}

// ---------------------------------------------------------------- criterion 8
void criterion_auc_oracle() {
    const auto t0 = clock_type::now();
    bool ok = true;
    std::mt19937_64 rng(2024);
    for (int inst = 0; inst < 200; ++inst) {
        const std::size_t n = 20 + rng() % 80;
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        std::uniform_int_distribution<int> grid(0, 9);  // coarse grid forces ties
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = grid(rng) / 10.0;
            labels[i] = static_cast<int>(rng() % 2);
        }
        labels[0] = 1;
        labels[1] = 0;
        double conc = 0.0;
        std::size_t n_pos = 0, n_neg = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!labels[i]) continue;
            ++n_pos;
            for (std::size_t j = 0; j < n; ++j) {
                if (labels[j]) continue;
                if (scores[i] > scores[j]) conc += 1.0;
                else if (scores[i] == scores[j]) conc += 0.5;
            }
        }
        n_neg = n - n_pos;
        const double want = conc / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
        if (std::fabs(synth::auc(scores, labels) - want) > 1e-12) ok = false;
    }
    ok = ok && seconds_since(t0) < 5.0;
    report(8, "rank-based AUC equals pairwise oracle with ties", ok);
}

// ---------------------------------------------------------------- criterion 9
void criterion_checkpoint_and_determinism() {
    namespace fs = std::filesystem;
    const std::string dir = "/tmp/slmkit_acceptance";
    fs::remove_all(dir);
    fs::create_directories(dir);
    bool ok = true;

    toylm::ModelConfig cfg;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.head_dim = 8;
    cfg.n_layers = 2;
    cfg.d_intermediate = 24;
    cfg.max_seq_len = 32;
    const auto m = toylm::init_model(cfg, 3);
    ckpt::save_checkpoint(m, dir + "/a.ckpt");
    const auto m2 = ckpt::load_checkpoint(dir + "/a.ckpt");
    ckpt::save_checkpoint(m2, dir + "/b.ckpt");
    auto slurp = [](const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    if (slurp(dir + "/a.ckpt") != slurp(dir + "/b.ckpt")) ok = false;
    const auto m3 = ckpt::load_checkpoint(dir + "/b.ckpt");
    toylm::visit_tensors(m2.t, [&](const std::string& name, const DenseMatrix& t) {
        toylm::visit_tensors(m3.t, [&](const std::string& n2, const DenseMatrix& t2) {
            if (name == n2 && t.raw() != t2.raw()) ok = false;
        });
    });

    pipeline::json pcfg;
    pcfg["seed"] = 21;
    pcfg["model"] = {{"d_model", 16}, {"n_heads", 2},        {"head_dim", 8},
                     {"n_layers", 1}, {"d_intermediate", 16}, {"max_seq_len", 64}};
    pcfg["data"] = {{"train_users", 80}, {"val_users", 40}, {"items_per_user", 2},
                    {"train_seed", 11},  {"val_seed", 12}};
    pcfg["stages"] = pipeline::json::array(
        {pipeline::json{{"stage", "distill"}, {"recipe", "sft"}, {"epochs", 2}},
         pipeline::json{{"stage", "prune_mlp"}, {"n_remove", 4}, {"calib_n", 32}},
         pipeline::json{{"stage", "eval"}}});
    pipeline::run_pipeline(pcfg, dir + "/run1");
    pipeline::run_pipeline(pcfg, dir + "/run2");
    if (slurp(dir + "/run1/report.jsonl") != slurp(dir + "/run2/report.jsonl")) ok = false;
    if (slurp(dir + "/run1/stage_2_eval.ckpt") != slurp(dir + "/run2/stage_2_eval.ckpt")) ok = false;
    fs::remove_all(dir);
    report(9, "checkpoint roundtrip bit-exact, pipeline byte-deterministic", ok);
}

// ------------------------------------------------- directional experiments
// Shared knobs for the seeded runs; each criterion states its own data/model
// configuration explicitly next to the assertion it feeds.

distill::KDLossConfig sft_cfg() {
    distill::KDLossConfig c;
    c.kd_weight = 0.0;
    c.ce_weight = 1.0;
    c.prompt_weight = 0.0;
    return c;
}
distill::KDLossConfig fkl_cfg() { return {}; }  // 0.9 kd / 0.1 ce / 0.05 prompt
distill::KDLossConfig pure_fkl_cfg() {
    distill::KDLossConfig c;
    c.kd_weight = 1.0;
    c.ce_weight = 0.0;
    c.prompt_weight = 0.0;
    return c;
}

toylm::ModelConfig narrow_student_cfg(std::size_t d_int) {
    toylm::ModelConfig c;
    c.d_model = 16;
    c.n_heads = 2;
    c.head_dim = 8;
    c.n_layers = 1;
    c.d_intermediate = d_int;
    c.max_seq_len = 64;
    return c;
}

// criteria 10-13 share one task, teacher and distilled student
void criteria_distill_and_prune() {
    const distill::SamplingSchedule off_policy{0.0, 1, 0.9, 0};
    const auto task = synth::make_task({}, 21);
    const auto train_data = synth::sample_dataset(task, 2101, 800, 2);
    const auto val_data = synth::sample_dataset(task, 2102, 300, 2);
    distill::TrainConfig tc;
    tc.learning_rate = 0.02;
    tc.warmup_steps = 50;
    tc.clip_norm = 1.0;
    tc.seed = 21;

    toylm::ModelConfig tcfg;
    tcfg.d_model = 48;
    tcfg.n_heads = 4;
    tcfg.head_dim = 12;
    tcfg.n_layers = 2;
    tcfg.d_intermediate = 96;
    tcfg.max_seq_len = 64;
    auto teacher = toylm::init_model(tcfg, 7);
    {
        distill::TrainConfig ttc = tc;
        ttc.learning_rate = 0.01;
        distill::train(teacher, nullptr, train_data, val_data, sft_cfg(), off_policy, 20, ttc);
    }

    const auto scfg = narrow_student_cfg(16);
    auto stu_sft = toylm::init_model(scfg, 5);
    auto stu_kd = toylm::init_model(scfg, 5);
    distill::train(stu_sft, nullptr, train_data, val_data, sft_cfg(), off_policy, 20, tc);
    distill::train(stu_kd, &teacher, train_data, val_data, fkl_cfg(), off_policy, 20, tc);
    const auto em_sft = distill::eval_model(stu_sft, val_data);
    const auto em_kd = distill::eval_model(stu_kd, val_data);
    report(10, "distillation beats plain fine-tuning on loss and AUC",
           em_kd.loss < em_sft.loss && em_kd.auc > em_sft.auc);

    auto stu_two = toylm::init_model(scfg, 5);
    distill::SamplingSchedule on_policy{1.0, 2, 0.9, 21};
    distill::two_stage_train(stu_two, teacher, train_data, val_data, fkl_cfg(), pure_fkl_cfg(),
                             on_policy, 20, 8, tc);
    const auto em_two = distill::eval_model(stu_two, val_data);
    report(11, "word-level then on-policy beats word-level alone", em_two.loss <= em_kd.loss);

    const auto calib = synth::sample_dataset(task, 2878, 512, 1).sequences;
    prune::PruneConfig pc;
    auto pruned = stu_kd;
    compress::prune_mlp(pruned, 0, 6, calib, pc);  // 37.5% of the hidden neurons
    const auto em_pruned = distill::eval_model(pruned, val_data);
    auto re_kd = pruned, re_sft = pruned;
    distill::train(re_kd, &teacher, train_data, val_data, fkl_cfg(), off_policy, 10, tc);
    distill::train(re_sft, nullptr, train_data, val_data, sft_cfg(), off_policy, 10, tc);
    const auto em_rekd = distill::eval_model(re_kd, val_data);
    const auto em_resft = distill::eval_model(re_sft, val_data);
    const double gap = em_kd.auc - em_pruned.auc;
    report(12, "re-distillation recovers pruning damage better than SFT",
           em_rekd.auc >= em_pruned.auc + 0.8 * gap && em_rekd.auc > em_resft.auc);

    auto gradual = stu_kd, oneshot = stu_kd;
    compress::prune_mlp(gradual, 0, 3, calib, pc);
    distill::train(gradual, &teacher, train_data, val_data, fkl_cfg(), off_policy, 5, tc);
    compress::prune_mlp(gradual, 0, 3, calib, pc);
    distill::train(gradual, &teacher, train_data, val_data, fkl_cfg(), off_policy, 5, tc);
    compress::prune_mlp(oneshot, 0, 6, calib, pc);
    distill::train(oneshot, &teacher, train_data, val_data, fkl_cfg(), off_policy, 10, tc);
    const auto em_gradual = distill::eval_model(gradual, val_data);
    const auto em_oneshot = distill::eval_model(oneshot, val_data);
    report(13, "gradual pruning no worse than one-shot (2% slack)",
           em_gradual.loss <= em_oneshot.loss * 1.02);
}

// --------------------------------------------------------------- criterion 14
void criterion_calibration_domain() {
    const distill::SamplingSchedule off_policy{0.0, 1, 0.9, 0};
    synth::SynthConfig sc;
    sc.label_gain = 2.0;  // soft labels keep the trained model calibrated
    const auto task = synth::make_task(sc, 21);
    const auto train_data = synth::sample_dataset(task, 2101, 2000, 2);
    const auto val_data = synth::sample_dataset(task, 2102, 1000, 2);
    auto stu = toylm::init_model(narrow_student_cfg(32), 11);
    distill::TrainConfig tc;
    tc.learning_rate = 0.02;
    tc.warmup_steps = 50;
    tc.clip_norm = 1.0;
    tc.seed = 32;
    distill::train(stu, nullptr, train_data, val_data, sft_cfg(), off_policy, 30, tc);

    const auto calib_in = synth::sample_dataset(task, 2878, 128, 1).sequences;
    synth::SynthConfig off_sc = sc;  // different generator: shifted token alphabet
    off_sc.n_clusters = 24;
    off_sc.n_items = 24;
    const auto off_task = synth::make_task(off_sc, 777);
    const auto calib_off = synth::sample_dataset(off_task, 2879, 512, 1).sequences;

    prune::PruneConfig pc;
    auto p_in = stu, p_off = stu;
    compress::prune_mlp(p_in, 0, 20, calib_in, pc);
    compress::prune_mlp(p_off, 0, 20, calib_off, pc);
    const auto em_in = distill::eval_model(p_in, val_data, false);
    const auto em_off = distill::eval_model(p_off, val_data, false);
    report(14, "128 in-domain calibration beats 512 off-domain", em_in.loss <= em_off.loss);
}

// --------------------------------------------------------------- criterion 15
void criterion_quant_ordering() {
    const distill::SamplingSchedule off_policy{0.0, 1, 0.9, 0};
    const auto task = synth::make_task({}, 21);
    const auto train_data = synth::sample_dataset(task, 2101, 800, 2);
    const auto val_data = synth::sample_dataset(task, 2102, 1000, 2);
    const auto calib = synth::sample_dataset(task, 2878, 512, 1).sequences;
    auto stu = toylm::init_model(narrow_student_cfg(32), 11);
    distill::TrainConfig tc;
    tc.learning_rate = 0.02;
    tc.warmup_steps = 50;
    tc.clip_norm = 1.0;
    tc.seed = 32;
    distill::train(stu, nullptr, train_data, val_data, sft_cfg(), off_policy, 30, tc);

    const compress::QuantScheme schemes[5] = {
        compress::QuantScheme::fp8, compress::QuantScheme::w8a8_smooth,
        compress::QuantScheme::w4a16_quantease, compress::QuantScheme::w4a16_gptq,
        compress::QuantScheme::w4a16_rtn};
    double delta[5];
    for (int i = 0; i < 5; ++i) {
        auto m = stu;
        delta[i] = compress::quantize_model(m, schemes[i], &calib, &val_data).val_loss_delta;
    }
    report(15, "loss deltas ordered fp8/w8a8 <= quantease <= gptq <= rtn",
           std::max(delta[0], delta[1]) <= delta[2] && delta[2] <= delta[3] &&
               delta[3] <= delta[4]);
}

// --------------------------------------------------------------- criterion 16
void criterion_bench_directionality() {
    toylm::ModelConfig mc;
    mc.d_model = 32;
    mc.n_heads = 4;
    mc.head_dim = 8;
    mc.n_layers = 2;
    mc.d_intermediate = 64;
    mc.max_seq_len = 1100;
    const auto model = toylm::init_model(mc, 21);
    const auto cold = bench::run_bench(model, 1024, 4, false, 3, 21);
    const auto hot = bench::run_bench(model, 1024, 4, true, 3, 21);

    auto halved = model;
    const auto task = synth::make_task({}, 21);
    const auto calib = synth::sample_dataset(task, 2878, 64, 1).sequences;
    prune::PruneConfig pc;
    for (std::size_t l = 0; l < mc.n_layers; ++l) compress::prune_heads(halved, l, 2, calib, pc);
    const auto cold_halved = bench::run_bench(halved, 1024, 4, false, 3, 21);
    const double attention_cut = 1.0 - cold_halved.attention_ms / cold.attention_ms;
    report(16, "hot prefill beats cold; half heads cut attention >= 25%",
           hot.suffix_mean_ttft_ms < cold.mean_ttft_ms && attention_cut >= 0.25);
}

}  // namespace

int main() {
    criterion_pruning_oracle();
    criterion_identity_gram_exactness();
    criterion_quantease_monotone();
    criterion_fp8();
    criterion_divergences();
    criterion_model_gradients();
    criterion_cache_and_causality();
    criterion_auc_oracle();
    criterion_checkpoint_and_determinism();
    criteria_distill_and_prune();
    criterion_calibration_domain();
    criterion_quant_ordering();
    criterion_bench_directionality();
    std::printf("%s\n", g_failures == 0 ? "all criteria passed" : "ACCEPTANCE FAILED");
    return g_failures == 0 ? 0 : 1;
}
