// End-to-end orchestrator: JSON pipeline configs (distill, prune, quantize,
// eval, bench stages), dataset file I/O, per-stage checkpointing, and
// line-delimited metric reports. Deterministic metrics for a fixed
// (config, seed); wall-clock numbers go to a separate timing file.
#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "slmkit/bench.hpp"
#include "slmkit/checkpoint.hpp"
#include "slmkit/compress.hpp"
#include "slmkit/distill.hpp"
#include "slmkit/synth.hpp"
#include "slmkit/toylm.hpp"

namespace slmkit::pipeline {

using json = nlohmann::json;

inline constexpr int kReportSchemaVersion = 1;

inline void save_dataset(const synth::SynthDataset& data, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
    for (std::size_t i = 0; i < data.sequences.size(); ++i) {
        json rec;
        rec["tokens"] = data.sequences[i];
        rec["prompt_len"] = data.prompt_len[i];
        rec["label"] = data.labels[i];
        out << rec.dump() << "\n";
    }
}

inline synth::SynthDataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
    synth::SynthDataset data;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw std::runtime_error("load_dataset: bad record at line " + std::to_string(lineno) + ": " +
                                     e.what());
        }
        data.sequences.push_back(rec.at("tokens").get<std::vector<int>>());
        data.prompt_len.push_back(rec.at("prompt_len").get<std::size_t>());
        data.labels.push_back(rec.at("label").get<int>());
    }
    return data;
}

inline toylm::ModelConfig model_config_from_json(const json& j) {
    toylm::ModelConfig c;
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.d_model = j.value("d_model", c.d_model);
    c.n_layers = j.value("n_layers", c.n_layers);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.head_dim = j.value("head_dim", c.head_dim);
    c.d_intermediate = j.value("d_intermediate", c.d_intermediate);
    c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
    c.validate();
    return c;
}

inline synth::SynthConfig synth_config_from_json(const json& j) {
    synth::SynthConfig c;
    c.n_clusters = j.value("n_clusters", c.n_clusters);
    c.n_items = j.value("n_items", c.n_items);
    c.history_len = j.value("history_len", c.history_len);
    c.balance = j.value("balance", c.balance);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    return c;
}

namespace detail {

inline distill::KDLossConfig kd_config_for(const std::string& divergence, const json& stage) {
    distill::KDLossConfig cfg;
    if (divergence == "sft") {
        cfg.kd_weight = 0.0;
        cfg.ce_weight = 1.0;
        cfg.prompt_weight = 0.0;
    } else if (divergence == "fkl") {
        cfg.divergence = distill::DivergenceKind::fkl;
    } else if (divergence == "rkl") {
        cfg.divergence = distill::DivergenceKind::rkl;
    } else if (divergence == "jsd") {
        cfg.divergence = distill::DivergenceKind::jsd;
        cfg.jsd_beta = stage.value("jsd_beta", 0.5);
    } else {
        throw std::invalid_argument("distill stage: unknown recipe component " + divergence);
    }
    cfg.kd_weight = stage.value("kd_weight", cfg.kd_weight);
    cfg.ce_weight = stage.value("ce_weight", cfg.ce_weight);
    cfg.prompt_weight = stage.value("prompt_weight", cfg.prompt_weight);
    cfg.temperature = stage.value("kd_temperature", cfg.temperature);
    cfg.validate();
    return cfg;
}

inline std::pair<std::string, bool> split_recipe(const std::string& recipe) {
    const std::string suffix = "-ofkl";
    if (recipe.size() > suffix.size() &&
        recipe.compare(recipe.size() - suffix.size(), suffix.size(), suffix) == 0) {
        return {recipe.substr(0, recipe.size() - suffix.size()), true};
    }
    return {recipe, false};
}

inline std::vector<std::size_t> stage_layers(const json& stage, std::size_t n_layers) {
    if (stage.contains("layers")) {
        const auto ls = stage.at("layers").get<std::vector<std::size_t>>();
        for (std::size_t l : ls) {
            if (l >= n_layers) throw std::invalid_argument("stage: layer index out of range");
        }
        return ls;
    }
    std::vector<std::size_t> all(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) all[l] = l;
    return all;
}

inline json epochs_to_json(const distill::TrainHistory& h) {
    json arr = json::array();
    for (const auto& e : h.epochs) {
        arr.push_back({{"train_loss", e.train_loss}, {"val_loss", e.val_loss}, {"val_auc", e.val_auc}});
    }
    return json{{"epochs", arr}, {"best_epoch", h.best_epoch}};
}

}  // namespace detail

// Throws std::invalid_argument on the first bad stage block; run_pipeline
// calls this before any stage executes (fail-fast contract).
inline void validate_config(const json& cfg) {
    if (!cfg.contains("stages") || !cfg.at("stages").is_array()) {
        throw std::invalid_argument("pipeline config: missing stages array");
    }
    const toylm::ModelConfig mc = model_config_from_json(cfg.value("model", json::object()));
    static const std::set<std::string> known = {"distill", "prune_mlp", "prune_heads",
                                                "quantize", "eval",      "bench"};
    for (const auto& stage : cfg.at("stages")) {
        const std::string name = stage.value("stage", "");
        if (!known.count(name)) throw std::invalid_argument("pipeline config: unknown stage '" + name + "'");
        if (name == "distill") {
            const std::string recipe = stage.value("recipe", "fkl");
            const auto [base, ofkl] = detail::split_recipe(recipe);
            detail::kd_config_for(base, stage);  // validates recipe and weights
            if ((base != "sft" || ofkl) && !stage.contains("teacher")) {
                throw std::invalid_argument("distill stage: recipe '" + recipe +
                                            "' requires a teacher checkpoint path");
            }
        } else if (name == "prune_mlp" || name == "prune_heads") {
            if (!stage.contains("n_remove")) {
                throw std::invalid_argument(name + " stage: missing n_remove");
            }
            detail::stage_layers(stage, mc.n_layers);
        } else if (name == "quantize") {
            compress::parse_scheme(stage.value("scheme", ""));
        } else if (name == "bench") {
            const std::size_t ctx = stage.value("context_len", std::size_t{64});
            if (ctx > mc.max_seq_len) {
                throw std::invalid_argument("bench stage: context_len exceeds max_seq_len");
            }
        }
    }
}

struct PipelineResult {
    json report;        // deterministic records, one per stage
    json timing;        // wall-clock records, machine dependent
    toylm::ToyModel model;
};

inline PipelineResult run_pipeline(const json& cfg, const std::string& out_dir) {
    validate_config(cfg);
    std::filesystem::create_directories(out_dir);

    const std::uint64_t seed = cfg.value("seed", std::uint64_t{21});
    const json data_cfg = cfg.value("data", json::object());
    const synth::SynthConfig sc = synth_config_from_json(data_cfg);
    const std::uint64_t train_seed = data_cfg.value("train_seed", seed * 1000 + 1);
    const std::uint64_t val_seed = data_cfg.value("val_seed", seed * 1000 + 2);
    // the task (latent preference model) is shared by train and validation;
    // only the sampling seeds differ
    const std::uint64_t task_seed = data_cfg.value("task_seed", train_seed);
    const std::size_t items_per_user = data_cfg.value("items_per_user", std::size_t{2});
    const synth::SynthTask task = synth::make_task(sc, task_seed);
    struct DataBundle {
        synth::SynthDataset train, val;
    } ds{synth::sample_dataset(task, train_seed, data_cfg.value("train_users", std::size_t{400}),
                               items_per_user),
         synth::sample_dataset(task, val_seed, data_cfg.value("val_users", std::size_t{150}),
                               items_per_user)};
    const synth::SynthDataset& train = ds.train;
    const synth::SynthDataset& val = ds.val;

    auto calib_for = [&](const json& stage) {
        // a different calib_task_seed gives off-domain calibration data
        const std::uint64_t calib_task_seed = stage.value("calib_task_seed", task_seed);
        const std::uint64_t calib_seed = stage.value("calib_seed", train_seed + 777);
        const std::size_t calib_n = stage.value("calib_n", std::size_t{512});
        const synth::SynthTask ct =
            calib_task_seed == task_seed ? task : synth::make_task(sc, calib_task_seed);
        return synth::sample_dataset(ct, calib_seed, calib_n, 1).sequences;
    };

    PipelineResult out;
    const json model_cfg = cfg.value("model", json::object());
    if (model_cfg.contains("from_checkpoint")) {
        out.model = ckpt::load_checkpoint(model_cfg.at("from_checkpoint").get<std::string>());
    } else {
        out.model = toylm::init_model(model_config_from_json(model_cfg),
                                      model_cfg.value("init_seed", seed));
    }

    out.report = json::array();
    out.timing = json::array();
    using clock = std::chrono::steady_clock;

    std::size_t idx = 0;
    for (const auto& stage : cfg.at("stages")) {
        const std::string name = stage.at("stage").get<std::string>();
        const auto t0 = clock::now();
        json metrics;

        if (name == "distill") {
            const std::string recipe = stage.value("recipe", "fkl");
            const auto [base, ofkl] = detail::split_recipe(recipe);
            const distill::KDLossConfig kd = detail::kd_config_for(base, stage);
            distill::TrainConfig tc;
            tc.learning_rate = stage.value("lr", 0.05);
            tc.warmup_steps = stage.value("warmup", std::size_t{50});
            tc.clip_norm = stage.value("clip", 1.0);
            tc.seed = stage.value("train_seed", seed);
            const std::size_t epochs = stage.value("epochs", std::size_t{10});

            toylm::ToyModel teacher;
            const bool have_teacher = stage.contains("teacher");
            if (have_teacher) teacher = ckpt::load_checkpoint(stage.at("teacher").get<std::string>());

            if (ofkl) {
                distill::SamplingSchedule sched;
                sched.on_policy_fraction = stage.value("fr", 1.0);
                sched.max_new_tokens = stage.value("max_new_tokens", std::size_t{1});
                sched.temperature = stage.value("sample_temperature", 0.9);
                distill::KDLossConfig stage2 = detail::kd_config_for("fkl", stage);
                const std::size_t epochs2 = stage.value("epochs2", epochs);
                const auto hist = distill::two_stage_train(out.model, teacher, train, val, kd,
                                                           stage2, sched, epochs, epochs2, tc);
                metrics["stage1"] = detail::epochs_to_json(hist.stage1);
                metrics["stage2"] = detail::epochs_to_json(hist.stage2);
            } else {
                distill::SamplingSchedule sched;
                sched.on_policy_fraction = stage.value("fr", 0.0);
                sched.max_new_tokens = stage.value("max_new_tokens", std::size_t{1});
                sched.temperature = stage.value("sample_temperature", 0.9);
                const auto hist = distill::train(out.model, have_teacher ? &teacher : nullptr, train,
                                                 val, kd, sched, epochs, tc);
                metrics = detail::epochs_to_json(hist);
            }
            const auto em = distill::eval_model(out.model, val);
            metrics["val_loss"] = em.loss;
            metrics["val_auc"] = em.auc;
        } else if (name == "prune_mlp" || name == "prune_heads") {
            const std::size_t n_remove = stage.at("n_remove").get<std::size_t>();
            const auto layers = detail::stage_layers(stage, out.model.config.n_layers);
            const auto calib = calib_for(stage);
            prune::PruneConfig pc;
            pc.lambda_rel = stage.value("lambda_rel", 0.01);
            pc.swap_iters_max = stage.value("swap_iters_max", std::size_t{16});
            json per_layer = json::array();
            for (std::size_t l : layers) {
                const auto rep = name == "prune_mlp"
                                     ? compress::prune_mlp(out.model, l, n_remove, calib, pc)
                                     : compress::prune_heads(out.model, l, n_remove, calib, pc);
                per_layer.push_back({{"layer", l},
                                     {"removed", rep.removed},
                                     {"objective", rep.result.objective},
                                     {"kept_groups", rep.result.kept.size()}});
            }
            metrics["layers"] = per_layer;
            metrics["param_count"] = toylm::count_params(out.model);
            const auto em = distill::eval_model(out.model, val);
            metrics["val_loss"] = em.loss;
            metrics["val_auc"] = em.auc;
        } else if (name == "quantize") {
            const auto scheme = compress::parse_scheme(stage.at("scheme").get<std::string>());
            std::vector<std::vector<int>> calib;
            if (compress::detail::scheme_needs_calibration(scheme) || stage.contains("calib_n") ||
                stage.contains("calib_seed")) {
                calib = calib_for(stage);
            }
            const auto rep = compress::quantize_model(out.model, scheme, calib.empty() ? nullptr : &calib,
                                                      &val, stage.value("lambda_rel", 0.01));
            metrics["scheme"] = compress::scheme_name(scheme);
            metrics["total_recon_error"] = rep.total_recon_error;
            metrics["val_loss_before"] = rep.val_loss_before;
            metrics["val_loss_after"] = rep.val_loss_after;
            metrics["val_loss_delta"] = rep.val_loss_delta;
            json projs = json::array();
            for (const auto& p : rep.projections) {
                projs.push_back({{"name", p.name}, {"recon_error", p.recon_error}});
            }
            metrics["projections"] = projs;
            const auto em = distill::eval_model(out.model, val);
            metrics["val_auc"] = em.auc;
        } else if (name == "eval") {
            const auto em = distill::eval_model(out.model, val);
            metrics["val_loss"] = em.loss;
            metrics["val_auc"] = em.auc;
            metrics["param_count"] = toylm::count_params(out.model);
        } else if (name == "bench") {
            const std::size_t ctx = stage.value("context_len", std::size_t{64});
            const std::size_t k = stage.value("k", std::size_t{4});
            const bool hot = stage.value("hot", false);
            const std::size_t repeats = stage.value("repeats", std::size_t{3});
            const auto br = bench::run_bench(out.model, ctx, k, hot, repeats, seed);
            // wall-clock numbers are machine dependent; keep them out of the
            // deterministic report
            metrics["context_len"] = br.context_len;
            metrics["k"] = br.k_candidates;
            metrics["hot"] = br.hot;
            out.timing.push_back({{"stage_index", idx},
                                  {"stage", name},
                                  {"p50_ttft_ms", br.p50_ttft_ms},
                                  {"p99_ttft_ms", br.p99_ttft_ms},
                                  {"mean_ttft_ms", br.mean_ttft_ms},
                                  {"suffix_mean_ttft_ms", br.suffix_mean_ttft_ms},
                                  {"decode_ms_per_token", br.decode_ms_per_token},
                                  {"attention_ms", br.attention_ms},
                                  {"mlp_ms", br.mlp_ms},
                                  {"other_ms", br.other_ms}});
        }

        const double wall_s = std::chrono::duration<double>(clock::now() - t0).count();
        const std::string ckpt_path =
            out_dir + "/stage_" + std::to_string(idx) + "_" + name + ".ckpt";
        ckpt::save_checkpoint(out.model, ckpt_path);

        out.report.push_back(
            {{"stage_index", idx}, {"stage", name}, {"params", stage}, {"metrics", metrics}});
        out.timing.push_back({{"stage_index", idx}, {"stage", name}, {"wall_time_s", wall_s}});
        ++idx;
    }

    {
        std::ofstream rf(out_dir + "/report.jsonl", std::ios::trunc);
        rf << json{{"schema", kReportSchemaVersion}}.dump() << "\n";
        for (const auto& rec : out.report) rf << rec.dump() << "\n";
        std::ofstream tf(out_dir + "/timing.jsonl", std::ios::trunc);
        for (const auto& rec : out.timing) tf << rec.dump() << "\n";
    }
    return out;
}

}  // namespace slmkit::pipeline
