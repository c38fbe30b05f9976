// slmctl: command-line front end over the pipeline orchestrator.
//
// Subcommands: synth, distill, prune, quantize, eval, bench, pipeline.
// Config is a JSON file with "model", "data" and per-stage blocks; the
// single-stage subcommands lift their block into a one-stage pipeline,
// `pipeline` runs the "stages" array as written. Exit codes: 0 success,
// 1 validation/usage error, 2 numeric or I/O failure during a stage.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "slmkit/pipeline.hpp"

namespace {

using slmkit::pipeline::json;

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config file not found: " + path);
    json cfg;
    try {
        in >> cfg;
    } catch (const json::exception& e) {
        throw std::invalid_argument("config parse error in " + path + ": " + e.what());
    }
    if (!cfg.is_object()) throw std::invalid_argument("config root must be a JSON object");
    return cfg;
}

// Single-stage subcommands read their parameters from the config block with
// the same name, e.g. {"distill": {"recipe": "fkl", ...}}.
json lift_stage(json cfg, const std::string& block, const std::string& stage_name) {
    json stage = cfg.value(block, json::object());
    stage["stage"] = stage_name;
    cfg["stages"] = json::array({stage});
    return cfg;
}

void print_summary(const slmkit::pipeline::PipelineResult& res, const std::string& out_dir) {
    std::printf("%-3s %-12s %12s %10s %12s %10s\n", "#", "stage", "val_loss", "val_auc",
                "params", "wall_s");
    for (std::size_t i = 0; i < res.report.size(); ++i) {
        const auto& rec = res.report[i];
        const auto& m = rec["metrics"];
        auto num = [&](const char* key, const char* fmt) {
            return m.contains(key) ? [&] {
                char buf[32];
                std::snprintf(buf, sizeof(buf), fmt, m[key].get<double>());
                return std::string(buf);
            }() : std::string("-");
        };
        std::string params = "-";
        if (m.contains("param_count"))
            params = std::to_string(m["param_count"].get<std::size_t>());
        double wall = 0.0;
        for (const auto& t : res.timing) {
            if (t.contains("wall_time_s") && t["stage_index"].get<std::size_t>() == i)
                wall = t["wall_time_s"].get<double>();
        }
        std::printf("%-3zu %-12s %12s %10s %12s %10.3f\n", i,
                    rec["stage"].get<std::string>().c_str(), num("val_loss", "%.6f").c_str(),
                    num("val_auc", "%.4f").c_str(), params.c_str(), wall);
    }
    std::printf("reports: %s/report.jsonl, %s/timing.jsonl\n", out_dir.c_str(), out_dir.c_str());
}

struct CommonOpts {
    std::string config;
    std::string out = "slmctl_out";
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 1;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config, "JSON config file");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--seed", o.seed, "master seed (overrides config)")
        ->each([&o](const std::string&) { o.seed_set = true; });
    cmd->add_option("--threads", o.threads, "worker threads (1 = bit-exact reproducible)")
        ->check(CLI::PositiveNumber);
}

json base_config(const CommonOpts& o) {
    json cfg = load_config(o.config);
    if (o.seed_set) cfg["seed"] = o.seed;
    if (!cfg.contains("seed")) cfg["seed"] = std::uint64_t{21};
    return cfg;
}

int run_stages(const json& cfg, const CommonOpts& o) {
    const auto res = slmkit::pipeline::run_pipeline(cfg, o.out);
    print_summary(res, o.out);
    return 0;
}

int run_synth(const CommonOpts& o) {
    const json cfg = base_config(o);
    const json data_cfg = cfg.value("data", json::object());
    const auto sc = slmkit::pipeline::synth_config_from_json(data_cfg);
    const std::uint64_t seed = cfg["seed"].get<std::uint64_t>();
    const std::uint64_t train_seed = data_cfg.value("train_seed", seed * 1000 + 1);
    const std::uint64_t val_seed = data_cfg.value("val_seed", seed * 1000 + 2);
    const std::uint64_t task_seed = data_cfg.value("task_seed", train_seed);
    const std::size_t items = data_cfg.value("items_per_user", std::size_t{2});
    const auto task = slmkit::synth::make_task(sc, task_seed);
    const auto train = slmkit::synth::sample_dataset(
        task, train_seed, data_cfg.value("train_users", std::size_t{400}), items);
    const auto val = slmkit::synth::sample_dataset(
        task, val_seed, data_cfg.value("val_users", std::size_t{150}), items);
    std::filesystem::create_directories(o.out);
    slmkit::pipeline::save_dataset(train, o.out + "/train.jsonl");
    slmkit::pipeline::save_dataset(val, o.out + "/val.jsonl");
    std::printf("wrote %zu train and %zu val sequences to %s\n", train.sequences.size(),
                val.sequences.size(), o.out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"slmctl: toy LM distillation, pruning, quantization and benchmarking"};
    app.require_subcommand(1);

    CommonOpts opt;
    auto* c_synth = app.add_subcommand("synth", "generate synthetic train/val datasets");
    auto* c_distill = app.add_subcommand("distill", "run a single distillation stage");
    auto* c_prune = app.add_subcommand("prune", "run a single pruning stage");
    auto* c_quant = app.add_subcommand("quantize", "run a single quantization stage");
    auto* c_eval = app.add_subcommand("eval", "evaluate val loss and AUC");
    auto* c_bench = app.add_subcommand("bench", "prefill/decode latency benchmark");
    auto* c_pipe = app.add_subcommand("pipeline", "run the full multi-stage pipeline");
    for (auto* c : {c_synth, c_distill, c_prune, c_quant, c_eval, c_bench, c_pipe})
        add_common(c, opt);

    std::string prune_kind = "mlp";
    c_prune->add_option("--kind", prune_kind, "mlp or heads")
        ->check(CLI::IsMember({"mlp", "heads"}));

    std::size_t bench_ctx = 0, bench_k = 0, bench_repeats = 0;
    bool bench_hot = false;
    c_bench->add_option("--context", bench_ctx, "prompt length in tokens");
    c_bench->add_option("--k", bench_k, "prompts per shared prefix");
    c_bench->add_flag("--hot", bench_hot, "reuse the shared-prefix KV cache");
    c_bench->add_option("--repeats", bench_repeats, "timing repeats");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (app.got_subcommand(c_synth)) return run_synth(opt);

        json cfg = base_config(opt);
        if (app.got_subcommand(c_pipe)) {
            // stages come from the config file as written
        } else if (app.got_subcommand(c_distill)) {
            cfg = lift_stage(cfg, "distill", "distill");
        } else if (app.got_subcommand(c_prune)) {
            cfg = lift_stage(cfg, "prune", prune_kind == "mlp" ? "prune_mlp" : "prune_heads");
        } else if (app.got_subcommand(c_quant)) {
            cfg = lift_stage(cfg, "quantize", "quantize");
        } else if (app.got_subcommand(c_eval)) {
            cfg = lift_stage(cfg, "eval", "eval");
        } else if (app.got_subcommand(c_bench)) {
            cfg = lift_stage(cfg, "bench", "bench");
            auto& st = cfg["stages"][0];
            if (bench_ctx > 0) st["context_len"] = bench_ctx;
            if (bench_k > 0) st["k"] = bench_k;
            if (bench_repeats > 0) st["repeats"] = bench_repeats;
            if (bench_hot) st["hot"] = true;
        }
        return run_stages(cfg, opt);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << "\n";
        return 2;
    }
}
