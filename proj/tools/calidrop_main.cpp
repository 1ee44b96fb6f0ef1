// Copyright 2026 The CaliDrop Simulator Authors
// SPDX-License-Identifier: Apache-2.0

// calidrop: experiment driver for prefill token eviction with speculative
// calibration. Exit codes: 0 success, 2 configuration error, 3 data error.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "calidrop/harness.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

/// Flags that override the JSON config. Each one only applies when given.
struct Overrides {
    std::string config_path;
    std::string trace;
    std::size_t budget = 0;
    double theta1 = 0.0;
    double theta2 = 0.0;
    std::string policy;
    std::string calibration_size;
    std::uint64_t seed = 0;
    std::string out;
    int workers = 1;
    double drift = 0.0;
    double scale = 0.0;
    std::size_t prompt_len = 0;
    std::size_t decode_len = 0;
    std::size_t n_layers = 0;
    std::size_t n_heads = 0;
    std::size_t d_k = 0;
    std::size_t d_v = 0;
    std::size_t sinks = 0;
    std::size_t window = 0;
    std::size_t kernel = 0;
    std::vector<std::string> comparisons;

    std::vector<std::pair<std::string, CLI::Option*>> opts;

    void attach(CLI::App& app) {
        const auto add = [&](const std::string& name, auto& var, const std::string& help) {
            opts.emplace_back(name, app.add_option(name, var, help));
        };
        add("--config", config_path, "JSON run configuration");
        add("--trace", trace, "KVT1 trace directory to replay");
        add("--budget", budget, "resident token budget");
        add("--theta1", theta1, "recompute threshold");
        add("--theta2", theta2, "calibrate threshold");
        add("--policy", policy, "eviction policy: streamingllm | h2o | snapkv");
        add("--calibration-size", calibration_size, "offloaded tokens kept for calibration, or inf");
        add("--seed", seed, "workload seed");
        add("--out", out, "output directory");
        add("--workers", workers, "parallel head workers");
        add("--drift", drift, "per-step query drift");
        add("--scale", scale, "key/value standard deviation");
        add("--prompt-len", prompt_len, "prompt length");
        add("--decode-len", decode_len, "decode steps");
        add("--layers", n_layers, "number of layers");
        add("--heads", n_heads, "heads per layer");
        add("--d-k", d_k, "query/key dim");
        add("--d-v", d_v, "value dim");
        add("--sinks", sinks, "streamingllm sink tokens");
        add("--window", window, "snapkv observation window");
        add("--kernel", kernel, "snapkv pooling kernel");
        opts.emplace_back("--comparisons",
                          app.add_option("--comparisons", comparisons, "EvictionOnly CaliDrop FullKV")->delimiter(','));
    }

    [[nodiscard]] bool given(const std::string& name) const {
        for (const auto& [n, o] : opts) {
            if (n == name) {
                return o->count() > 0;
            }
        }
        return false;
    }

    [[nodiscard]] calidrop::RunConfig resolve() const {
        calidrop::RunConfig c = given("--config") ? calidrop::load_config(config_path) : calidrop::RunConfig{};
        if (given("--trace")) c.trace_path = trace;
        if (given("--policy")) c.policy.kind = calidrop::parse_policy_kind(policy);
        if (given("--budget")) c.policy.budget = budget;
        if (given("--sinks")) c.policy.sinks = sinks;
        if (given("--window")) c.policy.window = window;
        if (given("--kernel")) c.policy.kernel = kernel;
        if (given("--theta1")) c.thresholds.theta1 = theta1;
        if (given("--theta2")) c.thresholds.theta2 = theta2;
        if (given("--calibration-size")) c.calibration_size = calidrop::parse_calibration_size(calibration_size);
        if (given("--seed")) c.workload.seed = seed;
        if (given("--out")) c.output_dir = out;
        if (given("--workers")) c.workers = workers;
        if (given("--drift")) c.workload.drift = drift;
        if (given("--scale")) c.workload.scale = scale;
        if (given("--prompt-len")) c.workload.prompt_len = prompt_len;
        if (given("--decode-len")) c.workload.decode_len = decode_len;
        if (given("--layers")) c.workload.dims.n_layers = n_layers;
        if (given("--heads")) c.workload.dims.n_heads = n_heads;
        if (given("--d-k")) c.workload.dims.d_k = d_k;
        if (given("--d-v")) c.workload.dims.d_v = d_v;
        if (given("--comparisons")) {
            c.comparisons.clear();
            for (const auto& s : comparisons) {
                c.comparisons.insert(calidrop::parse_comparison(s));
            }
        }
        c.validate();
        return c;
    }
};

std::vector<double> parse_grid(const std::vector<std::string>& items) {
    std::vector<double> out;
    for (const auto& s : items) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != s.size()) {
            throw calidrop::ConfigError("invalid grid value '" + s + "'");
        }
        out.push_back(v);
    }
    return out;
}

void print_summary(const calidrop::Summary& s) {
    std::cout << calidrop::summary_csv(
        s, {calidrop::Comparison::EvictionOnly, calidrop::Comparison::CaliDrop, calidrop::Comparison::FullKV});
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"prefill KV eviction with speculative calibration: simulator and experiments"};
    app.require_subcommand(1);

    Overrides simulate_o, replay_o, sweep_o, heatmap_o, calsize_o;

    auto* simulate = app.add_subcommand("simulate", "run on a synthetic drift workload");
    simulate_o.attach(*simulate);

    auto* replay = app.add_subcommand("replay", "run on a recorded KVT1 trace");
    replay_o.attach(*replay);
    replay->get_option("--trace")->required();

    auto* sweep = app.add_subcommand("sweep", "grid over (theta1, theta2)");
    sweep_o.attach(*sweep);
    std::vector<std::string> theta1_grid{"0.3", "0.5", "0.7", "0.9"};
    std::vector<std::string> theta2_grid{"0.95"};
    sweep->add_option("--theta1-grid", theta1_grid, "comma-separated theta1 values")->delimiter(',');
    sweep->add_option("--theta2-grid", theta2_grid, "comma-separated theta2 values")->delimiter(',');

    auto* heat = app.add_subcommand("heatmap", "query cosine-similarity matrix for one head");
    heatmap_o.attach(*heat);
    std::size_t layer = 0;
    std::size_t head = 0;
    std::size_t begin = 0;
    std::size_t end = 0;
    heat->add_option("--layer", layer, "layer index");
    heat->add_option("--head", head, "head index");
    heat->add_option("--begin", begin, "first query position (inclusive)");
    heat->add_option("--end", end, "last query position (exclusive); 0 means end of sequence");

    auto* calsize = app.add_subcommand("cal-size", "sweep calibration sizes");
    calsize_o.attach(*calsize);
    std::vector<std::string> sizes{"0", "16", "64", "inf"};
    calsize->add_option("--sizes", sizes, "comma-separated sizes; inf for unlimited")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (simulate->parsed()) {
            auto cfg = simulate_o.resolve();
            cfg.trace_path.reset();
            const auto r = calidrop::run(cfg);
            print_summary(calidrop::summarize(r));
        } else if (replay->parsed()) {
            const auto r = calidrop::run(replay_o.resolve());
            print_summary(calidrop::summarize(r));
        } else if (sweep->parsed()) {
            const auto cfg = sweep_o.resolve();
            const auto t1 = parse_grid(theta1_grid);
            const auto t2 = parse_grid(theta2_grid);
            const auto rows = calidrop::sweep(calidrop::resolve_trace(cfg), cfg, t1, t2);
            std::cout << calidrop::sweep_csv(rows);
        } else if (heat->parsed()) {
            const auto cfg = heatmap_o.resolve();
            const auto trace = calidrop::resolve_trace(cfg);
            const std::size_t stop = end == 0 ? trace.prompt_len + trace.decode_len : end;
            const auto m = calidrop::heatmap(trace, layer, head, begin, stop);
            calidrop::write_text(cfg.output_dir / "heatmap.csv", calidrop::heatmap_csv(m));
            std::cout << "wrote " << (cfg.output_dir / "heatmap.csv").string() << " (" << m.rows() << "x"
                      << m.rows() << ")\n";
        } else if (calsize->parsed()) {
            const auto cfg = calsize_o.resolve();
            std::vector<calidrop::CalibrationSize> parsed;
            for (const auto& s : sizes) {
                parsed.push_back(calidrop::parse_calibration_size(s));
            }
            const auto rows = calidrop::calibration_size_sweep(calidrop::resolve_trace(cfg), cfg, parsed);
            std::cout << calidrop::cal_size_csv(rows);
        }
    } catch (const calidrop::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const calidrop::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
