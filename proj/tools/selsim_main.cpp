// selsim: split edge learning simulator CLI.
//
// Subcommands: train, latency, plan, plot, sweep.
// Exit codes: 0 ok, 1 runtime error, 2 config error.

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "selsim/config.hpp"
#include "selsim/runner.hpp"

namespace {

selsim::RunConfig load_with_overrides(const std::string& config_path,
                                      std::optional<uint64_t> seed,
                                      const std::string& out_dir, selsim::Json* raw = nullptr) {
    selsim::Json root = selsim::load_json_file(config_path);
    if (seed) root["seed"] = *seed;
    if (raw) *raw = root;
    selsim::RunConfig cfg = selsim::parse_run_config(root);
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"selsim: split edge learning simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::optional<uint64_t> seed;
    std::vector<std::string> traces;

    auto add_common = [&](CLI::App* cmd, bool needs_config) {
        if (needs_config)
            cmd->add_option("--config", config_path, "run configuration file")->required();
        cmd->add_option("--seed", seed, "override the config seed");
        cmd->add_option("--out", out_dir, "output directory (overrides config)");
    };

    CLI::App* train = app.add_subcommand("train", "run the configured protocol, write traces");
    add_common(train, true);
    CLI::App* latency = app.add_subcommand(
        "latency", "three-architecture latency sweep over dataset sizes");
    add_common(latency, true);
    CLI::App* plan = app.add_subcommand("plan", "run the configured planner, write plan.json");
    add_common(plan, true);
    CLI::App* plot = app.add_subcommand("plot", "render charts from trace.csv files");
    plot->add_option("traces", traces, "trace.csv paths")->required();
    plot->add_option("--out", out_dir, "output directory")->required();
    CLI::App* sweep = app.add_subcommand("sweep", "grid of training runs over one parameter");
    add_common(sweep, true);

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) {
            selsim::RunConfig cfg = load_with_overrides(config_path, seed, out_dir);
            selsim::RunSummary s = selsim::run_training(cfg, cfg.output_dir);
            std::printf("train: %lld rounds, final accuracy %.4f, %.6g simulated s, %lld bytes\n",
                        static_cast<long long>(s.rounds), s.final_accuracy, s.total_sim_seconds,
                        static_cast<long long>(s.total_bytes));
            std::printf("wrote %s/{trace.csv,links.csv,messages.csv,summary.json}\n",
                        cfg.output_dir.c_str());
        } else if (latency->parsed()) {
            selsim::RunConfig cfg = load_with_overrides(config_path, seed, out_dir);
            selsim::run_latency_sweep(cfg, cfg.output_dir);
            std::printf("wrote %s/latency.csv\n", cfg.output_dir.c_str());
        } else if (plan->parsed()) {
            selsim::RunConfig cfg = load_with_overrides(config_path, seed, out_dir);
            selsim::Json report = selsim::run_planner(cfg, cfg.output_dir);
            std::printf("%s\n", report.dump(2).c_str());
            std::printf("wrote %s/{plan.json,report.json}\n", cfg.output_dir.c_str());
        } else if (plot->parsed()) {
            auto written = selsim::run_plots(traces, out_dir);
            for (const auto& p : written) std::printf("wrote %s\n", p.c_str());
        } else if (sweep->parsed()) {
            selsim::Json root;
            selsim::RunConfig cfg = load_with_overrides(config_path, seed, out_dir, &root);
            selsim::run_sweep(root, cfg.output_dir);
            std::printf("wrote %s/sweep_summary.csv\n", cfg.output_dir.c_str());
        }
    } catch (const selsim::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
