// Copyright the cobev contributors. Licensed under the Apache 2.0 license.
// See LICENSE in the project root.
//
// cobev: desk-scale multi-drone collaborative perception simulator.
//
//   cobev train  --scenario s.json --strategy lif-full --out run/
//   cobev run    --scenario s.json --strategy lif-full --params run/head_lif-full.params
//   cobev sweep  --scenario s.json --strategy lif-full --phi-dem 1.0 --phi-dem 0.0 --out run/
//   cobev report --scenario s.json --strategy late-fusion --out run/

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cobev/pipeline.hpp"
#include "cobev/svg.hpp"

namespace {

using namespace cobev;

struct CommonArgs {
    std::string scenario_path;
    std::string strategy_name = "lif-full";
    std::string policy_name = "uncertainty";
    std::string params_path;
    std::string out_dir = ".";
    std::vector<double> phi_dems;
    std::vector<std::uint64_t> budgets;
    std::optional<std::uint64_t> seed_override;
    bool background_priority = false;
    int threads = 1;
};

void add_common_flags(CLI::App* cmd, CommonArgs& args, bool with_sweep_axes) {
    cmd->add_option("--scenario", args.scenario_path, "Scenario JSON file")
        ->required();
    cmd->add_option("--strategy", args.strategy_name,
                    "no-fusion | late-fusion | lif-base | lif-full");
    cmd->add_option("--policy", args.policy_name, "uncertainty | objectness");
    cmd->add_option("--params", args.params_path, "Trained head parameters file");
    cmd->add_option("--out", args.out_dir, "Output directory");
    cmd->add_option("--seed", args.seed_override, "Override the scenario seed");
    cmd->add_option("--threads", args.threads, "Worker threads for the frame suite");
    cmd->add_flag("--background-priority", args.background_priority,
                  "Enable the certain-background sharing tier");
    if (with_sweep_axes) {
        cmd->add_option("--phi-dem", args.phi_dems,
                        "Demand threshold(s); repeat the flag to sweep");
        cmd->add_option("--budget-bytes", args.budgets,
                        "Per-message payload budget(s) in bytes");
    } else {
        args.phi_dems.clear();
    }
}

Scenario load(const CommonArgs& args) {
    Scenario scenario = load_scenario(args.scenario_path);
    if (args.seed_override) scenario.seed = *args.seed_override;
    return scenario;
}

std::string default_params_path(const CommonArgs& args, StrategyKind kind) {
    return (std::filesystem::path(args.out_dir) /
            ("head_" + to_string(kind) + ".params"))
        .string();
}

Strategy make_strategy(const CommonArgs& args, double phi_dem,
                       std::optional<std::uint64_t> budget) {
    Strategy strategy;
    strategy.kind = parse_strategy(args.strategy_name);
    strategy.policy.kind =
        args.policy_name == "objectness" ? PolicyKind::objectness : PolicyKind::uncertainty;
    if (args.policy_name != "objectness" && args.policy_name != "uncertainty")
        throw std::invalid_argument("unknown policy '" + args.policy_name + "'");
    strategy.policy.demand_threshold = phi_dem;
    strategy.policy.budget_bytes = budget;
    strategy.policy.background_priority = args.background_priority;
    return strategy;
}

void apply_scenario_policy(Strategy& strategy, const Scenario& scenario) {
    strategy.policy.detection_threshold = scenario.detection_threshold;
    strategy.policy.bg_max_sender_score = scenario.bg_max_sender_score;
    strategy.policy.bg_min_ego_uncertainty = scenario.bg_min_ego_uncertainty;
}

void load_head_if_needed(Strategy& strategy, const CommonArgs& args) {
    if (strategy.kind == StrategyKind::late_fusion) return;
    const std::string path = args.params_path.empty()
                                 ? default_params_path(args, strategy.kind)
                                 : args.params_path;
    strategy.head = load_params(path);
}

void ensure_out_dir(const std::string& dir) {
    std::filesystem::create_directories(dir);
}

int cmd_train(const CommonArgs& args) {
    const Scenario scenario = load(args);
    const StrategyKind kind = parse_strategy(args.strategy_name);
    const TrainResult result = train_pipeline(scenario, kind);
    ensure_out_dir(args.out_dir);
    const std::string path = args.params_path.empty() ? default_params_path(args, kind)
                                                      : args.params_path;
    save_params(result.params, path);
    std::printf("trained %s: %zu epochs, loss %.6f -> %.6f, params %s\n",
                to_string(kind).c_str(), result.loss_trace.size() - 1,
                result.loss_trace.front(), result.loss_trace.back(), path.c_str());
    return 0;
}

SuiteResult run_configured(const CommonArgs& args, const Scenario& scenario,
                           Strategy& strategy) {
    apply_scenario_policy(strategy, scenario);
    load_head_if_needed(strategy, args);
    return run_suite(scenario, strategy, args.threads);
}

std::string suite_summary(const Scenario& scenario, const SuiteResult& suite) {
    char buf[256];
    std::string out = suite.report.to_key_values();
    std::snprintf(buf, sizeof(buf),
                  "frames %d\npayload_bytes_total %llu\nmean_payload_bytes %.3f\n"
                  "preround_bytes_total %llu\nmessages %llu\n",
                  scenario.frames,
                  static_cast<unsigned long long>(suite.payload_bytes),
                  static_cast<double>(suite.payload_bytes) / scenario.frames,
                  static_cast<unsigned long long>(suite.preround_bytes),
                  static_cast<unsigned long long>(suite.message_count));
    return out + buf;
}

int cmd_run(const CommonArgs& args) {
    const Scenario scenario = load(args);
    const double phi = args.phi_dems.empty() ? 0.0 : args.phi_dems.front();
    const std::optional<std::uint64_t> budget =
        args.budgets.empty() ? std::nullopt
                             : std::optional<std::uint64_t>(args.budgets.front());
    Strategy strategy = make_strategy(args, phi, budget);
    const SuiteResult suite = run_configured(args, scenario, strategy);
    std::cout << suite_summary(scenario, suite);
    return 0;
}

int cmd_report(const CommonArgs& args) {
    const Scenario scenario = load(args);
    const double phi = args.phi_dems.empty() ? 0.0 : args.phi_dems.front();
    const std::optional<std::uint64_t> budget =
        args.budgets.empty() ? std::nullopt
                             : std::optional<std::uint64_t>(args.budgets.front());
    Strategy strategy = make_strategy(args, phi, budget);
    const SuiteResult suite = run_configured(args, scenario, strategy);
    ensure_out_dir(args.out_dir);
    const std::string path =
        (std::filesystem::path(args.out_dir) / "report.txt").string();
    write_text_file(path, suite_summary(scenario, suite));
    std::printf("wrote %s\n", path.c_str());
    return 0;
}

int cmd_sweep(const CommonArgs& args) {
    const Scenario scenario = load(args);
    if (args.phi_dems.empty() && args.budgets.empty())
        throw std::invalid_argument("sweep: pass --phi-dem and/or --budget-bytes values");
    Strategy strategy = make_strategy(args, 0.0, std::nullopt);
    apply_scenario_policy(strategy, scenario);
    load_head_if_needed(strategy, args);

    SweepSpec spec;
    spec.demand_thresholds = args.phi_dems;
    spec.budgets = args.budgets;
    if (!spec.demand_thresholds.empty() && !spec.budgets.empty())
        throw std::invalid_argument("sweep: sweep either --phi-dem or --budget-bytes, not both");

    const std::vector<SweepPoint> points = sweep(scenario, strategy, spec, args.threads);
    ensure_out_dir(args.out_dir);
    const std::string csv_path =
        (std::filesystem::path(args.out_dir) / "sweep.csv").string();
    const std::string svg_path =
        (std::filesystem::path(args.out_dir) / "sweep.svg").string();
    write_text_file(csv_path, sweep_csv(strategy, points, scenario.frames));
    write_text_file(svg_path, sweep_svg(strategy, points));
    std::printf("wrote %s and %s (%zu points)\n", csv_path.c_str(), svg_path.c_str(),
                points.size());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Desk-scale multi-drone collaborative BEV perception simulator"};
    app.require_subcommand(1);

    CommonArgs train_args, run_args, sweep_args, report_args;
    CLI::App* train = app.add_subcommand("train", "Train a strategy's decoder head");
    add_common_flags(train, train_args, false);
    CLI::App* run = app.add_subcommand("run", "Run one configuration and print metrics");
    add_common_flags(run, run_args, true);
    CLI::App* sweep_cmd =
        app.add_subcommand("sweep", "Sweep demand thresholds or byte budgets");
    add_common_flags(sweep_cmd, sweep_args, true);
    CLI::App* report =
        app.add_subcommand("report", "Run one configuration and write report.txt");
    add_common_flags(report, report_args, true);

    try {
        app.parse(argc, argv);
        if (train->parsed()) return cmd_train(train_args);
        if (run->parsed()) return cmd_run(run_args);
        if (sweep_cmd->parsed()) return cmd_sweep(sweep_args);
        if (report->parsed()) return cmd_report(report_args);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
