// adlab - desk-scale multi-stage ads ranking laboratory.
//
// Verbs:
//   run          one scenario (config's variant) end to end
//   ablate       mtl_full + the ablation variants over a shared world
//   sweep        repeat a scenario across values of one config knob
//   replay-eval  re-evaluate a saved run directory without retraining
//
// Exit codes: 0 success, 1 configuration error, 2 runtime failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "adlab/experiment.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir = "out";
    int64_t seed = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "Scenario config file (JSON)");
    cmd->add_option("--set", args.overrides,
                    "Override a config value, dot.path=value (repeatable)");
    cmd->add_option("--out", args.out_dir, "Output directory");
    cmd->add_option("--seed", args.seed, "Override the scenario seed");
}

adlab::ScenarioConfig resolve_config(const CommonArgs& args) {
    std::vector<std::string> overrides = args.overrides;
    if (args.seed >= 0)
        overrides.push_back("seed=" + std::to_string(args.seed));
    if (args.config_path.empty())
        return adlab::default_scenario(overrides);
    return adlab::load_scenario(args.config_path, overrides);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"adlab: multi-stage ads ranking laboratory"};
    app.require_subcommand(1);

    CommonArgs run_args, ablate_args, sweep_args, replay_args;
    std::string sweep_param;
    std::vector<std::string> sweep_values;
    std::string replay_dir;

    CLI::App* run_cmd = app.add_subcommand("run", "Run one scenario");
    add_common(run_cmd, run_args);

    CLI::App* ablate_cmd =
        app.add_subcommand("ablate", "Run the ablation matrix");
    add_common(ablate_cmd, ablate_args);

    CLI::App* sweep_cmd =
        app.add_subcommand("sweep", "Sweep one config knob across values");
    add_common(sweep_cmd, sweep_args);
    sweep_cmd->add_option("--param", sweep_param, "Config dot-path to sweep")
        ->required();
    sweep_cmd->add_option("--values", sweep_values,
                          "Values to apply at the dot-path (repeatable)");

    CLI::App* replay_cmd = app.add_subcommand(
        "replay-eval", "Re-evaluate a saved run from its checkpoints");
    add_common(replay_cmd, replay_args);
    replay_cmd
        ->add_option("--checkpoint", replay_dir,
                     "Run directory produced by a previous run/ablate")
        ->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) {
            adlab::ScenarioConfig config = resolve_config(run_args);
            adlab::ArtifactWriter writer(run_args.out_dir, config);
            adlab::RunReport report = adlab::run_scenario(config, &writer);
            std::cout << adlab::report_to_markdown(report);
            std::cerr << "[adlab] artifacts in " << writer.root().string() << "\n";
        } else if (ablate_cmd->parsed()) {
            adlab::ScenarioConfig config = resolve_config(ablate_args);
            adlab::ArtifactWriter writer(ablate_args.out_dir, config);
            adlab::RunReport report = adlab::run_ablation_matrix(config, &writer);
            std::cout << adlab::report_to_markdown(report);
            std::cerr << "[adlab] artifacts in " << writer.root().string() << "\n";
        } else if (sweep_cmd->parsed()) {
            adlab::ScenarioConfig base = resolve_config(sweep_args);
            nlohmann::ordered_json base_json = adlab::scenario_to_json(base);
            std::filesystem::path out_root(sweep_args.out_dir);
            std::vector<adlab::RunReport> reports =
                adlab::run_sweep(base_json, sweep_param, sweep_values, &out_root);
            std::string csv =
                adlab::sweep_to_csv(sweep_param, sweep_values, reports);
            std::filesystem::create_directories(out_root);
            std::ofstream csv_out(out_root / "sweep_summary.csv");
            csv_out << csv;
            std::cout << csv;
        } else if (replay_cmd->parsed()) {
            adlab::ScenarioConfig config;
            {
                std::ifstream in(std::filesystem::path(replay_dir) /
                                 "report.json");
                if (!in)
                    throw adlab::ConfigError("no report.json in " + replay_dir);
                auto saved = nlohmann::ordered_json::parse(in);
                config = adlab::scenario_from_json(saved.at("config"));
            }
            adlab::ArtifactWriter writer(replay_args.out_dir, config);
            adlab::RunReport report = adlab::replay_eval(replay_dir, &writer);
            std::cout << adlab::report_to_markdown(report);
            std::cerr << "[adlab] artifacts in " << writer.root().string() << "\n";
        }
    } catch (const adlab::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
