// fedsim: configuration-driven federated-learning simulator.
//
// Exit codes: 0 success, 2 config error, 3 runtime error.

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedsim/fedsim.hpp"

int main(int argc, char** argv) {
    CLI::App app{"fedsim: deterministic federated-learning simulator"};

    std::string config_path;
    std::string scenario_override;
    std::string out_override;
    std::int64_t seed_override = -1;
    bool validate_only = false;

    app.add_option("--config", config_path, "experiment config JSON")->required();
    app.add_option("--scenario", scenario_override,
                   "override scenario (fedavg-full | pfl-decoupled | lora-fl | trace-replay)");
    app.add_option("--seed", seed_override, "override the config seed");
    app.add_option("--out", out_override, "override the output directory");
    app.add_flag("--validate-only", validate_only, "check the config and exit");

    CLI11_PARSE(app, argc, argv);

    fedsim::ExperimentConfig cfg;
    try {
        const auto j = nlohmann::json::parse(fedsim::read_file(config_path));
        cfg = fedsim::parse_config(j);
        if (!scenario_override.empty()) cfg.scenario = fedsim::scenario_from_string(scenario_override);
        if (seed_override >= 0) {
            cfg.seed = static_cast<std::uint64_t>(seed_override);
            cfg.seed_set = true;
            cfg.rounds.seed = cfg.seed;
        }
        if (!out_override.empty()) cfg.output_dir = out_override;
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }

    const auto diags = cfg.validate();
    if (validate_only) {
        for (const auto& d : diags) std::cout << d.field << ": " << d.message << "\n";
        if (diags.empty()) std::cout << "config ok\n";
        return diags.empty() ? 0 : 2;
    }
    if (!diags.empty()) {
        for (const auto& d : diags) std::cerr << "config error: " << d.field << ": " << d.message << "\n";
        return 2;
    }

    try {
        fedsim::run_experiment(cfg);
    } catch (const fedsim::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 3;
    }
    std::cout << "wrote artifacts to " << cfg.output_dir << "\n";
    return 0;
}
