#include <string>

#include "CLI11.hpp"
#include "oid/cli_runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Minimum-time excitation-signal design for system identification"};
    app.require_subcommand(1);

    std::string config, design_csv, out_dir;
    std::uint64_t seed = 0;
    int runs = -1;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--out", out_dir, "output directory (overrides the config)");
        sub->add_option("--seed", seed, "Monte Carlo base seed (overrides the config)");
        sub->add_option("--runs", runs, "Monte Carlo run count (overrides the config)");
    };

    CLI::App* design = app.add_subcommand("design", "design the excitation signal");
    design->add_option("config", config, "run configuration (JSON)")->required();
    add_common(design);

    CLI::App* validate = app.add_subcommand("validate", "Monte Carlo validation of a design");
    validate->add_option("config", config, "run configuration (JSON)")->required();
    validate->add_option("design", design_csv, "design.csv produced by `design`")->required();
    add_common(validate);

    CLI11_PARSE(app, argc, argv);

    oid::CliOverrides overrides;
    if (!out_dir.empty()) overrides.out_dir = out_dir;
    if (design->count("--seed") || validate->count("--seed")) overrides.seed = seed;
    if (runs >= 0) overrides.runs = runs;

    if (app.got_subcommand(design)) return oid::run_design(config, overrides);
    return oid::run_validate(config, design_csv, overrides);
}
