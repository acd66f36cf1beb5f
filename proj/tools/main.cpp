#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sampsd/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"SAM-enhanced poisoned-sample detection lab"};
    app.require_subcommand(1);

    sampsd::CliOptions opts;
    std::string values_arg;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opts.config_path, "JSON run config")->required();
        sub->add_option("--out", opts.out_dir, "output directory (overrides config)");
        sub->add_option("--seed", opts.seed, "master seed (overrides config)");
        sub->add_option("--jobs", opts.jobs, "parallel cells for sweeps/grids")
            ->check(CLI::PositiveNumber);
    };

    CLI::App* run = app.add_subcommand("run", "run the full detection pipeline once");
    add_common(run);

    CLI::App* sweep = app.add_subcommand("sweep", "sweep poisoning ratio or SAM rho");
    add_common(sweep);
    sweep->add_option("--axis", opts.axis, "sweep axis: p or rho");
    sweep->add_option("--values", values_arg, "comma-separated axis values (overrides config)");

    CLI::App* correlate =
        app.add_subcommand("correlate", "backdoor-effect vs detection correlation study");
    add_common(correlate);

    CLI::App* gen = app.add_subcommand("gen-data", "generate a dataset as IDX files + manifest");
    add_common(gen);

    CLI::App* inspect = app.add_subcommand("inspect", "print a report summary");
    inspect->add_option("--config", opts.config_path, "report.json (or its directory)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;  // bad usage is a config error
    }

    if (!values_arg.empty()) {
        std::string token;
        for (char c : values_arg + ",") {
            if (c == ',') {
                if (!token.empty()) {
                    try {
                        opts.values.push_back(std::stod(token));
                    } catch (const std::exception&) {
                        std::cerr << "config error: bad --values entry '" << token << "'\n";
                        return 2;
                    }
                    token.clear();
                }
            } else {
                token += c;
            }
        }
    }

    if (run->parsed()) return sampsd::cmd_run(opts);
    if (sweep->parsed()) return sampsd::cmd_sweep(opts);
    if (correlate->parsed()) return sampsd::cmd_correlate(opts);
    if (gen->parsed()) return sampsd::cmd_gen_data(opts);
    if (inspect->parsed()) return sampsd::cmd_inspect(opts);
    return 2;
}
