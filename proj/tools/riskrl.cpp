// riskrl: train, audit, solve and plot quantile-based risk-sensitive agents.

#include "riskrl/harness.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"risk-sensitive policy gradient experiments"};
    app.require_subcommand(1);

    std::string config;
    auto* train = app.add_subcommand("train", "train every seed listed in a config file");
    train->add_option("config", config, "experiment config (.ini)")->required();

    std::string scope = "all";
    auto* audit = app.add_subcommand("audit", "run property audits");
    audit->add_option("scope", scope, "all, metrics, dp, gradients or props");

    std::string env, levels, loss, out_dir;
    auto* dp = app.add_subcommand("dp-solve", "nested quantile value iteration on an exact environment");
    dp->add_option("env", env, "environment name")->required();
    dp->add_option("levels", levels, "number of grid levels")->required();
    dp->add_option("loss", loss, "hard or soft")->required();
    dp->add_option("out", out_dir, "output directory")->required();

    std::string pattern, metric;
    auto* plot = app.add_subcommand("plot-data", "mean and standard error across per-seed logs");
    plot->add_option("glob", pattern, "pattern matching per-seed CSV files")->required();
    plot->add_option("metric", metric, "column to summarize")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*train) return riskrl::cmd_train(config, std::cout, std::cerr);
        if (*audit) return riskrl::cmd_audit(scope, std::cout, std::cerr);
        if (*dp) return riskrl::cmd_dp_solve(env, levels, loss, out_dir, std::cout, std::cerr);
        if (*plot) return riskrl::cmd_plot_data(pattern, metric, std::cout, std::cerr);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
