// Acceptance checks: one PASS/FAIL line per criterion. Arguments select
// criteria ("4-10", "1,3"); the default runs all ten.

#include "riskrl/audit.hpp"
#include "riskrl/environments.hpp"
#include "riskrl/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

using namespace riskrl;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
    std::cout << "criterion " << id << ": " << (ok ? "PASS" : "FAIL") << "  " << detail << std::endl;
    if (!ok) ++failures;
}

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct MazeSummary {
    double mean_return = 0.0;
    double long_path_rate = 0.0;
    double seconds = 0.0;
    std::size_t seeds = 0;
    std::size_t iterations = 0;
};

// Means over seeds and over the final 10% of iterations.
MazeSummary run_maze(const std::string& config_name, const fs::path& out_dir) {
    const auto cfg = load_config((fs::path(RISKRL_SOURCE_DIR) / "configs" / config_name).string());
    const auto start = Clock::now();
    const auto logs = run_seeds(cfg);
    MazeSummary s;
    s.seconds = seconds_since(start);
    s.seeds = logs.size();
    s.iterations = cfg.train.n_iterations;
    const std::size_t from = cfg.train.n_iterations - std::max<std::size_t>(1, cfg.train.n_iterations / 10);
    std::size_t n = 0;
    std::vector<std::vector<IterationLog>> runs;
    for (const auto& log : logs) {
        for (std::size_t m = from; m < log.rows.size(); ++m) {
            s.mean_return += log.rows[m].mean_return;
            s.long_path_rate += metric_value(log.rows[m], "long_path_rate");
            ++n;
        }
        runs.push_back(log.rows);
    }
    s.mean_return /= static_cast<double>(n);
    s.long_path_rate /= static_cast<double>(n);
    fs::create_directories(out_dir);
    std::ofstream(out_dir / (fs::path(config_name).stem().string() + "_aggregate.csv"))
        << format_aggregate_csv(runs, cfg.train.n_trajectories);
    return s;
}

std::string describe(const MazeSummary& s) {
    return "final-10% mean return " + fmt("%.3f", s.mean_return) + ", long-path rate " +
           fmt("%.3f", s.long_path_rate) + " over " + std::to_string(s.seeds) + " seeds x " +
           std::to_string(s.iterations) + " iterations (" + fmt("%.0f", s.seconds) + " s)";
}

std::set<int> parse_selection(int argc, char** argv) {
    std::set<int> chosen;
    if (argc < 2) {
        for (int i = 1; i <= 10; ++i) chosen.insert(i);
        return chosen;
    }
    for (int a = 1; a < argc; ++a) {
        std::stringstream ss(argv[a]);
        std::string part;
        while (std::getline(ss, part, ',')) {
            const auto dash = part.find('-');
            const int lo = std::stoi(part.substr(0, dash));
            const int hi = dash == std::string::npos ? lo : std::stoi(part.substr(dash + 1));
            for (int i = lo; i <= hi; ++i) chosen.insert(i);
        }
    }
    return chosen;
}

} // namespace

int main(int argc, char** argv) {
    std::set<int> chosen;
    try {
        chosen = parse_selection(argc, argv);
    } catch (const std::exception&) {
        std::cerr << "usage: acceptance [criteria, e.g. 4-10 or 1,3]\n";
        return 2;
    }
    const fs::path out_dir = fs::current_path() / "acceptance_runs";

    try {
        const auto layout = parse_maze(default_maze_text());
        const auto maze = make_maze(layout);
        const double safe_return = deterministic_path_return(maze, maze_path_actions(layout, true));
        const double short_return = deterministic_path_return(maze, maze_path_actions(layout, false));

        MazeSummary var_run, pg_run;
        const bool need_var = chosen.count(1) || chosen.count(2);
        if (need_var) var_run = run_maze("maze_cvar_var.ini", out_dir);
        if (chosen.count(1)) {
            const double gap = std::abs(var_run.mean_return - safe_return);
            report(1, var_run.long_path_rate >= 0.9 && gap <= 0.15 * std::abs(safe_return),
                   describe(var_run) + "; long-path return " + fmt("%.3f", safe_return) + ", allowed gap " +
                       fmt("%.3f", 0.15 * std::abs(safe_return)));
        }
        if (chosen.count(2)) {
            pg_run = run_maze("maze_cvar_pg.ini", out_dir);
            const bool vanishing = vanishing_gradient_audit();
            report(2,
                   pg_run.mean_return <= var_run.mean_return - 30.0 && pg_run.long_path_rate <= 0.3 && vanishing,
                   describe(pg_run) + "; CVaR-VaR mean return " + fmt("%.3f", var_run.mean_return) +
                       ", flat-tail gradient " + (vanishing ? "exactly zero" : "NONZERO"));
        }
        if (chosen.count(3)) {
            const auto rf = run_maze("maze_reinforce.ini", out_dir);
            const double gap = std::abs(rf.mean_return - short_return);
            report(3, rf.long_path_rate <= 0.2 && gap <= 0.15 * std::abs(short_return),
                   describe(rf) + "; short-path expected return " + fmt("%.3f", short_return) + ", allowed gap " +
                       fmt("%.3f", 0.15 * std::abs(short_return)));
        }
        if (chosen.count(4)) {
            const auto c = contraction_audit(100, {0.5, 0.05, 0.5}, 17);
            report(4, c.pairs == 100 && c.violations == 0,
                   std::to_string(c.violations) + " violations in " + std::to_string(c.pairs) +
                       " pairs, worst ratio " + fmt("%.5f", c.worst_ratio) + " vs bound " + fmt("%.5f", c.bound));
        }
        if (chosen.count(5)) {
            const auto o = fixed_point_oracle_audit(20, 51, 19);
            report(5, o.mdps >= 20 && o.failures == 0 && o.seconds <= 60.0,
                   std::to_string(o.failures) + " mismatches in " + std::to_string(o.comparisons) +
                       " interior levels over " + std::to_string(o.mdps) + " MDPs, I=51, " +
                       fmt("%.2f", o.seconds) + " s" + (o.first_failure.empty() ? "" : "; " + o.first_failure));
        }
        if (chosen.count(6)) {
            const auto e = execution_equivalence_audit(1000, 10, 23);
            report(6, e.episodes == 1000 && e.mismatches == 0,
                   std::to_string(e.mismatches) + " differing action sequences in " + std::to_string(e.episodes) +
                       " episodes");
        }
        if (chosen.count(7)) {
            bool ok = true;
            std::string detail;
            for (double alpha : {0.05, 0.25, 0.5, 0.95}) {
                const auto r = elicitability_audit(alpha, 10000, 7);
                ok = ok && r.passed;
                detail += "alpha " + fmt("%.2f", alpha) + ": |err| " + fmt("%.5f", std::abs(r.estimate - r.empirical)) +
                          " <= " + fmt("%.5f", 0.01 * r.iqr) + "; ";
            }
            report(7, ok, detail);
        }
        if (chosen.count(8)) {
            const auto m = monotone_head_audit(10000, 10, 31);
            report(8, m.vectors >= 10000 && m.violations == 0,
                   std::to_string(m.violations) + " violations in " + std::to_string(m.vectors) + " vectors");
        }
        if (chosen.count(9)) {
            const auto g = gradient_check_audit(100, 29);
            report(9, g.points == 100 && g.policy_max_error <= 1e-4 && g.value_max_error <= 1e-4,
                   "policy " + fmt("%.3g", g.policy_max_error) + ", value loss " + fmt("%.3g", g.value_max_error) +
                       " max relative error at " + std::to_string(g.points) + " points");
        }
        if (chosen.count(10)) {
            const auto d = cvar_dual_audit(100, 37);
            report(10, d.samples == 100 && d.failures == 0,
                   std::to_string(d.failures) + " failures in " + std::to_string(d.samples) +
                       " samples, worst gap " + fmt("%.3f", d.worst_gap_in_cells) + " cells");
        }
    } catch (const std::exception& e) {
        std::cout << "acceptance aborted: " << e.what() << std::endl;
        return 1;
    }
    std::cout << (failures == 0 ? "all selected criteria passed" : std::to_string(failures) + " criteria failed")
              << std::endl;
    return failures == 0 ? 0 : 1;
}
