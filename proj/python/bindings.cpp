// Python bindings for the core library. Containers cross as lists and dicts.

#include "riskrl/audit.hpp"
#include "riskrl/environments.hpp"
#include "riskrl/harness.hpp"
#include "riskrl/quantile.hpp"
#include "riskrl/risk_metrics.hpp"
#include "riskrl/var_dp.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace riskrl;

namespace {

SoftLossParams soft_params(double kappa, double epsilon, double eta) {
    SoftLossParams p{kappa, epsilon, eta};
    p.validate();
    return p;
}

LossKind parse_loss(const std::string& name) {
    if (name == "hard") return LossKind::hard;
    if (name == "soft") return LossKind::soft;
    throw std::invalid_argument("loss must be hard or soft, got '" + name + "'");
}

py::dict solution_dict(const DPSolution& sol, StateId initial) {
    py::dict d;
    std::vector<std::vector<double>> values(sol.n_states);
    std::vector<std::vector<std::size_t>> greedy(sol.n_states);
    for (StateId s = 0; s < sol.n_states; ++s) {
        const auto row = sol.v.row(s);
        values[s].assign(row.begin(), row.end());
        for (std::size_t i = 0; i < sol.grid.size(); ++i) greedy[s].push_back(sol.greedy(s, i));
    }
    d["levels"] = std::vector<double>(sol.grid.levels().begin(), sol.grid.levels().end());
    d["values"] = values;
    d["greedy"] = greedy;
    d["initial_values"] = values.at(initial);
    d["iterations"] = sol.iterations;
    d["converged"] = sol.converged;
    return d;
}

py::dict log_dict(const TrainLog& log) {
    py::dict d;
    d["algorithm"] = to_string(log.algorithm);
    for (const auto& name : metric_names()) {
        std::vector<double> col;
        col.reserve(log.rows.size());
        for (const auto& row : log.rows) col.push_back(metric_value(row, name));
        d[py::str(name)] = col;
    }
    d["final_policy"] = log.final_policy.probs;
    return d;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "quantile-based risk-sensitive policy gradient core";

    m.def("empirical_var", [](std::vector<double> xs, double alpha) { return empirical_var(xs, alpha); },
          py::arg("returns"), py::arg("alpha"));
    m.def("empirical_cvar", [](std::vector<double> xs, double alpha) { return empirical_cvar(xs, alpha); },
          py::arg("returns"), py::arg("alpha"));
    m.def("quantile_loss", &quantile_loss, py::arg("delta"), py::arg("alpha"));
    m.def(
        "soft_quantile_loss",
        [](double delta, double alpha, double kappa, double epsilon) {
            return soft_quantile_loss(delta, alpha, soft_params(kappa, epsilon, kappa));
        },
        py::arg("delta"), py::arg("alpha"), py::arg("kappa") = 1.0, py::arg("epsilon") = 0.05);
    m.def(
        "soft_loss_grad",
        [](double delta, double alpha, double kappa, double epsilon) {
            return soft_loss_grad(delta, alpha, soft_params(kappa, epsilon, kappa));
        },
        py::arg("delta"), py::arg("alpha"), py::arg("kappa") = 1.0, py::arg("epsilon") = 0.05);

    m.def("grid_levels", [](std::size_t n) {
        QuantileGrid g(n);
        return std::vector<double>(g.levels().begin(), g.levels().end());
    });
    m.def("project_level", [](double alpha, std::size_t n) { return project_level(alpha, QuantileGrid(n)); },
          py::arg("alpha"), py::arg("n_levels"));
    m.def("monotone_head", [](std::vector<double> raw) { return monotone_head(raw); });

    m.def("environment_names", &environment_names);
    m.def(
        "path_returns",
        []() {
            const auto layout = parse_maze(default_maze_text());
            const auto maze = make_maze(layout);
            py::dict d;
            d["long"] = deterministic_path_return(maze, maze_path_actions(layout, true));
            d["short"] = deterministic_path_return(maze, maze_path_actions(layout, false));
            return d;
        },
        "deterministic returns of the safe and short maze paths under mean rewards");

    m.def(
        "dp_solve",
        [](const std::string& env, std::size_t n_levels, const std::string& loss, double kappa, double epsilon,
           double eta) {
            const auto mdp = make_environment(env);
            if (!mdp.is_exact()) throw std::invalid_argument("environment '" + env + "' has continuous rewards");
            NestedVIOptions opt;
            opt.loss = parse_loss(loss);
            if (opt.loss == LossKind::soft) opt.params = soft_params(kappa, epsilon, eta);
            DPSolution sol;
            {
                py::gil_scoped_release release;
                sol = nested_value_iteration(mdp, QuantileGrid(n_levels), opt);
            }
            return solution_dict(sol, mdp.initial_state());
        },
        py::arg("env"), py::arg("n_levels") = 10, py::arg("loss") = "hard", py::arg("kappa") = 0.5,
        py::arg("epsilon") = 0.05, py::arg("eta") = 0.5);

    m.def(
        "brute_force_var",
        [](const std::string& env, double alpha) {
            const auto mdp = make_environment(env);
            const auto r = brute_force_optimal_var(mdp, alpha, mdp.horizon());
            py::dict d;
            d["value"] = r.value;
            d["first_action"] = r.first_action;
            return d;
        },
        py::arg("env"), py::arg("alpha"));

    m.def(
        "train",
        [](const std::string& config_path, std::optional<std::vector<std::uint64_t>> seeds) {
            auto cfg = load_config(config_path);
            if (seeds) cfg.seeds = *seeds;
            std::vector<TrainLog> logs;
            {
                py::gil_scoped_release release;
                logs = run_seeds(cfg);
            }
            py::list out;
            for (const auto& log : logs) out.append(log_dict(log));
            return out;
        },
        py::arg("config"), py::arg("seeds") = py::none(),
        "train the seeds of a config file and return one dict of metric columns per seed");

    m.def(
        "audit",
        [](const std::string& scope) {
            if (!is_audit_scope(scope)) throw std::invalid_argument("unknown audit scope '" + scope + "'");
            std::vector<AuditResult> results;
            {
                py::gil_scoped_release release;
                results = run_audits(scope);
            }
            py::list out;
            for (const auto& r : results) {
                py::dict d;
                d["name"] = r.name;
                d["scope"] = r.scope;
                d["passed"] = r.passed;
                d["detail"] = r.detail;
                out.append(d);
            }
            return out;
        },
        py::arg("scope") = "all");
}
