#include "riskrl/harness.hpp"

#include "riskrl/audit.hpp"
#include "riskrl/environments.hpp"
#include "riskrl/var_dp.hpp"

#include <glob.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>
#include <thread>

namespace riskrl {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

template <class T>
T parse_integer(const std::string& v) {
    T x{};
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || p != v.data() + v.size() || v.empty())
        throw std::invalid_argument("expected a nonnegative integer, got '" + v + "'");
    return x;
}

double parse_real(const std::string& v) {
    double x = 0.0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || p != v.data() + v.size() || v.empty() || !std::isfinite(x))
        throw std::invalid_argument("expected a finite number, got '" + v + "'");
    return x;
}

bool parse_flag(const std::string& v) {
    if (v == "true" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "no" || v == "0") return false;
    throw std::invalid_argument("expected true or false, got '" + v + "'");
}

Representation parse_repr(const std::string& v) {
    if (v == "network") return Representation::network;
    if (v == "tabular") return Representation::tabular;
    throw std::invalid_argument("expected network or tabular, got '" + v + "'");
}

LossKind parse_loss(const std::string& v) {
    if (v == "hard") return LossKind::hard;
    if (v == "soft") return LossKind::soft;
    throw std::invalid_argument("expected hard or soft, got '" + v + "'");
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

const std::map<std::string, std::map<std::string, Setter>>& config_keys() {
    static const std::map<std::string, std::map<std::string, Setter>> keys = {
        {"experiment",
         {
             {"algorithm", [](ExperimentConfig& c, const std::string& v) { c.algorithm = parse_algorithm(v); }},
             {"seeds", [](ExperimentConfig& c, const std::string& v) { c.seeds = parse_seed_list(v); }},
             {"output_dir",
              [](ExperimentConfig& c, const std::string& v) {
                  if (v.empty()) throw std::invalid_argument("must not be empty");
                  c.output_dir = v;
              }},
         }},
        {"environment",
         {
             {"name",
              [](ExperimentConfig& c, const std::string& v) {
                  const auto names = environment_names();
                  if (v != "corridor" && std::find(names.begin(), names.end(), v) == names.end())
                      throw std::invalid_argument("unknown environment '" + v + "'");
                  c.environment.name = v;
              }},
             {"map", [](ExperimentConfig& c, const std::string& v) { c.environment.map_path = v; }},
             {"horizon",
              [](ExperimentConfig& c, const std::string& v) {
                  c.environment.horizon = parse_integer<std::size_t>(v);
                  if (c.environment.horizon == 0) throw std::invalid_argument("must be positive");
              }},
             {"red_scale", [](ExperimentConfig& c, const std::string& v) { c.environment.red_scale = parse_real(v); }},
             {"length", [](ExperimentConfig& c, const std::string& v) { c.environment.length = parse_integer<std::size_t>(v); }},
             {"noise", [](ExperimentConfig& c, const std::string& v) { c.environment.noise = parse_real(v); }},
         }},
        {"train",
         {
             {"n_trajectories", [](ExperimentConfig& c, const std::string& v) { c.train.n_trajectories = parse_integer<std::size_t>(v); }},
             {"n_iterations", [](ExperimentConfig& c, const std::string& v) { c.train.n_iterations = parse_integer<std::size_t>(v); }},
             {"alpha0", [](ExperimentConfig& c, const std::string& v) { c.train.alpha0 = parse_real(v); }},
             {"omega", [](ExperimentConfig& c, const std::string& v) { c.train.omega = parse_real(v); }},
             {"omega_schedule", [](ExperimentConfig& c, const std::string& v) { c.train.omega_schedule = OmegaSchedule::parse(v); }},
             {"gamma", [](ExperimentConfig& c, const std::string& v) { c.train.gamma = parse_real(v); }},
             {"lambda", [](ExperimentConfig& c, const std::string& v) { c.train.lambda = parse_real(v); }},
             {"policy_lr", [](ExperimentConfig& c, const std::string& v) { c.train.policy_lr = parse_real(v); }},
             {"value_lr", [](ExperimentConfig& c, const std::string& v) { c.train.value_lr = parse_real(v); }},
             {"normalize_advantage", [](ExperimentConfig& c, const std::string& v) { c.train.normalize_advantage = parse_flag(v); }},
             {"n_levels", [](ExperimentConfig& c, const std::string& v) { c.train.n_levels = parse_integer<std::size_t>(v); }},
             {"loss", [](ExperimentConfig& c, const std::string& v) { c.train.loss = parse_loss(v); }},
             {"policy_repr", [](ExperimentConfig& c, const std::string& v) { c.train.policy_repr = parse_repr(v); }},
             {"value_repr", [](ExperimentConfig& c, const std::string& v) { c.train.value_repr = parse_repr(v); }},
             {"embed", [](ExperimentConfig& c, const std::string& v) { c.train.embed = parse_integer<std::size_t>(v); }},
             {"hidden", [](ExperimentConfig& c, const std::string& v) { c.train.hidden = parse_integer<std::size_t>(v); }},
             {"policy_init_scale", [](ExperimentConfig& c, const std::string& v) { c.train.policy_init_scale = parse_real(v); }},
             {"sample_level", [](ExperimentConfig& c, const std::string& v) { c.train.sample_level = parse_flag(v); }},
             {"retcap_cap", [](ExperimentConfig& c, const std::string& v) { c.train.retcap_cap = parse_real(v); }},
             {"timing", [](ExperimentConfig& c, const std::string& v) { c.train.timing = parse_flag(v); }},
         }},
        {"soft_loss",
         {
             {"kappa", [](ExperimentConfig& c, const std::string& v) { c.train.soft.kappa = parse_real(v); }},
             {"epsilon", [](ExperimentConfig& c, const std::string& v) { c.train.soft.epsilon = parse_real(v); }},
             {"eta", [](ExperimentConfig& c, const std::string& v) { c.train.soft.eta = parse_real(v); }},
         }},
    };
    return keys;
}

std::string anchor(const std::string& source, std::size_t line) {
    return line ? source + ":" + std::to_string(line) + ": " : source + ": ";
}

} // namespace

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        part = trim(part);
        const auto dash = part.find('-');
        if (dash == std::string::npos) {
            seeds.push_back(parse_integer<std::uint64_t>(part));
            continue;
        }
        const auto lo = parse_integer<std::uint64_t>(trim(part.substr(0, dash)));
        const auto hi = parse_integer<std::uint64_t>(trim(part.substr(dash + 1)));
        if (hi < lo || hi - lo >= 100000) throw std::invalid_argument("bad seed range '" + part + "'");
        for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
    }
    if (seeds.empty()) throw std::invalid_argument("seed list is empty");
    auto sorted = seeds;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw std::invalid_argument("seed list repeats a seed");
    return seeds;
}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
    ExperimentConfig cfg;
    std::map<std::string, std::size_t> seen; // "section.key" -> line
    std::string section;
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = raw;
        const auto comment = line.find_first_of("#;");
        if (comment != std::string::npos) line = line.substr(0, comment);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(anchor(source, line_no) + "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (!config_keys().count(section))
                throw ConfigError(anchor(source, line_no) + "unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(anchor(source, line_no) + "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty()) throw ConfigError(anchor(source, line_no) + key + ": key outside any section");
        const auto& keys = config_keys().at(section);
        const auto it = keys.find(key);
        if (it == keys.end()) throw ConfigError(anchor(source, line_no) + "unknown key '" + key + "' in [" + section + "]");
        const std::string full = section + "." + key;
        if (seen.count(full))
            throw ConfigError(anchor(source, line_no) + key + ": already set on line " + std::to_string(seen[full]));
        seen[full] = line_no;
        try {
            it->second(cfg, value);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(anchor(source, line_no) + key + ": " + e.what());
        }
    }
    auto line_of = [&](const std::string& full) -> std::size_t {
        const auto f = seen.find(full);
        return f == seen.end() ? 0 : f->second;
    };
    try {
        cfg.train.validate();
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        const std::string field = msg.substr(0, msg.find(':'));
        const std::size_t line = field == "soft" ? std::max({line_of("soft_loss.kappa"), line_of("soft_loss.epsilon"),
                                                            line_of("soft_loss.eta")})
                                                 : line_of("train." + field);
        throw ConfigError(anchor(source, line) + msg);
    }
    if (cfg.algorithm == Algorithm::retcap && cfg.train.gamma != 1.0)
        throw ConfigError(anchor(source, line_of("train.gamma") ? line_of("train.gamma") : line_of("experiment.algorithm")) +
                          "gamma: return capping requires gamma = 1");
    if (cfg.environment.name == "noisy_corridor" || cfg.environment.name == "corridor") {
        if (cfg.environment.length < 3)
            throw ConfigError(anchor(source, line_of("environment.length")) + "length: must be at least 3");
        if (!(cfg.environment.noise >= 0.0))
            throw ConfigError(anchor(source, line_of("environment.noise")) + "noise: must be nonnegative");
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const std::runtime_error& e) {
        throw ConfigError(e.what());
    }
    ExperimentConfig cfg = parse_config(text, path);
    if (!cfg.environment.map_path.empty() && fs::path(cfg.environment.map_path).is_relative())
        cfg.environment.map_path = (fs::path(path).parent_path() / cfg.environment.map_path).string();
    return cfg;
}

TabularMDP build_environment(const EnvironmentSpec& spec) {
    TabularMDP mdp;
    if (spec.name == "maze" || spec.name == "maze_gaussian") {
        MazeOptions opt;
        opt.red_scale = spec.red_scale;
        opt.gaussian_red = spec.name == "maze_gaussian";
        if (spec.horizon) opt.horizon = spec.horizon;
        const std::string text = spec.map_path.empty() ? default_maze_text() : read_file(spec.map_path);
        mdp = make_maze(parse_maze(text), opt);
    } else if (spec.name == "noisy_corridor" || spec.name == "corridor") {
        mdp = make_noisy_corridor(spec.length, spec.noise);
        if (spec.horizon) mdp.set_horizon(spec.horizon);
    } else {
        mdp = make_environment(spec.name);
        if (spec.horizon) mdp.set_horizon(spec.horizon);
    }
    return mdp;
}

std::size_t worker_count(std::size_t jobs) {
    std::size_t n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("RISKRL_THREADS")) {
        std::size_t cap = 0;
        try {
            cap = parse_integer<std::size_t>(trim(env));
        } catch (const std::invalid_argument&) {
            cap = 0;
        }
        if (cap == 0) throw std::invalid_argument("RISKRL_THREADS must be a positive integer");
        n = cap;
    }
    return std::max<std::size_t>(1, std::min(n, jobs));
}

std::vector<TrainLog> run_seeds(const ExperimentConfig& cfg) {
    const TabularMDP mdp = build_environment(cfg.environment);
    const std::size_t n = cfg.seeds.size();
    std::vector<TrainLog> logs(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                TrainConfig tc = cfg.train;
                tc.seed = cfg.seeds[i];
                logs[i] = train(mdp, tc, cfg.algorithm);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t workers = worker_count(n);
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    return logs;
}

// ---------------------------------------------------------------------------
// CSV

std::string format_number(double x) {
    if (x == 0.0) return "0"; // folds -0
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
    if (ec != std::errc()) throw std::runtime_error("number formatting failed");
    return std::string(buf, p);
}

std::string format_train_csv(const TrainLog& log) {
    std::string out = std::string(kTrainLogSchema) + " algorithm=" + to_string(log.algorithm) + "\n";
    out += kTrainLogHeader;
    out += '\n';
    for (const auto& r : log.rows) {
        out += std::to_string(r.iter);
        for (double x : {r.mean_return, r.cvar_alpha, r.risk_event_rate, r.omega, r.wall_ms}) {
            out += ',';
            out += format_number(x);
        }
        out += '\n';
    }
    return out;
}

std::vector<IterationLog> parse_train_csv(const std::string& text, const std::string& source) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    bool schema = false, header = false;
    std::vector<IterationLog> rows;
    auto fail = [&](const std::string& why) { throw std::runtime_error(anchor(source, line_no) + why); };
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (line.rfind(kTrainLogSchema, 0) == 0) schema = true;
            continue;
        }
        if (!header) {
            if (!schema) fail("missing schema line '" + std::string(kTrainLogSchema) + "'");
            if (line != kTrainLogHeader) fail("unexpected header '" + line + "'");
            header = true;
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 6) fail("expected 6 fields, got " + std::to_string(cells.size()));
        IterationLog r;
        try {
            r.iter = parse_integer<std::size_t>(cells[0]);
            r.mean_return = parse_real(cells[1]);
            r.cvar_alpha = parse_real(cells[2]);
            r.risk_event_rate = parse_real(cells[3]);
            r.omega = parse_real(cells[4]);
            r.wall_ms = parse_real(cells[5]);
        } catch (const std::invalid_argument& e) {
            fail(e.what());
        }
        if (r.iter != rows.size()) fail("iterations must count up from 0");
        rows.push_back(r);
    }
    if (!header) fail("no header row");
    return rows;
}

std::vector<std::string> metric_names() {
    return {"mean_return", "cvar_alpha", "risk_event_rate", "long_path_rate", "omega", "wall_ms"};
}

bool is_metric(const std::string& metric) {
    const auto names = metric_names();
    return std::find(names.begin(), names.end(), metric) != names.end();
}

double metric_value(const IterationLog& row, const std::string& metric) {
    if (metric == "mean_return") return row.mean_return;
    if (metric == "cvar_alpha") return row.cvar_alpha;
    if (metric == "risk_event_rate") return row.risk_event_rate;
    if (metric == "long_path_rate") return 1.0 - row.risk_event_rate;
    if (metric == "omega") return row.omega;
    if (metric == "wall_ms") return row.wall_ms;
    throw std::invalid_argument("unknown metric '" + metric + "'");
}

MeanStderr mean_stderr(const std::vector<double>& xs) {
    if (xs.empty()) throw std::invalid_argument("mean of an empty set");
    const double n = static_cast<double>(xs.size());
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;
    if (xs.size() == 1) return {mean, 0.0};
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
}

namespace {

void check_runs(const std::vector<std::vector<IterationLog>>& runs) {
    if (runs.empty()) throw std::invalid_argument("no runs to aggregate");
    for (const auto& r : runs)
        if (r.size() != runs.front().size()) throw std::invalid_argument("runs differ in length");
}

MeanStderr across(const std::vector<std::vector<IterationLog>>& runs, std::size_t it, const std::string& metric) {
    std::vector<double> xs;
    xs.reserve(runs.size());
    for (const auto& r : runs) xs.push_back(metric_value(r[it], metric));
    return mean_stderr(xs);
}

} // namespace

std::string format_aggregate_csv(const std::vector<std::vector<IterationLog>>& runs,
                                 std::size_t trajectories_per_iter) {
    check_runs(runs);
    const std::vector<std::string> metrics = {"mean_return", "cvar_alpha", "risk_event_rate", "omega", "wall_ms"};
    std::string out = std::string(kAggregateSchema) + " runs=" + std::to_string(runs.size()) + "\n";
    out += "iter,trajectories";
    for (const auto& m : metrics) out += "," + m + "_mean," + m + "_stderr";
    out += '\n';
    for (std::size_t it = 0; it < runs.front().size(); ++it) {
        out += std::to_string(it) + "," + std::to_string((it + 1) * trajectories_per_iter);
        for (const auto& m : metrics) {
            const auto ms = across(runs, it, m);
            out += "," + format_number(ms.mean) + "," + format_number(ms.stderr_);
        }
        out += '\n';
    }
    return out;
}

std::string format_plot_data(const std::vector<std::vector<IterationLog>>& runs, const std::string& metric) {
    check_runs(runs);
    if (!is_metric(metric)) throw std::invalid_argument("unknown metric '" + metric + "'");
    std::string out = "# iter " + metric + "_mean " + metric + "_stderr (runs=" + std::to_string(runs.size()) + ")\n";
    for (std::size_t it = 0; it < runs.front().size(); ++it) {
        const auto ms = across(runs, it, metric);
        out += std::to_string(it) + " " + format_number(ms.mean) + " " + format_number(ms.stderr_) + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_train(const std::string& config_path, std::ostream& out, std::ostream& err) {
    ExperimentConfig cfg;
    try {
        cfg = load_config(config_path);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    std::vector<TrainLog> logs;
    try {
        logs = run_seeds(cfg);
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: training failed: " << e.what() << "\n";
        return 1;
    }
    try {
        const fs::path dir(cfg.output_dir);
        fs::create_directories(dir);
        std::vector<std::vector<IterationLog>> runs;
        for (std::size_t i = 0; i < logs.size(); ++i) {
            std::string text = format_train_csv(logs[i]);
            // seed in the schema line keeps files self-describing
            text.insert(text.find('\n'), " seed=" + std::to_string(cfg.seeds[i]));
            write_file(dir / ("seed_" + std::to_string(cfg.seeds[i]) + ".csv"), text);
            runs.push_back(logs[i].rows);
            const std::size_t n = logs[i].rows.size(), tail = std::max<std::size_t>(1, n / 10);
            double ret = 0.0, risk = 0.0;
            for (std::size_t k = n - tail; k < n; ++k) {
                ret += logs[i].rows[k].mean_return;
                risk += logs[i].rows[k].risk_event_rate;
            }
            out << "seed " << cfg.seeds[i] << ": final mean_return " << format_number(ret / static_cast<double>(tail))
                << ", risk_event_rate " << format_number(risk / static_cast<double>(tail)) << "\n";
        }
        write_file(dir / "aggregate.csv", format_aggregate_csv(runs, cfg.train.n_trajectories));
        out << "wrote " << logs.size() + 1 << " files to " << dir.string() << "\n";
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

int cmd_audit(const std::string& scope, std::ostream& out, std::ostream& err) {
    if (!is_audit_scope(scope)) {
        err << "error: unknown audit scope '" << scope << "' (all, metrics, dp, gradients, props)\n";
        return 2;
    }
    std::vector<AuditResult> results;
    try {
        results = run_audits(scope);
    } catch (const std::exception& e) {
        err << "error: audit aborted: " << e.what() << "\n";
        return 1;
    }
    bool ok = true;
    for (const auto& r : results) {
        out << (r.passed ? "PASS  " : "FAIL  ") << r.scope << "/" << r.name << "  " << r.detail << "\n";
        ok = ok && r.passed;
    }
    out << (ok ? "all audits passed" : "audit failures") << " (" << results.size() << " checks)\n";
    return ok ? 0 : 1;
}

int cmd_dp_solve(const std::string& env, const std::string& n_levels, const std::string& loss,
                 const std::string& out_dir, std::ostream& out, std::ostream& err) {
    TabularMDP mdp;
    std::size_t levels = 0;
    NestedVIOptions opt;
    try {
        mdp = make_environment(env);
        levels = parse_integer<std::size_t>(n_levels);
        if (levels == 0) throw std::invalid_argument("grid size must be positive");
        opt.loss = parse_loss(loss);
        if (!mdp.is_exact()) throw std::invalid_argument("environment '" + env + "' has continuous rewards");
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    try {
        const QuantileGrid grid(levels);
        const DPSolution sol = nested_value_iteration(mdp, grid, opt);
        const fs::path dir(out_dir);
        fs::create_directories(dir);
        write_file(dir / "snapshot.csv", solution_snapshot_csv(sol));
        write_file(dir / "levels.csv", solution_level_table(sol, mdp.initial_state()));
        out << env << ": " << (sol.converged ? "converged" : "stopped") << " after " << sol.iterations
            << " sweeps (last change " << format_number(sol.last_change) << ")\n";
        for (std::size_t i = 0; i < levels; ++i)
            out << "  level " << format_number(grid.level(i)) << "  value " << format_number(sol.v.at(mdp.initial_state(), i))
                << "  action " << sol.greedy(mdp.initial_state(), i) << "\n";
        if (!sol.converged) {
            err << "error: value iteration did not converge\n";
            return 1;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

int cmd_plot_data(const std::string& pattern, const std::string& metric, std::ostream& out, std::ostream& err) {
    if (!is_metric(metric)) {
        err << "error: unknown metric '" << metric << "'\n";
        return 2;
    }
    glob_t g{};
    const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
    std::vector<std::string> files;
    if (rc == 0)
        for (std::size_t i = 0; i < g.gl_pathc; ++i) files.emplace_back(g.gl_pathv[i]);
    globfree(&g);
    if (files.empty()) {
        err << "error: no files match '" << pattern << "'\n";
        return 2;
    }
    std::vector<std::vector<IterationLog>> runs;
    try {
        for (const auto& f : files) {
            const std::string text = read_file(f);
            if (text.rfind(kAggregateSchema, 0) == 0) {
                err << "note: skipping aggregate file " << f << "\n";
                continue;
            }
            runs.push_back(parse_train_csv(text, f));
        }
        out << format_plot_data(runs, metric);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

} // namespace riskrl
