#include "riskrl/harness.hpp"
#include "riskrl/var_dp.hpp"

#include <doctest.h>

#include <cstdlib>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace riskrl;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("riskrl_test_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

std::string small_maze_config(const fs::path& out_dir, const std::string& seeds = "0-9") {
    return "[experiment]\n"
           "algorithm = cvar_var\n"
           "seeds = " + seeds + "\n"
           "output_dir = " + out_dir.string() + "\n"
           "[environment]\n"
           "name = maze\n"
           "[train]\n"
           "n_trajectories = 4\n"
           "n_iterations = 5\n"
           "embed = 4\n"
           "hidden = 8\n";
}

IterationLog row(std::size_t iter, double ret) {
    IterationLog r;
    r.iter = iter;
    r.mean_return = ret;
    return r;
}

} // namespace

TEST_CASE("config parsing") {
    const auto cfg = parse_config("# comment\n[experiment]\nalgorithm = reinforce ; trailing\nseeds = 1,3-4\n"
                                  "[environment]\nname = corridor\nlength = 5\n"
                                  "[train]\ngamma = 0.99\nloss = soft\nnormalize_advantage = yes\n"
                                  "[soft_loss]\nkappa = 0.5\neta = 0.25\n");
    CHECK(cfg.algorithm == Algorithm::reinforce);
    CHECK(cfg.seeds == std::vector<std::uint64_t>{1, 3, 4});
    CHECK(cfg.environment.name == "corridor");
    CHECK(cfg.environment.length == 5);
    CHECK(cfg.train.gamma == 0.99);
    CHECK(cfg.train.loss == LossKind::soft);
    CHECK(cfg.train.normalize_advantage);
    CHECK(cfg.train.soft.kappa == 0.5);
    CHECK(cfg.train.soft.eta == 0.25);
}

TEST_CASE("config errors carry the line and the key") {
    auto message = [](const std::string& text) {
        try {
            parse_config(text, "x.ini");
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    CHECK(message("[experiment]\n\nalgorithm = ppo\n") == "x.ini:3: algorithm: unknown algorithm 'ppo'");
    CHECK(message("[train]\ngamma = 0.5\ngamma = 0.6\n").rfind("x.ini:3: gamma: already set on line 2", 0) == 0);
    CHECK(message("[train]\ngama = 0.5\n").rfind("x.ini:2: unknown key 'gama'", 0) == 0);
    CHECK(message("[model]\n").rfind("x.ini:1: unknown section", 0) == 0);
    CHECK(message("seeds = 1\n").rfind("x.ini:1: seeds: key outside any section", 0) == 0);
    CHECK(message("[train]\nn_iterations = ten\n").rfind("x.ini:2: n_iterations:", 0) == 0);
    CHECK(message("[train]\n\nalpha0 = 1.5\n").rfind("x.ini:3: alpha0:", 0) == 0);
    CHECK(message("[experiment]\nalgorithm = retcap\n[train]\ngamma = 0.99\n").rfind("x.ini:4: gamma:", 0) == 0);
    CHECK(message("[experiment]\nseeds = \n").rfind("x.ini:2: seeds:", 0) == 0);
    CHECK(message("[environment]\nname = lunar\n").rfind("x.ini:2: name:", 0) == 0);
    CHECK(message("[soft_loss]\nkappa = 0.2\n").rfind("x.ini:2: soft:", 0) == 0);
}

TEST_CASE("seed lists") {
    CHECK(parse_seed_list("0-3") == std::vector<std::uint64_t>{0, 1, 2, 3});
    CHECK(parse_seed_list("7") == std::vector<std::uint64_t>{7});
    CHECK(parse_seed_list(" 2 , 0-1 ") == std::vector<std::uint64_t>{2, 0, 1});
    CHECK_THROWS_AS(parse_seed_list(""), std::invalid_argument);
    CHECK_THROWS_AS(parse_seed_list("3-1"), std::invalid_argument);
    CHECK_THROWS_AS(parse_seed_list("1,1"), std::invalid_argument);
    CHECK_THROWS_AS(parse_seed_list("-1"), std::invalid_argument);
}

TEST_CASE("mean and standard error") {
    const auto two = mean_stderr({0.0, 2.0});
    CHECK(two.mean == 1.0);
    CHECK(two.stderr_ == doctest::Approx(1.0));
    const auto one = mean_stderr({4.0});
    CHECK(one.mean == 4.0);
    CHECK(one.stderr_ == 0.0);
    CHECK_THROWS_AS(mean_stderr({}), std::invalid_argument);
}

TEST_CASE("numbers round trip") {
    for (double x : {0.1, -1.0 / 3.0, 1e-300, 12345.678, -0.0, 7.0}) {
        const auto s = format_number(x);
        CHECK(std::stod(s) == x);
    }
    CHECK(format_number(-0.0) == "0");
    CHECK(format_number(2.5) == "2.5");
}

TEST_CASE("train log CSV round trip and schema") {
    TrainLog log;
    log.algorithm = Algorithm::cvar_pg;
    for (std::size_t i = 0; i < 4; ++i) {
        IterationLog r;
        r.iter = i;
        r.mean_return = -1.0 / (i + 3.0);
        r.cvar_alpha = -10.25 * i;
        r.risk_event_rate = 0.05 * i;
        r.omega = 1.0;
        log.rows.push_back(r);
    }
    const auto text = format_train_csv(log);
    CHECK(text.rfind(kTrainLogSchema, 0) == 0);
    CHECK(text.find(std::string("\n") + kTrainLogHeader + "\n") != std::string::npos);
    const auto back = parse_train_csv(text, "mem");
    REQUIRE(back.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(back[i].mean_return == log.rows[i].mean_return);
        CHECK(back[i].cvar_alpha == log.rows[i].cvar_alpha);
        CHECK(back[i].risk_event_rate == log.rows[i].risk_event_rate);
    }
    CHECK_THROWS_AS(parse_train_csv(std::string(kTrainLogHeader) + "\n0,1,1,0,0,0\n", "mem"), std::runtime_error);
    CHECK_THROWS_AS(parse_train_csv(std::string(kTrainLogSchema) + "\niter,return\n", "mem"), std::runtime_error);
    CHECK_THROWS_AS(parse_train_csv(std::string(kTrainLogSchema) + "\n" + kTrainLogHeader + "\n1,0,0,0,0,0\n", "mem"),
                    std::runtime_error);
}

TEST_CASE("plot data aggregation") {
    SUBCASE("single seed has zero error") {
        const auto text = format_plot_data({{row(0, 1.5), row(1, 2.5)}}, "mean_return");
        CHECK(text.find("\n0 1.5 0\n1 2.5 0\n") != std::string::npos);
    }
    SUBCASE("identical runs") {
        const std::vector<IterationLog> run{row(0, -3.25), row(1, 4.0)};
        const std::vector<std::vector<IterationLog>> runs(10, run);
        const auto text = format_plot_data(runs, "mean_return");
        CHECK(text.find("\n0 -3.25 0\n1 4 0\n") != std::string::npos);
    }
    SUBCASE("two seeds returning 0 and 2") {
        const auto text = format_plot_data({{row(0, 0.0)}, {row(0, 2.0)}}, "mean_return");
        CHECK(text.find("\n0 1 1\n") != std::string::npos);
    }
    SUBCASE("long path rate is the complement of the risk event rate") {
        IterationLog r = row(0, 0.0);
        r.risk_event_rate = 0.25;
        CHECK(metric_value(r, "long_path_rate") == 0.75);
        CHECK_THROWS_AS(format_plot_data({{r}}, "reward"), std::invalid_argument);
    }
    SUBCASE("aggregate CSV lists both x-axis conventions") {
        const auto text = format_aggregate_csv({{row(0, 0.0), row(1, 1.0)}, {row(0, 2.0), row(1, 1.0)}}, 20);
        CHECK(text.rfind(kAggregateSchema, 0) == 0);
        CHECK(text.find("\niter,trajectories,mean_return_mean,mean_return_stderr,") != std::string::npos);
        CHECK(text.find("\n0,20,1,1,") != std::string::npos);
        CHECK(text.find("\n1,40,1,0,") != std::string::npos);
    }
}

TEST_CASE("worker count honours RISKRL_THREADS") {
    ::setenv("RISKRL_THREADS", "3", 1);
    CHECK(worker_count(10) == 3);
    CHECK(worker_count(2) == 2);
    ::setenv("RISKRL_THREADS", "0", 1);
    CHECK_THROWS_AS(worker_count(4), std::invalid_argument);
    ::setenv("RISKRL_THREADS", "lots", 1);
    CHECK_THROWS_AS(worker_count(4), std::invalid_argument);
    ::unsetenv("RISKRL_THREADS");
    CHECK(worker_count(1) == 1);
}

TEST_CASE("train writes one CSV per seed plus an aggregate, byte-identical on rerun") {
    TempDir dir("train");
    const auto cfg_path = dir.path / "maze.ini";
    spit(cfg_path, small_maze_config(dir.path / "a"));
    std::ostringstream out, err;
    ::setenv("RISKRL_THREADS", "2", 1);
    REQUIRE(cmd_train(cfg_path.string(), out, err) == 0);
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(dir.path / "a")) files += e.path().extension() == ".csv";
    CHECK(files == 11);

    spit(cfg_path, small_maze_config(dir.path / "b"));
    ::setenv("RISKRL_THREADS", "1", 1);
    REQUIRE(cmd_train(cfg_path.string(), out, err) == 0);
    ::unsetenv("RISKRL_THREADS");
    for (const auto& e : fs::directory_iterator(dir.path / "a"))
        CHECK(slurp(e.path()) == slurp(dir.path / "b" / e.path().filename()));

    std::ostringstream plot, perr;
    CHECK(cmd_plot_data((dir.path / "a" / "*.csv").string(), "long_path_rate", plot, perr) == 0);
    std::size_t lines = 0;
    for (char c : plot.str()) lines += c == '\n';
    CHECK(lines == 6); // comment + 5 iterations
}

TEST_CASE("train rejects bad configs with exit 2") {
    TempDir dir("badcfg");
    const auto cfg_path = dir.path / "bad.ini";
    spit(cfg_path, "[experiment]\nalgorithm = sac\n");
    std::ostringstream out, err;
    CHECK(cmd_train(cfg_path.string(), out, err) == 2);
    CHECK(err.str().find("algorithm") != std::string::npos);
    CHECK(err.str().find("bad.ini:2") != std::string::npos);
    std::ostringstream out2, err2;
    CHECK(cmd_train((dir.path / "missing.ini").string(), out2, err2) == 2);
}

TEST_CASE("map paths resolve next to the config file") {
    TempDir dir("map");
    fs::create_directories(dir.path / "maps");
    spit(dir.path / "maps" / "tiny.txt", "#####\n#S.G#\n#####\n");
    spit(dir.path / "cfg.ini", "[environment]\nname = maze\nmap = maps/tiny.txt\n");
    const auto cfg = load_config((dir.path / "cfg.ini").string());
    const auto mdp = build_environment(cfg.environment);
    CHECK(mdp.n_states() == 3);
}

TEST_CASE("dp-solve") {
    TempDir dir("dp");
    std::ostringstream out, err;
    REQUIRE(cmd_dp_solve("noisy_corridor", "10", "hard", (dir.path / "c").string(), out, err) == 0);
    const auto levels = slurp(dir.path / "c" / "levels.csv");
    std::istringstream in(levels);
    std::string header, first;
    std::getline(in, header);
    std::getline(in, first);
    // first level is 0.05
    const auto comma = first.find(',');
    CHECK(std::stod(first.substr(0, comma)) == doctest::Approx(0.05));
    const double value = std::stod(first.substr(comma + 1, first.find(',', comma + 1) - comma - 1));
    const auto mdp = make_environment("noisy_corridor");
    CHECK(value == brute_force_optimal_var(mdp, 0.05, mdp.horizon()).value);
    CHECK(fs::exists(dir.path / "c" / "snapshot.csv"));

    auto level_values = [&](const fs::path& file) {
        std::istringstream in(slurp(file));
        std::string line;
        std::getline(in, line);
        std::vector<double> values;
        while (std::getline(in, line)) {
            const auto c1 = line.find(',');
            values.push_back(std::stod(line.substr(c1 + 1, line.find(',', c1 + 1) - c1 - 1)));
        }
        return values;
    };
    REQUIRE(cmd_dp_solve("chain", "7", "hard", (dir.path / "d").string(), out, err) == 0);
    const auto hard = level_values(dir.path / "d" / "levels.csv");
    REQUIRE(hard.size() == 7);
    for (double v : hard) CHECK(v == 3.0);
    // the soft iteration stops on a 1e-9 sweep change, leaving a gap of order 1e-8
    REQUIRE(cmd_dp_solve("chain", "7", "soft", (dir.path / "s").string(), out, err) == 0);
    for (double v : level_values(dir.path / "s" / "levels.csv")) CHECK(v == doctest::Approx(3.0).epsilon(1e-6));

    CHECK(cmd_dp_solve("nowhere", "10", "hard", (dir.path / "e").string(), out, err) == 2);
    CHECK(cmd_dp_solve("chain", "0", "hard", (dir.path / "e").string(), out, err) == 2);
    CHECK(cmd_dp_solve("chain", "10", "medium", (dir.path / "e").string(), out, err) == 2);
    CHECK(cmd_dp_solve("maze_gaussian", "10", "hard", (dir.path / "e").string(), out, err) == 2);
}

TEST_CASE("plot-data usage errors") {
    std::ostringstream out, err;
    CHECK(cmd_plot_data("/nonexistent/dir/*.csv", "mean_return", out, err) == 2);
    CHECK(cmd_plot_data("/nonexistent/dir/*.csv", "reward", out, err) == 2);
    TempDir dir("plot");
    spit(dir.path / "junk.csv", "a,b\n1,2\n");
    CHECK(cmd_plot_data((dir.path / "*.csv").string(), "mean_return", out, err) == 2);
}

TEST_CASE("audit command") {
    std::ostringstream out, err;
    CHECK(cmd_audit("props", out, err) == 0);
    CHECK(out.str().find("PASS  props/monotone_head") != std::string::npos);
    CHECK(cmd_audit("physics", out, err) == 2);
}
