#pragma once

#include "riskrl/learner.hpp"
#include "riskrl/mdp.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace riskrl {

/// Parse or validation failure carrying "source:line: message".
class ConfigError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

struct EnvironmentSpec {
    std::string name = "maze";
    std::string map_path;       // maze only; empty uses the bundled map
    std::size_t horizon = 0;    // 0 keeps the environment default
    double red_scale = 30.0;    // maze only
    std::size_t length = 4;     // noisy_corridor only
    double noise = 10.0;        // noisy_corridor only
};

struct ExperimentConfig {
    EnvironmentSpec environment;
    Algorithm algorithm = Algorithm::cvar_var;
    TrainConfig train;
    std::vector<std::uint64_t> seeds{0};
    std::string output_dir = "runs";
};

/// Flat `key = value` lines grouped under [experiment], [environment],
/// [train] and [soft_loss]. '#' and ';' start comments.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::string& path);

/// "0-9", "1,4,7" or mixes such as "0-2,5".
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

TabularMDP build_environment(const EnvironmentSpec& spec);

/// Worker count for `jobs` independent runs: RISKRL_THREADS when set (must be
/// a positive integer), otherwise the hardware concurrency, never above `jobs`.
std::size_t worker_count(std::size_t jobs);

/// Trains every seed, in parallel up to worker_count. Logs come back in seed
/// order; the first failing seed's exception is rethrown after all finish.
std::vector<TrainLog> run_seeds(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// CSV

inline constexpr const char* kTrainLogHeader = "iter,mean_return,cvar_alpha,risk_event_rate,omega,wall_ms";
inline constexpr const char* kTrainLogSchema = "# schema=riskrl.trainlog/1";
inline constexpr const char* kAggregateSchema = "# schema=riskrl.aggregate/1";

/// Shortest text that reads back to the same double.
std::string format_number(double x);

std::string format_train_csv(const TrainLog& log);
/// Rows of a per-seed CSV. Throws std::runtime_error naming the file and line
/// on schema mismatches.
std::vector<IterationLog> parse_train_csv(const std::string& text, const std::string& source);

/// Field of a row by column name; "long_path_rate" is 1 - risk_event_rate.
double metric_value(const IterationLog& row, const std::string& metric);
bool is_metric(const std::string& metric);
std::vector<std::string> metric_names();

struct MeanStderr {
    double mean = 0.0;
    double stderr_ = 0.0;
};
/// Mean and standard error (sample deviation over sqrt(n)); 0 error for n = 1.
MeanStderr mean_stderr(const std::vector<double>& xs);

/// Per-iteration mean and standard error across runs of every metric. Runs
/// must have equal length. `trajectories_per_iter` fills the cumulative
/// trajectory column.
std::string format_aggregate_csv(const std::vector<std::vector<IterationLog>>& runs,
                                 std::size_t trajectories_per_iter);

/// Three whitespace-separated columns: iteration, mean, standard error.
std::string format_plot_data(const std::vector<std::vector<IterationLog>>& runs, const std::string& metric);

// ---------------------------------------------------------------------------
// Commands. Return the process exit status: 0 ok, 1 failure, 2 usage error.

int cmd_train(const std::string& config_path, std::ostream& out, std::ostream& err);
int cmd_audit(const std::string& scope, std::ostream& out, std::ostream& err);
int cmd_dp_solve(const std::string& env, const std::string& n_levels, const std::string& loss,
                 const std::string& out_dir, std::ostream& out, std::ostream& err);
int cmd_plot_data(const std::string& pattern, const std::string& metric, std::ostream& out, std::ostream& err);

} // namespace riskrl
