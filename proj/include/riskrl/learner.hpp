#pragma once

#include "riskrl/environments.hpp"
#include "riskrl/mdp.hpp"
#include "riskrl/policy.hpp"
#include "riskrl/quantile.hpp"
#include "riskrl/risk_metrics.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace riskrl {

enum class Algorithm { cvar_pg, cvar_var, var_ac, reinforce, retcap };

const char* to_string(Algorithm a);
/// Throws std::invalid_argument for unknown names.
Algorithm parse_algorithm(const std::string& name);

/// Trade-off schedule over iterations m = 0..M-1.
///   constant          omega
///   linear_decay:<f>  omega until f*M, then linearly down to 0 at the last iteration
///   step:<f>          omega until f*M, then 0
struct OmegaSchedule {
    enum class Kind { constant, linear_decay, step };
    Kind kind = Kind::constant;
    double fraction = 1.0;

    static OmegaSchedule parse(const std::string& spec);
    std::string str() const;
    double at(double omega, std::size_t iter, std::size_t n_iters) const;
};

enum class Representation { network, tabular };

struct TrainConfig {
    std::size_t n_trajectories = 20;
    std::size_t n_iterations = 1000;
    double alpha0 = 0.1;
    double omega = 0.5;
    OmegaSchedule omega_schedule{};
    double gamma = 0.999;
    double lambda = 0.95;
    double policy_lr = 5e-4;
    double value_lr = 5e-4;
    bool normalize_advantage = false;
    std::uint64_t seed = 0;

    std::size_t n_levels = 10;
    LossKind loss = LossKind::hard;
    SoftLossParams soft{1.0, 0.05, 1.0};
    Representation policy_repr = Representation::network;
    Representation value_repr = Representation::network;
    std::size_t embed = 16;
    std::size_t hidden = 64;
    /// Scale of the initial policy output layer; small values start near uniform.
    double policy_init_scale = 0.01;
    /// Draw one grid level per bootstrap instead of averaging over the grid.
    bool sample_level = false;
    /// Cap q used by RET-CAP reshaping.
    double retcap_cap = 0.0;
    /// Log real wall-clock milliseconds (otherwise 0, keeping logs reproducible).
    bool timing = false;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
};

struct IterationLog {
    std::size_t iter = 0;
    double mean_return = 0.0;
    double cvar_alpha = 0.0;
    double risk_event_rate = 0.0;
    double omega = 0.0;
    double wall_ms = 0.0;
};

struct TrainLog {
    Algorithm algorithm = Algorithm::cvar_var;
    std::vector<IterationLog> rows;
    /// Action probabilities of the trained policy.
    PolicySnapshot final_policy;
};

/// Per-step Markovian advantage; `components` holds A^(iota) when requested.
struct AdvantageEstimate {
    double value = 0.0;
    std::vector<double> components;
};

// ---------------------------------------------------------------------------
// Gradient pieces

/// Returns weight w_i = 1{R_i <= q} (R_i - q) / (alpha N) per trajectory,
/// with q the empirical alpha-quantile of the returns.
std::vector<double> cvar_pg_weights(const std::vector<Trajectory>& batch, double alpha);

/// (1/(alpha N)) sum_i 1{R_i <= q} (R_i - q) sum_t grad log pi(a_t | s_t).
GradAccumulator cvar_pg_gradient(const std::vector<Trajectory>& batch, const PolicyModel& policy,
                                 double alpha);
void add_cvar_pg_scores(const std::vector<Trajectory>& batch, double alpha, LogitGradient& out);

/// Multi-step advantages along a tracked trajectory: for each t,
///   A^(iota) = E_u[dl_{alpha_t}(-v(s_t, alpha_t) + r_t + ... + gamma^iota v(s_{t+iota}, u))]
/// for iota = 1..T-t (zero value past the episode end), combined with weights
/// (1 - lambda) lambda^(iota - 1) renormalized over the available iota.
/// Throws "untracked trajectory" when levels are missing.
std::vector<AdvantageEstimate> markovian_var_advantages(const Trajectory& traj, const ValueTable& v,
                                                        const QuantileGrid& grid, double lambda,
                                                        LossKind loss, const SoftLossParams& params,
                                                        bool keep_components = false,
                                                        Rng* level_rng = nullptr);

/// Weighted target sets of the multi-step quantile regression: for s_t, the
/// targets r_t + ... + gamma^iota v(s_{t+iota}, level_j) for every iota and
/// grid level, with weight lambda^iota renormalized over iota (and split
/// evenly over levels).
std::vector<std::vector<WeightedTarget>> multistep_quantile_targets(const Trajectory& traj,
                                                                    const ValueTable& v,
                                                                    const QuantileGrid& grid,
                                                                    double lambda);

/// d(loss)/d(v(s_t, .)) of the weighted multi-step regression at every step,
/// computed without materializing the targets. Rows are indexed by t.
std::vector<std::vector<double>> multistep_value_gradients(const Trajectory& traj, const ValueTable& v,
                                                           const QuantileGrid& grid, double lambda);

/// Policy direction of one CVaR-VaR iteration with a frozen value snapshot:
/// omega * (CVaR policy gradient) + (1 - omega) * (1/N) sum_t A_t grad log pi.
/// `level_rng` is used only when cfg.sample_level is set.
GradAccumulator cvar_var_policy_gradient(const std::vector<Trajectory>& batch, const PolicyModel& policy,
                                         const ValueTable& v, const QuantileGrid& grid, const TrainConfig& cfg,
                                         double omega, Rng* level_rng = nullptr);

/// r_hat_t = min(k_{t+1}, cap) - min(k_t, cap). Requires gamma == 1.
std::vector<double> retcap_reshape(const Trajectory& traj, double cap);

/// One model-based sweep of the VaR actor-critic: for every non-terminal
/// (s, level) sample a ~ pi_hat, move v by eta * E_{a ~ pi_hat}[dl(delta)],
/// then push pi_hat along A(s, level, a) grad log pi_hat.
void var_actor_critic_step(const TabularMDP& mdp, TabularQuantileValue& v, PolicyModel& pi_hat,
                           const SoftLossParams& params, double policy_lr, Rng& rng,
                           LossKind loss = LossKind::soft);

/// A(s, level, a) = E[dl_{alpha}(r + gamma v(s', u) - v(s, alpha))] with exact expectations.
double var_advantage(const TabularMDP& mdp, const ValueTable& v, const QuantileGrid& grid, StateId s,
                     std::size_t level, ActionId a, LossKind loss, const SoftLossParams& params);

// ---------------------------------------------------------------------------
// Training loops

/// Runs the chosen algorithm. Throws std::runtime_error on divergence.
TrainLog train(const TabularMDP& mdp, const TrainConfig& cfg, Algorithm algorithm);

TrainLog cvar_var_train(const TabularMDP& mdp, const TrainConfig& cfg);
TrainLog cvar_pg_train(const TabularMDP& mdp, const TrainConfig& cfg);
TrainLog reinforce_baseline_train(const TabularMDP& mdp, const TrainConfig& cfg);
TrainLog retcap_train(const TabularMDP& mdp, const TrainConfig& cfg);
TrainLog var_ac_train(const TabularMDP& mdp, const TrainConfig& cfg);

/// Seed of trajectory `index` in iteration `iter`.
std::uint64_t trajectory_seed(std::uint64_t seed, std::size_t iter, std::size_t index);

} // namespace riskrl
