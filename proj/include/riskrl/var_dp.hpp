#pragma once

#include "riskrl/mdp.hpp"
#include "riskrl/quantile.hpp"
#include "riskrl/risk_metrics.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace riskrl {

/// Finite distribution of a return: sorted, merged atoms summing to 1.
struct ReturnDistribution {
    std::vector<RewardAtom> atoms;

    /// Sorts, merges values equal up to 1e-12 relative, and checks the mass.
    static ReturnDistribution from_atoms(std::vector<RewardAtom> atoms);
    double mean() const;
    /// P[X < x]
    double prob_below(double x) const;
};

/// Upper quantile q+_alpha = max{x | P[X < x] <= alpha} on the atoms.
double exact_var_of_distribution(const ReturnDistribution& dist, double alpha);

/// State seen by an enumerated policy: time, state, discounted reward so far
/// and the current grid level when the policy tracks one.
struct ExecState {
    std::size_t t = 0;
    StateId s = 0;
    double k = 0.0;
    std::size_t level = 0;
};

/// Deterministic policy for enumeration. `advance`, when set, gives the level
/// at the successor (executions that track risk levels).
struct EnumeratedPolicy {
    std::function<ActionId(const ExecState&)> act;
    std::function<std::size_t(const ExecState& from, ActionId a, double reward, StateId next)> advance;
};

EnumeratedPolicy markov_policy(std::vector<ActionId> actions_by_state);

/// Exact distribution of sum_{t < horizon} gamma^t r_t from the initial state.
/// Paths merge when (t, s, k, level) coincide. Throws "oracle blowup" past
/// `atom_cap` live nodes.
ReturnDistribution enumerate_return_distribution(const TabularMDP& mdp, const EnumeratedPolicy& policy,
                                                 std::size_t horizon, std::size_t atom_cap = 1000000);

enum class BruteForceMode {
    /// Every deterministic history-dependent policy, searched exactly through
    /// the optimal-threshold recursion on the unrolled tree.
    history,
    /// Every deterministic stationary Markovian policy, enumerated and
    /// evaluated one by one.
    stationary_markov,
};

struct BruteForceResult {
    double value = 0.0;
    BruteForceMode mode = BruteForceMode::history;
    ActionId first_action = 0;
    std::vector<ActionId> stationary_actions;                      // stationary_markov
    std::map<std::tuple<std::size_t, StateId, double>, ActionId> history_actions; // history: (t, s, k)
    EnumeratedPolicy policy() const;
};

BruteForceResult brute_force_optimal_var(const TabularMDP& mdp, double alpha, std::size_t horizon,
                                         BruteForceMode mode = BruteForceMode::history,
                                         std::size_t cap = 1000000);

/// q(s, level, a), v* = max_a q and greedy actions (ties to the lowest id).
struct DPSolution {
    QuantileGrid grid;
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    std::vector<double> q; // [s][level][a]
    ValueTable v;
    std::vector<ActionId> pi_hat; // [s][level]
    std::size_t iterations = 0;
    bool converged = false;
    double last_change = 0.0;

    double q_at(StateId s, std::size_t i, ActionId a) const { return q[(s * grid.size() + i) * n_actions + a]; }
    ActionId greedy(StateId s, std::size_t i) const { return pi_hat[s * grid.size() + i]; }
};

struct NestedVIOptions {
    LossKind loss = LossKind::hard;
    SoftLossParams params{};
    std::size_t max_iters = 100000;
    double tol = 1e-9;
};

/// Fixed-point iteration of the quantile Bellman optimality operator with exact
/// expectations over reward atoms, successors and grid levels. The soft loss
/// takes the step q += eta * E[dl(target - q)]. The hard loss solves each cell
/// exactly: q(s, alpha_i, a) is the alpha_i upper quantile of
/// r + gamma * max_b q(s', u, b) with u uniform on the grid.
DPSolution nested_value_iteration(const TabularMDP& mdp, const QuantileGrid& grid,
                                  const NestedVIOptions& opt = {});

/// Loss derivative used by the operator audits; defaults to soft_loss_grad.
using LossGradFn = std::function<double(double delta, double alpha)>;

/// One application of the state-value operator
///   (T v)(s, alpha) = v(s, alpha) + eta * max_a E[dl(r + gamma v(s', u) - v(s, alpha))].
ValueTable apply_v_operator(const TabularMDP& mdp, const QuantileGrid& grid, const ValueTable& v,
                            const SoftLossParams& params, const LossGradFn& grad = {});

/// Subgradient stationarity residual of v for the hard loss:
///   max over (s, i) of dist(0, [max_a (alpha_i - P[X_a <= v]), max_a (alpha_i - P[X_a < v])])
/// with X_a = r + gamma v(s', u). Zero at an exact fixed point.
double hard_fixed_point_residual(const TabularMDP& mdp, const QuantileGrid& grid, const ValueTable& v);

/// Hard-loss policy evaluation of a Markovian policy (probabilities [s][a]):
/// q(s, alpha_i, a) = alpha_i upper quantile of r + gamma * q(s', u, a') with
/// a' ~ pi(.|s'), u uniform on the grid.
DPSolution policy_evaluation_quantiles(const TabularMDP& mdp, const std::vector<double>& policy_probs,
                                       const QuantileGrid& grid, std::size_t max_iters = 100000,
                                       double tol = 1e-9);

/// Static VaR execution: act with pi_hat(s, alpha), re-target z = (v(s, alpha) - r) / gamma
/// and move to the lowest level whose value at s' reaches z.
Trajectory execute_static_var(const TabularMDP& mdp, const DPSolution& solution, std::size_t level0,
                              Rng& rng);
/// The same execution driven by q only, acting greedily in q(s, alpha, .).
Trajectory execute_static_var_with_q(const TabularMDP& mdp, const DPSolution& q_values,
                                     std::size_t level0, Rng& rng);

/// Enumerable form of execute_static_var for the exact oracles.
EnumeratedPolicy static_var_policy(const TabularMDP& mdp, const DPSolution& solution);

/// Snapshot text: "state,level,value" rows followed by "state,level,action,q" rows.
std::string solution_snapshot_csv(const DPSolution& solution);
/// Per-level table "level,value_at_initial_state,greedy_action".
std::string solution_level_table(const DPSolution& solution, StateId initial_state);

} // namespace riskrl
