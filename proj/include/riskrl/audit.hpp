#pragma once

#include "riskrl/mdp.hpp"
#include "riskrl/quantile.hpp"
#include "riskrl/risk_metrics.hpp"
#include "riskrl/var_dp.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace riskrl {

// Property suites shared by `riskrl audit`, the acceptance binary and the
// Python module. Every suite is deterministic given its seed.

struct AuditResult {
    std::string name;
    std::string scope;
    bool passed = false;
    std::string detail;
};

// ---------------------------------------------------------------------------
// Fixtures

/// Fixed 5-state MDP with stochastic rewards and successors, gamma = 0.9.
TabularMDP contraction_fixture_mdp();

/// Layered random MDP: states 0..S-1 with successors of higher index, the
/// last state terminal, at most 2 reward atoms and 2 successors per (s, a).
/// Horizon equals the longest path.
TabularMDP random_layered_mdp(Rng& rng, std::size_t max_states = 5, std::size_t max_actions = 3);

/// MDP whose optimal static VaR policy is Markovian: in every state one action
/// strictly dominates the others at every quantile.
TabularMDP markovian_optimal_fixture();

// ---------------------------------------------------------------------------
// Suites

struct ContractionReport {
    std::size_t pairs = 0;
    std::size_t violations = 0;
    double bound = 0.0;      // 1 - eta * epsilon * kappa * (1 - gamma)
    double worst_ratio = 0.0; // max ||Tv - Tw|| / ||v - w||
};

/// Applies the soft-loss state-value operator to random pairs of tables on
/// the fixture MDP and counts sup-norm bound violations. `grad` replaces the
/// loss derivative (mutation checks).
ContractionReport contraction_audit(std::size_t pairs, const SoftLossParams& params, std::uint64_t seed,
                                    const LossGradFn& grad = {});

struct OracleReport {
    std::size_t mdps = 0;
    std::size_t comparisons = 0;
    std::size_t failures = 0;
    double worst_excess = 0.0;   // max |dp - brute| - tolerance, <= 0 when all agree
    double max_residual = 0.0;   // hard fixed-point residual of the DP solutions
    double seconds = 0.0;
    std::string first_failure;
};

/// Hard-loss nested value iteration against the history-dependent brute force
/// at every interior grid level. Tolerance per level: the spread of the brute
/// force values one grid step either side, at least 1e-6.
OracleReport fixed_point_oracle_audit(std::size_t n_mdps, std::size_t n_levels, std::uint64_t seed);

struct EquivalenceReport {
    std::size_t episodes = 0;
    std::size_t mismatches = 0;
};

/// Static execution with (v*, pi*) versus execution driven only by the
/// q-values of the evaluated Markovian optimum, same seeds, random start levels.
EquivalenceReport execution_equivalence_audit(std::size_t episodes, std::size_t n_levels,
                                              std::uint64_t seed);

struct ElicitabilityReport {
    double alpha = 0.0;
    double estimate = 0.0;
    double empirical = 0.0;
    double iqr = 0.0;
    bool passed = false;
};

/// Gradient descent on the mean soft quantile loss over `samples` fixed
/// standard normal draws, compared with the empirical quantile.
ElicitabilityReport elicitability_audit(double alpha, std::size_t samples, std::uint64_t seed);

struct MonotoneReport {
    std::size_t vectors = 0;
    std::size_t violations = 0;
};

/// Random raw vectors (including extreme magnitudes) through the monotone head
/// and random value networks; counts decreasing neighbours.
MonotoneReport monotone_head_audit(std::size_t vectors, std::size_t n_levels, std::uint64_t seed);

struct GradientReport {
    std::size_t points = 0;
    double policy_max_error = 0.0;
    double value_max_error = 0.0;
};

/// Central differences (step 1e-5) against the analytic gradients of the
/// network policy log-probability and of the quantile regression value loss.
GradientReport gradient_check_audit(std::size_t points, std::uint64_t seed);

struct DualReport {
    std::size_t samples = 0;
    std::size_t failures = 0;
    double worst_gap_in_cells = 0.0;
};

/// Grid-maximized variational CVaR versus the tail mean on random samples.
DualReport cvar_dual_audit(std::size_t samples, std::uint64_t seed);

/// A batch whose worst alpha-tail is flat yields an exactly zero CVaR policy
/// gradient.
bool vanishing_gradient_audit();

/// Known scopes: all, metrics, dp, gradients, props.
bool is_audit_scope(const std::string& scope);
std::vector<AuditResult> run_audits(const std::string& scope);

} // namespace riskrl
