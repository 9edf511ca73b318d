#include "riskrl/audit.hpp"
#include "riskrl/environments.hpp"
#include "riskrl/var_dp.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace riskrl;

namespace {

TabularMDP coin_loop() {
    TabularMDP mdp(1, 1, 1.0, 2);
    mdp.set(0, 0, {{0, 1.0}}, {{-1.0, 0.5}, {1.0, 0.5}});
    return mdp;
}

TabularMDP unit_chain(std::size_t steps, double gamma) {
    TabularMDP mdp(steps + 1, 1, gamma, steps);
    for (StateId s = 0; s < steps; ++s) mdp.set(s, 0, {{s + 1, 1.0}}, {{1.0, 1.0}});
    mdp.make_terminal(steps);
    return mdp;
}

// s0 pays 0 or 10, then s1 chooses between a sure 1 and a coin of -20 / +20.
TabularMDP two_stage() {
    TabularMDP mdp(3, 2, 1.0, 2);
    for (ActionId a = 0; a < 2; ++a) mdp.set(0, a, {{1, 1.0}}, {{0.0, 0.5}, {10.0, 0.5}});
    mdp.set(1, 0, {{2, 1.0}}, {{1.0, 1.0}});
    mdp.set(1, 1, {{2, 1.0}}, {{-20.0, 0.5}, {20.0, 0.5}});
    mdp.make_terminal(2);
    mdp.validate();
    return mdp;
}

ReturnDistribution coin_atoms() { return ReturnDistribution::from_atoms({{-2, 0.25}, {0, 0.5}, {2, 0.25}}); }

} // namespace

TEST_CASE("enumeration of small return distributions") {
    const auto d = enumerate_return_distribution(coin_loop(), markov_policy({0}), 2);
    REQUIRE(d.atoms.size() == 3);
    CHECK(d.atoms[0].value == -2.0);
    CHECK(d.atoms[0].prob == doctest::Approx(0.25));
    CHECK(d.atoms[1].value == 0.0);
    CHECK(d.atoms[1].prob == doctest::Approx(0.5));
    CHECK(d.atoms[2].value == 2.0);
    CHECK(d.atoms[2].prob == doctest::Approx(0.25));

    const auto chain = enumerate_return_distribution(unit_chain(3, 0.5), markov_policy({0, 0, 0, 0}), 3);
    REQUIRE(chain.atoms.size() == 1);
    CHECK(chain.atoms[0].value == doctest::Approx(1.75));
    CHECK(chain.atoms[0].prob == doctest::Approx(1.0));
}

TEST_CASE("upper quantile of a finite distribution") {
    const auto d = coin_atoms();
    CHECK(exact_var_of_distribution(d, 0.25) == 0.0);
    CHECK(exact_var_of_distribution(d, 0.0) == -2.0);
    CHECK(exact_var_of_distribution(d, 0.2) == -2.0);
    CHECK(exact_var_of_distribution(d, 0.8) == 2.0);
    const auto point = ReturnDistribution::from_atoms({{4.5, 1.0}});
    for (double a : {0.0, 0.3, 1.0}) CHECK(exact_var_of_distribution(point, a) == 4.5);
}

TEST_CASE("brute force with a single action is that policy's quantile") {
    const auto mdp = coin_loop();
    const auto dist = enumerate_return_distribution(mdp, markov_policy({0}), 2);
    for (double a : {0.1, 0.25, 0.5, 0.9}) {
        const auto r = brute_force_optimal_var(mdp, a, 2);
        CHECK(r.value == exact_var_of_distribution(dist, a));
    }
}

TEST_CASE("brute force on the noisy corridor") {
    const auto mdp = make_noisy_corridor(4, 10.0);
    for (auto mode : {BruteForceMode::history, BruteForceMode::stationary_markov}) {
        const auto risk_averse = brute_force_optimal_var(mdp, 0.1, mdp.horizon(), mode);
        CHECK(risk_averse.first_action == 1);
        CHECK(risk_averse.value == -5.0);
        const auto neutral = brute_force_optimal_var(mdp, 1.0, mdp.horizon(), mode);
        CHECK(neutral.first_action == 0);
        CHECK(neutral.value == 36.0);
    }
}

TEST_CASE("deterministic MDP: optimal quantile values are flat in the level") {
    const auto mdp = make_environment("chain");
    const QuantileGrid grid(10);
    for (auto loss : {LossKind::hard, LossKind::soft}) {
        NestedVIOptions opt;
        opt.loss = loss;
        opt.params = {0.5, 0.05, 0.5};
        const auto sol = nested_value_iteration(mdp, grid, opt);
        CHECK(sol.converged);
        for (StateId s = 0; s < mdp.n_states(); ++s)
            for (std::size_t i = 0; i < grid.size(); ++i)
                CHECK(sol.v.at(s, i) == doctest::Approx(mdp.is_terminal(s) ? 0.0 : 3.0 - s).epsilon(1e-6));
    }
}

TEST_CASE("one-step Bernoulli reward: fixed point is the reward quantile at every level") {
    // A single stochastic step into a terminal state stands in for gamma = 0.
    TabularMDP mdp(2, 1, 1.0, 1);
    mdp.set(0, 0, {{1, 1.0}}, {{0.0, 0.5}, {1.0, 0.5}});
    mdp.make_terminal(1);
    const QuantileGrid grid(10);
    const auto sol = nested_value_iteration(mdp, grid);
    const auto dist = ReturnDistribution::from_atoms({{0.0, 0.5}, {1.0, 0.5}});
    for (std::size_t i = 0; i < grid.size(); ++i)
        CHECK(sol.v.at(0, i) == exact_var_of_distribution(dist, grid.level(i)));
}

TEST_CASE("noisy corridor: DP value at the lowest level matches brute force") {
    const auto mdp = make_noisy_corridor(4, 10.0);
    const QuantileGrid grid(10);
    const auto sol = nested_value_iteration(mdp, grid);
    const auto oracle = brute_force_optimal_var(mdp, 0.05, mdp.horizon());
    CHECK(sol.v.at(mdp.initial_state(), 0) == oracle.value);
    CHECK(sol.greedy(mdp.initial_state(), 0) == 1);
    CHECK(hard_fixed_point_residual(mdp, grid, sol.v) <= 1e-9);
}

TEST_CASE("static execution on a deterministic MDP follows the risk-neutral greedy path") {
    const auto mdp = make_maze();
    const QuantileGrid grid(4);
    TabularMDP det = mdp;
    // replace the red reward with its mean to make the maze deterministic
    for (StateId s = 0; s < det.n_states(); ++s)
        for (ActionId a = 0; a < det.n_actions(); ++a)
            if (!det.is_terminal(s)) det.set(s, a, det.transitions(s, a), {{det.mean_reward(s, a), 1.0}});
    const auto sol = nested_value_iteration(det, grid);
    const auto risky = maze_path_actions(parse_maze(default_maze_text()), false);
    for (std::size_t level0 = 0; level0 < grid.size(); ++level0) {
        Rng rng(level0);
        const auto traj = execute_static_var(det, sol, level0, rng);
        REQUIRE(traj.size() == risky.size());
        for (std::size_t t = 0; t < traj.size(); ++t) CHECK(traj.steps[t].action == risky[t]);
    }
}

TEST_CASE("static execution matches the hand-unrolled trace") {
    const auto mdp = two_stage();
    const QuantileGrid grid(2); // levels 0.25, 0.75
    const auto sol = nested_value_iteration(mdp, grid);
    CHECK(sol.v.at(1, 0) == 1.0);
    CHECK(sol.v.at(1, 1) == 20.0);
    CHECK(sol.v.at(0, 0) == 11.0);
    CHECK(sol.v.at(0, 1) == 30.0);
    std::size_t seen_low = 0, seen_high = 0;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        for (std::size_t level0 : {0u, 1u}) {
            Rng rng(seed);
            const auto traj = execute_static_var(mdp, sol, level0, rng);
            REQUIRE(traj.size() == 2);
            const bool low_reward = traj.steps[0].reward == 0.0;
            // level 0.25: target 11 - r; r = 0 needs the coin, r = 10 takes the sure 1.
            // level 0.75: target 30 - r always lands on the top level, so the coin.
            const ActionId expected = (level0 == 0 && !low_reward) ? 0 : 1;
            CHECK(traj.steps[1].action == expected);
            CHECK(traj.steps[1].risk_level == (expected == 1 ? 1u : 0u));
            (low_reward ? seen_low : seen_high)++;
        }
    }
    CHECK(seen_low > 0);
    CHECK(seen_high > 0);
}

TEST_CASE("higher starting level does not lower the median realized return") {
    const auto mdp = make_noisy_corridor(4, 10.0);
    const QuantileGrid grid(10);
    const auto sol = nested_value_iteration(mdp, grid);
    std::vector<double> low, high;
    for (std::uint64_t seed = 0; seed < 10000; ++seed) {
        Rng a(seed), b(seed);
        low.push_back(execute_static_var(mdp, sol, 0, a).total_return);
        high.push_back(execute_static_var(mdp, sol, grid.size() - 1, b).total_return);
    }
    auto median = [](std::vector<double> x) {
        std::nth_element(x.begin(), x.begin() + x.size() / 2, x.end());
        return x[x.size() / 2];
    };
    CHECK(median(high) >= median(low));
}

TEST_CASE("q-driven execution with the optimal q reproduces static execution") {
    const auto mdp = make_noisy_corridor(4, 10.0);
    const QuantileGrid grid(10);
    const auto sol = nested_value_iteration(mdp, grid);
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const std::size_t level0 = seed % grid.size();
        Rng a(seed), b(seed);
        const auto x = execute_static_var(mdp, sol, level0, a);
        const auto y = execute_static_var_with_q(mdp, sol, level0, b);
        REQUIRE(x.size() == y.size());
        for (std::size_t t = 0; t < x.size(); ++t) {
            CHECK(x.steps[t].action == y.steps[t].action);
            CHECK(x.steps[t].reward == y.steps[t].reward);
        }
    }
}

TEST_CASE("single-action MDP: q-driven execution is a plain rollout") {
    const auto mdp = coin_loop();
    const QuantileGrid grid(4);
    const auto q = policy_evaluation_quantiles(mdp, {1.0}, grid);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng a(seed), b(seed);
        const auto x = execute_static_var_with_q(mdp, q, seed % 4, a);
        const ActionChooser only = [](StateId, std::optional<std::size_t>, Rng&) { return ActionId{0}; };
        const auto y = rollout(mdp, only, b);
        REQUIRE(x.size() == y.size());
        for (std::size_t t = 0; t < x.size(); ++t) CHECK(x.steps[t].reward == y.steps[t].reward);
    }
}

TEST_CASE("policy evaluation: single action agrees with optimal value iteration") {
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        TabularMDP mdp(4, 1, 0.9, 20);
        for (StateId s = 0; s < 3; ++s) {
            const StateId n1 = s + 1, n2 = std::min<StateId>(s + 2, 3);
            const double p = 0.1 * static_cast<double>(1 + rng.next_u64() % 9);
            mdp.set(s, 0, {{n1, p}, {n2, 1.0 - p}},
                    {{static_cast<double>(rng.next_u64() % 7) - 3.0, 0.5},
                     {static_cast<double>(rng.next_u64() % 7) - 3.0, 0.5}});
        }
        mdp.make_terminal(3);
        const QuantileGrid grid(8);
        const auto a = policy_evaluation_quantiles(mdp, std::vector<double>(4, 1.0), grid);
        const auto b = nested_value_iteration(mdp, grid);
        for (std::size_t k = 0; k < a.q.size(); ++k) CHECK(a.q[k] == doctest::Approx(b.q[k]).epsilon(1e-12));
    }
}

TEST_CASE("policy evaluation: deterministic policy on a deterministic MDP") {
    const auto mdp = unit_chain(3, 0.5);
    const QuantileGrid grid(5);
    const auto q = policy_evaluation_quantiles(mdp, std::vector<double>(4, 1.0), grid);
    const double expected[3] = {1.75, 1.5, 1.0};
    for (StateId s = 0; s < 3; ++s)
        for (std::size_t i = 0; i < grid.size(); ++i) CHECK(q.q_at(s, i, 0) == doctest::Approx(expected[s]));
}

TEST_CASE("policy evaluation: per-action quantiles under a uniform policy") {
    TabularMDP mdp(2, 2, 1.0, 1);
    mdp.set(0, 0, {{1, 1.0}}, {{-3.0, 0.2}, {1.0, 0.5}, {4.0, 0.3}});
    mdp.set(0, 1, {{1, 1.0}}, {{0.0, 0.6}, {2.0, 0.4}});
    mdp.make_terminal(1);
    const QuantileGrid grid(10);
    const auto q = policy_evaluation_quantiles(mdp, {0.5, 0.5, 0.5, 0.5}, grid);
    for (ActionId a = 0; a < 2; ++a) {
        std::vector<ActionId> plan{a, 0};
        const auto dist = enumerate_return_distribution(mdp, markov_policy(plan), 1);
        for (std::size_t i = 0; i < grid.size(); ++i)
            CHECK(q.q_at(0, i, a) == exact_var_of_distribution(dist, grid.level(i)));
    }
}

TEST_CASE("property: the soft operator preserves monotone rows") {
    const auto mdp = contraction_fixture_mdp();
    const QuantileGrid grid(10);
    Rng rng(21);
    const SoftLossParams params{0.5, 0.05, 0.5};
    for (int trial = 0; trial < 100; ++trial) {
        ValueTable v{mdp.n_states(), grid.size(), std::vector<double>(mdp.n_states() * grid.size())};
        for (StateId s = 0; s < mdp.n_states(); ++s) {
            std::vector<double> raw(grid.size());
            for (auto& x : raw) x = 5.0 * rng.normal();
            const auto row = monotone_head(raw);
            std::copy(row.begin(), row.end(), v.row(s).begin());
        }
        const auto tv = apply_v_operator(mdp, grid, v, params);
        for (StateId s = 0; s < mdp.n_states(); ++s)
            for (std::size_t i = 1; i < grid.size(); ++i) CHECK(tv.at(s, i) >= tv.at(s, i - 1) - 1e-9);
    }
}

TEST_CASE("property: oracle agreement on random layered MDPs") {
    const auto report = fixed_point_oracle_audit(8, 51, 101);
    CHECK(report.mdps == 8);
    CHECK(report.failures == 0);
    CHECK(report.max_residual <= 1e-9);
}

TEST_CASE("snapshot tables") {
    const auto mdp = make_noisy_corridor(4, 10.0);
    const QuantileGrid grid(4);
    const auto sol = nested_value_iteration(mdp, grid);
    const auto table = solution_level_table(sol, mdp.initial_state());
    CHECK(table.rfind("level,value,action\n", 0) == 0);
    CHECK(std::count(table.begin(), table.end(), '\n') == 5);
    const auto snap = solution_snapshot_csv(sol);
    CHECK(snap.find("state,level,action,q") != std::string::npos);
}
