#include "riskrl/environments.hpp"
#include "riskrl/quantile.hpp"
#include "riskrl/risk_metrics.hpp"
#include "riskrl/var_dp.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace riskrl;

TEST_CASE("grid levels are the interval midpoints") {
    const QuantileGrid g(10);
    REQUIRE(g.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) CHECK(g.level(i) == doctest::Approx((2.0 * i + 1.0) / 20.0));
    CHECK(g.implied_epsilon() == doctest::Approx(0.05));
}

TEST_CASE("project_level") {
    const QuantileGrid g(10);
    CHECK(g.level(project_level(0.05, g)) == doctest::Approx(0.05));
    CHECK(g.level(project_level(0.1, g)) == doctest::Approx(0.05)); // tie goes down
    CHECK(g.level(project_level(0.99, g)) == doctest::Approx(0.95));
    CHECK(project_level(0.0, g) == 0);
    CHECK(project_level(1.0, g) == 9);
    for (std::size_t n : {1u, 7u, 10u, 51u}) {
        const QuantileGrid h(n);
        for (std::size_t i = 0; i < n; ++i) CHECK(project_level(h.level(i), h) == i);
    }
}

TEST_CASE("monotone head examples") {
    const auto a = monotone_head(std::vector<double>{0, 0, 0});
    CHECK(a[0] == 0.0);
    CHECK(a[1] == doctest::Approx(std::log(2.0)));
    CHECK(a[2] == doctest::Approx(2 * std::log(2.0)));
    CHECK(monotone_head(std::vector<double>{-3.5}) == std::vector<double>{-3.5});
    const auto b = monotone_head(std::vector<double>{5, -100, -100});
    for (double x : b) CHECK(std::abs(x - 5.0) <= 1e-6);
}

TEST_CASE("property: monotone head is nondecreasing") {
    Rng rng(5);
    for (int trial = 0; trial < 10000; ++trial) {
        const std::size_t n = 1 + rng.next_u64() % 20;
        const double scale = std::pow(10.0, rng.uniform(-3.0, 3.0));
        std::vector<double> raw(n);
        for (auto& x : raw) x = scale * rng.normal();
        const auto out = monotone_head(raw);
        for (std::size_t i = 1; i < n; ++i) REQUIRE(out[i] >= out[i - 1]);
    }
}

TEST_CASE("lowest_level_at_least clips at both ends") {
    const std::vector<double> row{-1, 0, 2, 5};
    CHECK(lowest_level_at_least(row, -7.0) == 0);
    CHECK(lowest_level_at_least(row, -1.0) == 0);
    CHECK(lowest_level_at_least(row, 1.0) == 2);
    CHECK(lowest_level_at_least(row, 99.0) == 3);
}

TEST_CASE("property: track_level is monotone in the carried target") {
    Rng rng(6);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> raw(8);
        for (auto& x : raw) x = rng.normal() * 3;
        const auto row = monotone_head(raw);
        std::size_t prev = 0;
        for (double z = row.front() - 2; z <= row.back() + 2; z += 0.05) {
            const auto i = lowest_level_at_least(row, z);
            CHECK(i >= prev);
            prev = i;
        }
    }
}

TEST_CASE("tracked levels along the optimal corridor trajectory match static execution") {
    const auto mdp = make_noisy_corridor(4, 10.0);
    const QuantileGrid grid(10);
    const auto sol = nested_value_iteration(mdp, grid);
    for (std::size_t level0 = 0; level0 < grid.size(); ++level0)
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            Rng r1(seed), r2(seed);
            const auto reference = execute_static_var(mdp, sol, level0, r1);
            LevelTracking tracking{&sol.v, level0};
            const ActionChooser greedy = [&](StateId s, std::optional<std::size_t> level, Rng&) {
                return sol.greedy(s, *level);
            };
            const auto traj = rollout(mdp, greedy, r2, &tracking);
            REQUIRE(traj.size() == reference.size());
            for (std::size_t t = 0; t < traj.size(); ++t) {
                CHECK(traj.steps[t].risk_level == reference.steps[t].risk_level);
                CHECK(traj.steps[t].action == reference.steps[t].action);
            }
        }
}

TEST_CASE("level expectation") {
    const QuantileGrid grid(10);
    TabularQuantileValue v(grid, {false, false, true}, 0.0);
    v.set_row(0, std::vector<double>(10, 4.5));
    std::vector<double> levels(grid.levels().begin(), grid.levels().end());
    v.set_row(1, levels);
    CHECK(level_expectation(v, 0) == doctest::Approx(4.5));
    CHECK(level_expectation(v, 1) == doctest::Approx(0.5));
    CHECK(level_expectation(v, 2) == 0.0);
}

TEST_CASE("quantile regression: stationary at the empirical quantiles") {
    const QuantileGrid grid(10);
    Rng rng(7);
    std::vector<double> targets(100);
    for (auto& t : targets) t = rng.normal();
    std::vector<double> row(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) row[i] = empirical_var(targets, grid.level(i));
    std::vector<WeightedTarget> w;
    for (double t : targets) w.push_back({t, 1.0});
    const auto g = quantile_regression_gradient(row, grid, w);
    for (double x : g) CHECK(std::abs(x) <= 1.0 / static_cast<double>(targets.size()) + 1e-12);
}

TEST_CASE("quantile regression: median of a point mass") {
    const QuantileGrid grid(1);
    TabularQuantileValue v(grid, {false}, 0.0);
    const std::vector<double> target{3.0};
    for (int k = 0; k < 2000; ++k) quantile_regression_update(v, 0, target, 0.01);
    CHECK(v.value(0, 0) == doctest::Approx(3.0).epsilon(0.01));
}

TEST_CASE("quantile regression: zero learning rate leaves values alone") {
    const QuantileGrid grid(5);
    TabularQuantileValue v(grid, {false}, 1.25);
    const std::vector<double> target{-3.0, 8.0};
    quantile_regression_update(v, 0, target, 0.0);
    for (std::size_t i = 0; i < 5; ++i) CHECK(v.value(0, i) == 1.25);
    MonotoneQuantileNetwork net(grid, {false}, 4, 8, 1);
    const auto before = net.values(0);
    quantile_regression_update(net, 0, target, 0.0);
    CHECK(net.values(0) == before);
}

TEST_CASE("property: regression on fixed samples converges to their quantiles") {
    const QuantileGrid grid(10);
    Rng rng(8);
    std::vector<double> samples(200);
    for (auto& x : samples) x = 2.0 + 3.0 * rng.normal();
    TabularQuantileValue v(grid, {false}, 0.0);
    for (int k = 0; k < 20000; ++k) {
        const double lr = 0.05 / std::sqrt(1.0 + k / 100.0);
        quantile_regression_update(v, 0, samples, lr);
    }
    CHECK(v.is_monotone());
    auto sorted = samples;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 1; i + 1 < grid.size(); ++i) {
        const double x = v.value(0, i);
        const double frac = static_cast<double>(std::lower_bound(sorted.begin(), sorted.end(), x) - sorted.begin()) /
                            static_cast<double>(sorted.size());
        CHECK(std::abs(frac - grid.level(i)) <= 2.0 * grid.spacing());
    }
}

TEST_CASE("terminal states read as zero") {
    const QuantileGrid grid(4);
    MonotoneQuantileNetwork net(grid, {false, true}, 4, 8, 2);
    for (double x : net.values(1)) CHECK(x == 0.0);
    TabularQuantileValue tab(grid, {true, false}, 5.0);
    for (double x : tab.values(0)) CHECK(x == 0.0);
}

TEST_CASE("property: network rows stay monotone under training") {
    const QuantileGrid grid(10);
    MonotoneQuantileNetwork net(grid, std::vector<bool>(6, false), 8, 16, 3);
    Rng rng(9);
    for (int k = 0; k < 300; ++k) {
        const StateId s = rng.next_u64() % 6;
        std::vector<double> targets(8);
        for (auto& t : targets) t = 50.0 * rng.normal();
        quantile_regression_update(net, s, targets, 0.05);
        for (StateId q = 0; q < 6; ++q) {
            const auto row = net.values(q);
            for (std::size_t i = 1; i < row.size(); ++i) REQUIRE(row[i] >= row[i - 1]);
        }
    }
}
