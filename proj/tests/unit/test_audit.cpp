#include "riskrl/audit.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace riskrl;

TEST_CASE("contraction holds on the fixture MDP") {
    const SoftLossParams params{0.5, 0.05, 0.5};
    const auto r = contraction_audit(100, params, 17);
    CHECK(r.pairs == 100);
    CHECK(r.violations == 0);
    CHECK(r.bound == doctest::Approx(1.0 - 0.5 * 0.05 * 0.5 * (1.0 - 0.9)));
    CHECK(r.worst_ratio <= r.bound);
}

TEST_CASE("a corrupted soft-loss branch breaks the contraction audit") {
    const SoftLossParams params{0.5, 0.05, 0.5};
    // steepen the linear tails tenfold
    const auto corrupted = [&](double d, double a) {
        const double g = soft_loss_grad(d, a, params);
        return std::abs(d) > params.kappa ? 10.0 * g : g;
    };
    CHECK(contraction_audit(100, params, 17, corrupted).violations > 0);
    const auto flipped = [&](double d, double a) { return -soft_loss_grad(d, a, params); };
    CHECK(contraction_audit(100, params, 17, flipped).violations > 0);
}

TEST_CASE("random layered MDPs are valid and bounded") {
    Rng rng(1);
    for (int k = 0; k < 50; ++k) {
        const auto mdp = random_layered_mdp(rng);
        CHECK_NOTHROW(mdp.validate());
        CHECK(mdp.n_states() <= 5);
        CHECK(mdp.n_actions() <= 3);
        CHECK(mdp.is_terminal(mdp.n_states() - 1));
        CHECK(mdp.is_exact());
    }
}

TEST_CASE("execution equivalence on the Markovian-optimal fixture") {
    const auto r = execution_equivalence_audit(200, 10, 3);
    CHECK(r.episodes == 200);
    CHECK(r.mismatches == 0);
}

TEST_CASE("elicitability at the median") {
    const auto r = elicitability_audit(0.5, 10000, 4);
    CHECK(r.passed);
    CHECK(std::abs(r.estimate - r.empirical) <= 0.01 * r.iqr);
}

TEST_CASE("dual consistency and vanishing gradient") {
    const auto d = cvar_dual_audit(20, 5);
    CHECK(d.samples == 20);
    CHECK(d.failures == 0);
    CHECK(vanishing_gradient_audit());
}

TEST_CASE("scopes select their suites") {
    CHECK(is_audit_scope("all"));
    CHECK(is_audit_scope("gradients"));
    CHECK_FALSE(is_audit_scope("everything"));
    const auto results = run_audits("gradients");
    REQUIRE_FALSE(results.empty());
    for (const auto& r : results) {
        CHECK(r.scope == "gradients");
        CHECK(r.passed);
    }
    std::set<std::string> scopes;
    for (const auto& r : run_audits("props")) scopes.insert(r.scope);
    CHECK(scopes == std::set<std::string>{"props"});
}
