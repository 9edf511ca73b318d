#include "riskrl/audit.hpp"

#include "riskrl/environments.hpp"
#include "riskrl/learner.hpp"
#include "riskrl/policy.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace riskrl {

namespace {

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

double sup_distance(const ValueTable& a, const ValueTable& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) d = std::max(d, std::abs(a.data[i] - b.data[i]));
    return d;
}

// Probabilities on multiples of 0.1 keep the fixtures readable.
double tenth(Rng& rng, int lo, int hi) {
    return static_cast<double>(lo + static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(hi - lo + 1))) / 10.0;
}

} // namespace

// ---------------------------------------------------------------------------
// Fixtures

TabularMDP contraction_fixture_mdp() {
    Rng rng(20240517);
    TabularMDP mdp(5, 2, 0.9, 50);
    for (StateId s = 0; s < 5; ++s)
        for (ActionId a = 0; a < 2; ++a) {
            const StateId n1 = rng.next_u64() % 5;
            StateId n2 = rng.next_u64() % 5;
            if (n2 == n1) n2 = (n1 + 1) % 5;
            const double p = tenth(rng, 2, 8);
            const double r1 = std::round(rng.uniform(-5.0, 5.0));
            const double r2 = std::round(rng.uniform(-5.0, 5.0));
            const double q = tenth(rng, 1, 9);
            mdp.set(s, a, {{n1, p}, {n2, 1.0 - p}}, r1 == r2 ? std::vector<RewardAtom>{{r1, 1.0}}
                                                             : std::vector<RewardAtom>{{r1, q}, {r2, 1.0 - q}});
        }
    mdp.name = "contraction_fixture";
    mdp.validate();
    return mdp;
}

TabularMDP random_layered_mdp(Rng& rng, std::size_t max_states, std::size_t max_actions) {
    if (max_states < 2 || max_actions < 1) throw std::invalid_argument("random mdp: sizes too small");
    const std::size_t S = 2 + rng.next_u64() % (max_states - 1);
    const std::size_t A = 1 + rng.next_u64() % max_actions;
    const double gamma = rng.uniform() < 0.5 ? 1.0 : 0.9;
    TabularMDP mdp(S, A, gamma, S - 1);
    const StateId terminal = S - 1;
    for (StateId s = 0; s < terminal; ++s)
        for (ActionId a = 0; a < A; ++a) {
            const std::size_t span = terminal - s; // successors s+1 .. S-1
            const StateId n1 = s + 1 + rng.next_u64() % span;
            std::vector<Outcome> next{{n1, 1.0}};
            if (span > 1 && rng.uniform() < 0.5) {
                StateId n2 = s + 1 + rng.next_u64() % span;
                if (n2 == n1) n2 = n1 == terminal ? s + 1 : n1 + 1;
                const double p = tenth(rng, 1, 9);
                next = {{n1, p}, {n2, 1.0 - p}};
            }
            const double r1 = static_cast<double>(static_cast<int>(rng.next_u64() % 11) - 5);
            std::vector<RewardAtom> reward{{r1, 1.0}};
            if (rng.uniform() < 0.6) {
                double r2 = static_cast<double>(static_cast<int>(rng.next_u64() % 11) - 5);
                if (r2 == r1) r2 += 1.0;
                const double q = tenth(rng, 1, 9);
                reward = {{r1, q}, {r2, 1.0 - q}};
            }
            mdp.set(s, a, std::move(next), std::move(reward));
        }
    mdp.make_terminal(terminal);
    mdp.name = "random_layered";
    mdp.validate();
    return mdp;
}

TabularMDP markovian_optimal_fixture() {
    // States 0..3 decide, 4 is terminal. The dominated action pays the
    // dominant one's reward minus 0.5 and shares its successors.
    TabularMDP mdp(5, 2, 0.95, 10);
    auto pair = [&](StateId s, ActionId dominant, std::vector<Outcome> next, std::vector<RewardAtom> reward) {
        std::vector<RewardAtom> worse = reward;
        for (auto& r : worse) r.value -= 0.5;
        mdp.set(s, dominant, next, reward);
        mdp.set(s, 1 - dominant, next, worse);
    };
    pair(0, 0, {{1, 0.5}, {2, 0.5}}, {{2.0, 0.3}, {-3.0, 0.7}});
    pair(1, 1, {{3, 0.6}, {4, 0.4}}, {{4.0, 0.2}, {-1.0, 0.8}});
    pair(2, 0, {{3, 1.0}}, {{5.0, 0.1}, {0.0, 0.6}, {-2.0, 0.3}});
    pair(3, 1, {{4, 1.0}}, {{1.0, 0.5}, {-1.0, 0.5}});
    mdp.make_terminal(4);
    mdp.name = "markovian_optimal";
    mdp.validate();
    return mdp;
}

// ---------------------------------------------------------------------------
// Suites

ContractionReport contraction_audit(std::size_t pairs, const SoftLossParams& params, std::uint64_t seed,
                                    const LossGradFn& grad) {
    params.validate();
    const TabularMDP mdp = contraction_fixture_mdp();
    const QuantileGrid grid(10);
    ContractionReport rep;
    rep.bound = 1.0 - params.eta * params.epsilon * params.kappa * (1.0 - mdp.gamma());
    Rng rng(seed);
    auto random_table = [&](double scale) {
        ValueTable t{mdp.n_states(), grid.size(), std::vector<double>(mdp.n_states() * grid.size())};
        for (double& x : t.data) x = rng.uniform(-scale, scale);
        return t;
    };
    for (std::size_t k = 0; k < pairs; ++k) {
        const ValueTable v = random_table(20.0);
        ValueTable w = v;
        // Alternate far pairs and near pairs.
        const double scale = k % 2 == 0 ? 20.0 : 0.05;
        for (double& x : w.data) x += rng.uniform(-scale, scale);
        const double before = sup_distance(v, w);
        const double after = sup_distance(apply_v_operator(mdp, grid, v, params, grad),
                                          apply_v_operator(mdp, grid, w, params, grad));
        ++rep.pairs;
        if (before > 0.0) rep.worst_ratio = std::max(rep.worst_ratio, after / before);
        if (after > rep.bound * before * (1.0 + 1e-12) + 1e-12) ++rep.violations;
    }
    return rep;
}

OracleReport fixed_point_oracle_audit(std::size_t n_mdps, std::size_t n_levels, std::uint64_t seed) {
    if (n_levels < 3) throw std::invalid_argument("oracle audit needs at least 3 levels");
    const auto start = std::chrono::steady_clock::now();
    const QuantileGrid grid(n_levels);
    OracleReport rep;
    rep.worst_excess = -std::numeric_limits<double>::infinity();
    Rng rng(seed);
    for (std::size_t m = 0; m < n_mdps; ++m) {
        const TabularMDP mdp = random_layered_mdp(rng);
        const DPSolution sol = nested_value_iteration(mdp, grid);
        rep.max_residual = std::max(rep.max_residual, hard_fixed_point_residual(mdp, grid, sol.v));
        std::vector<double> brute(n_levels);
        for (std::size_t i = 0; i < n_levels; ++i)
            brute[i] = brute_force_optimal_var(mdp, grid.level(i), mdp.horizon()).value;
        for (std::size_t i = 1; i + 1 < n_levels; ++i) {
            const double tol = std::max(brute[i + 1] - brute[i - 1], 1e-6);
            const double err = std::abs(sol.v.at(mdp.initial_state(), i) - brute[i]);
            ++rep.comparisons;
            rep.worst_excess = std::max(rep.worst_excess, err - tol);
            if (err > tol) {
                if (rep.failures++ == 0)
                    rep.first_failure = "mdp " + std::to_string(m) + " level " + std::to_string(i) + ": dp " +
                                        fmt("%.6g", sol.v.at(mdp.initial_state(), i)) + " vs brute " +
                                        fmt("%.6g", brute[i]);
            }
        }
        ++rep.mdps;
    }
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rep;
}

EquivalenceReport execution_equivalence_audit(std::size_t episodes, std::size_t n_levels, std::uint64_t seed) {
    const TabularMDP mdp = markovian_optimal_fixture();
    const QuantileGrid grid(n_levels);
    const DPSolution opt = nested_value_iteration(mdp, grid);
    // The Markovian optimum read at the lowest level.
    std::vector<double> probs(mdp.n_states() * mdp.n_actions(), 0.0);
    for (StateId s = 0; s < mdp.n_states(); ++s) probs[s * mdp.n_actions() + opt.greedy(s, 0)] = 1.0;
    const DPSolution evaluated = policy_evaluation_quantiles(mdp, probs, grid);
    EquivalenceReport rep;
    for (std::size_t e = 0; e < episodes; ++e) {
        const std::uint64_t s = Rng::mix(seed + e);
        const std::size_t level0 = e % n_levels;
        Rng r1(s), r2(s);
        const Trajectory a = execute_static_var(mdp, opt, level0, r1);
        const Trajectory b = execute_static_var_with_q(mdp, evaluated, level0, r2);
        bool same = a.size() == b.size();
        for (std::size_t t = 0; same && t < a.size(); ++t)
            same = a.steps[t].action == b.steps[t].action && a.steps[t].state == b.steps[t].state;
        ++rep.episodes;
        if (!same) ++rep.mismatches;
    }
    return rep;
}

ElicitabilityReport elicitability_audit(double alpha, std::size_t samples, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> xs(samples);
    for (double& x : xs) x = rng.normal();
    const SoftLossParams params{0.01, 0.01, 0.01};
    ElicitabilityReport rep;
    rep.alpha = alpha;
    rep.empirical = empirical_var(xs, alpha);
    rep.iqr = empirical_var(xs, 0.75) - empirical_var(xs, 0.25);
    double y = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(samples);
    const double lr = params.kappa;
    for (std::size_t it = 0; it < 200000; ++it) {
        double g = 0.0;
        for (double x : xs) g += soft_loss_grad(x - y, alpha, params);
        const double step = lr * g / static_cast<double>(samples);
        y += step;
        if (std::abs(step) < 1e-13) break;
    }
    rep.estimate = y;
    rep.passed = std::abs(y - rep.empirical) <= 0.01 * rep.iqr;
    return rep;
}

MonotoneReport monotone_head_audit(std::size_t vectors, std::size_t n_levels, std::uint64_t seed) {
    Rng rng(seed);
    MonotoneReport rep;
    const double scales[] = {1e-3, 1.0, 30.0, 1e3};
    std::vector<double> raw(n_levels);
    for (std::size_t k = 0; k < vectors; ++k) {
        const double scale = scales[k % 4];
        for (double& r : raw) r = scale * rng.normal();
        const auto out = monotone_head(raw);
        ++rep.vectors;
        for (std::size_t i = 1; i < out.size(); ++i)
            if (!(out[i] >= out[i - 1])) {
                ++rep.violations;
                break;
            }
    }
    // Rows of randomly initialized value networks.
    const QuantileGrid grid(n_levels);
    for (std::size_t k = 0; k < 10; ++k) {
        MonotoneQuantileNetwork net(grid, std::vector<bool>(8, false), 8, 16, Rng::mix(seed + k));
        for (double& p : net.parameters()) p *= 1.0 + 3.0 * static_cast<double>(k);
        for (StateId s = 0; s < 8; ++s) {
            const auto row = net.values(s);
            for (std::size_t i = 1; i < row.size(); ++i)
                if (!(row[i] >= row[i - 1])) {
                    ++rep.violations;
                    break;
                }
        }
    }
    return rep;
}

GradientReport gradient_check_audit(std::size_t points, std::uint64_t seed) {
    Rng rng(seed);
    GradientReport rep;
    const std::size_t S = 6, A = 4, I = 5;
    const QuantileGrid grid(I);
    const double step = 1e-5;
    for (std::size_t p = 0; p < points; ++p) {
        // Policy log-probability.
        PolicyModel::Options opt;
        opt.embed = 8;
        opt.hidden = 16;
        opt.seed = Rng::mix(seed ^ (p + 1));
        PolicyModel policy(PolicyKind::network_state, S, A, opt);
        for (double& x : policy.parameters()) x += 0.3 * rng.normal();
        const StateId s = rng.next_u64() % S;
        const ActionId a = rng.next_u64() % A;
        const auto analytic = policy.log_prob_grad(s, std::nullopt, a);
        PolicyModel probe = policy;
        std::vector<double> logits(A);
        auto log_prob = [&](std::span<const double> x) {
            std::copy(x.begin(), x.end(), probe.parameters().begin());
            probe.logits(s, std::nullopt, logits);
            const double m = *std::max_element(logits.begin(), logits.end());
            double z = 0.0;
            for (double l : logits) z += std::exp(l - m);
            return logits[a] - m - std::log(z);
        };
        const std::vector<double> x0(policy.parameters().begin(), policy.parameters().end());
        rep.policy_max_error =
            std::max(rep.policy_max_error, finite_difference_check(log_prob, x0, analytic, step));

        // Quantile regression value loss.
        MonotoneQuantileNetwork net(grid, std::vector<bool>(S, false), 8, 16, Rng::mix(seed ^ (p + 1000)));
        for (double& x : net.parameters()) x += 0.3 * rng.normal();
        const StateId vs = rng.next_u64() % S;
        const auto row = net.values(vs);
        std::vector<WeightedTarget> targets(7);
        for (auto& t : targets) {
            // Keep targets away from the kinks of the pinball loss.
            do {
                t.value = row[rng.next_u64() % I] + 2.0 * rng.normal();
            } while (std::any_of(row.begin(), row.end(), [&](double v) { return std::abs(v - t.value) < 1e-2; }));
            t.weight = rng.uniform(0.1, 1.0);
        }
        const double wsum = std::accumulate(targets.begin(), targets.end(), 0.0,
                                            [](double acc, const WeightedTarget& t) { return acc + t.weight; });
        const auto d_values = quantile_regression_gradient(row, grid, targets);
        std::vector<double> value_grad(net.parameters().size());
        net.gradient(vs, d_values, value_grad);
        auto probe_net = net.clone();
        auto loss = [&](std::span<const double> x) {
            std::copy(x.begin(), x.end(), probe_net->parameters().begin());
            const auto r = probe_net->values(vs);
            double l = 0.0;
            for (std::size_t i = 0; i < I; ++i)
                for (const auto& t : targets) l += t.weight / wsum * quantile_loss(t.value - r[i], grid.level(i));
            return l;
        };
        const std::vector<double> y0(net.parameters().begin(), net.parameters().end());
        rep.value_max_error = std::max(rep.value_max_error, finite_difference_check(loss, y0, value_grad, step));
        ++rep.points;
    }
    return rep;
}

DualReport cvar_dual_audit(std::size_t samples, std::uint64_t seed) {
    Rng rng(seed);
    DualReport rep;
    const double alphas[] = {0.05, 0.1, 0.2, 0.25, 0.5};
    for (std::size_t k = 0; k < samples; ++k) {
        const std::size_t n = 20 * (1 + rng.next_u64() % 10);
        const double alpha = alphas[rng.next_u64() % 5];
        std::vector<double> xs(n);
        const bool discrete = k % 3 == 0;
        for (double& x : xs) x = discrete ? std::round(rng.uniform(-5.0, 5.0)) : 10.0 * rng.normal() + rng.uniform(-3.0, 3.0);
        const double cvar = empirical_cvar(xs, alpha);
        const auto vm = maximize_cvar_variational(xs, alpha);
        const double cell = vm.grid_step * std::max(1.0, 1.0 / alpha - 1.0);
        const double gap = std::abs(vm.value - cvar);
        ++rep.samples;
        if (cell > 0.0) rep.worst_gap_in_cells = std::max(rep.worst_gap_in_cells, gap / cell);
        if (gap > cell * (1.0 + 1e-9) + 1e-12) ++rep.failures;
    }
    return rep;
}

bool vanishing_gradient_audit() {
    PolicyModel::Options opt;
    opt.seed = 7;
    PolicyModel policy(PolicyKind::network_state, 3, 2, opt);
    auto make_batch = [](std::vector<double> returns) {
        std::vector<Trajectory> batch;
        for (std::size_t i = 0; i < returns.size(); ++i) {
            Trajectory t;
            t.gamma = 1.0;
            for (std::size_t k = 0; k < 3; ++k) t.steps.push_back({k % 3, std::nullopt, (i + k) % 2, 0.0, 0, false, 0.0});
            t.total_return = returns[i];
            batch.push_back(t);
        }
        return batch;
    };
    std::vector<double> returns;
    for (int i = 0; i < 20; ++i) returns.push_back(i < 3 ? -100.0 : -40.0 + 2.0 * i);
    const auto flat = cvar_pg_gradient(make_batch(returns), policy, 0.1);
    const bool zero = std::all_of(flat.buffer.begin(), flat.buffer.end(), [](double g) { return g == 0.0; });
    returns[0] = -150.0; // a strictly worse outlier restores the signal
    const auto sharp = cvar_pg_gradient(make_batch(returns), policy, 0.1);
    const bool nonzero = std::any_of(sharp.buffer.begin(), sharp.buffer.end(), [](double g) { return g != 0.0; });
    return zero && nonzero;
}

// ---------------------------------------------------------------------------

namespace {

bool in_scope(const std::string& scope, const char* name) { return scope == "all" || scope == name; }

} // namespace

bool is_audit_scope(const std::string& scope) {
    return scope == "all" || scope == "metrics" || scope == "dp" || scope == "gradients" || scope == "props";
}

std::vector<AuditResult> run_audits(const std::string& scope) {
    if (!is_audit_scope(scope)) throw std::invalid_argument("unknown audit scope '" + scope + "'");
    std::vector<AuditResult> out;
    auto add = [&](const char* name, const char* sc, bool ok, std::string detail) {
        out.push_back({name, sc, ok, std::move(detail)});
    };

    if (in_scope(scope, "metrics")) {
        for (double alpha : {0.05, 0.25, 0.5, 0.95}) {
            const auto r = elicitability_audit(alpha, 10000, 11);
            add("elicitability", "metrics", r.passed,
                "alpha=" + fmt("%.2f", alpha) + " estimate=" + fmt("%.5f", r.estimate) +
                    " empirical=" + fmt("%.5f", r.empirical) + " limit=" + fmt("%.5f", 0.01 * r.iqr));
        }
        const auto d = cvar_dual_audit(100, 13);
        add("cvar_dual", "metrics", d.failures == 0,
            std::to_string(d.failures) + "/" + std::to_string(d.samples) + " outside one cell, worst " +
                fmt("%.3f", d.worst_gap_in_cells) + " cells");
        add("vanishing_gradient", "metrics", vanishing_gradient_audit(), "flat tail gives an exactly zero gradient");
    }
    if (in_scope(scope, "dp")) {
        const SoftLossParams params{0.5, 0.05, 0.5};
        const auto c = contraction_audit(100, params, 17);
        add("contraction", "dp", c.violations == 0,
            std::to_string(c.violations) + " violations in " + std::to_string(c.pairs) + " pairs, worst ratio " +
                fmt("%.6f", c.worst_ratio) + " bound " + fmt("%.6f", c.bound));
        const auto m = contraction_audit(100, params, 17, [&](double d, double a) {
            return -soft_loss_grad(d, a, params);
        });
        add("contraction_mutation", "dp", m.violations > 0,
            "sign-flipped loss derivative trips " + std::to_string(m.violations) + " violations");
        const auto o = fixed_point_oracle_audit(20, 51, 19);
        add("fixed_point_oracle", "dp", o.failures == 0 && o.max_residual <= 1e-9 && o.seconds <= 60.0,
            std::to_string(o.failures) + "/" + std::to_string(o.comparisons) + " mismatches over " +
                std::to_string(o.mdps) + " mdps, residual " + fmt("%.3g", o.max_residual) + ", " +
                fmt("%.1f", o.seconds) + " s" + (o.first_failure.empty() ? "" : ", first: " + o.first_failure));
        const auto e = execution_equivalence_audit(1000, 10, 23);
        add("execution_equivalence", "dp", e.mismatches == 0,
            std::to_string(e.mismatches) + " mismatching episodes of " + std::to_string(e.episodes));
    }
    if (in_scope(scope, "gradients")) {
        const auto g = gradient_check_audit(100, 29);
        add("policy_log_prob_gradient", "gradients", g.policy_max_error <= 1e-4,
            "max relative error " + fmt("%.3g", g.policy_max_error));
        add("value_loss_gradient", "gradients", g.value_max_error <= 1e-4,
            "max relative error " + fmt("%.3g", g.value_max_error));
    }
    if (in_scope(scope, "props")) {
        const auto mh = monotone_head_audit(10000, 10, 31);
        add("monotone_head", "props", mh.violations == 0,
            std::to_string(mh.violations) + " violations in " + std::to_string(mh.vectors) + " vectors");

        // Advantage weights: equal components must average to themselves.
        const QuantileGrid grid(10);
        const ValueTable zero{4, 10, std::vector<double>(40, 0.0)};
        Trajectory traj;
        traj.gamma = 0.999;
        for (std::size_t t = 0; t < 30; ++t)
            traj.steps.push_back({t % 4, t % 10, 0, 1.0 + static_cast<double>(t % 3), (t + 1) % 4, t == 29, 0.0});
        const auto adv = markovian_var_advantages(traj, zero, grid, 0.95, LossKind::hard, {});
        double worst = 0.0;
        for (std::size_t t = 0; t < adv.size(); ++t)
            worst = std::max(worst, std::abs(adv[t].value - grid.level(t % 10)));
        add("advantage_weights", "props", worst <= 1e-12, "max deviation " + fmt("%.3g", worst));

        // Tracked levels are grid members and reproducible from the seed.
        const TabularMDP corridor = make_noisy_corridor(4, 10.0);
        const DPSolution sol = nested_value_iteration(corridor, grid);
        PolicyModel::Options popt;
        popt.seed = 3;
        const PolicyModel pol(PolicyKind::tabular_state, corridor.n_states(), corridor.n_actions(), popt);
        const auto snap = PolicySnapshot::of(pol);
        bool ok = true;
        for (std::uint64_t s = 0; s < 50 && ok; ++s) {
            LevelTracking tr{&sol.v, s % 10};
            Rng r1(s), r2(s);
            const Trajectory a = rollout(corridor, snap, r1, &tr);
            const Trajectory b = rollout(corridor, snap, r2, &tr);
            for (std::size_t t = 0; t < a.size() && ok; ++t)
                ok = a.steps[t].risk_level && *a.steps[t].risk_level < grid.size() &&
                     a.steps[t].risk_level == b.steps[t].risk_level;
        }
        add("level_tracking", "props", ok, "levels on the grid and reproducible over 50 seeds");
    }
    return out;
}

} // namespace riskrl
