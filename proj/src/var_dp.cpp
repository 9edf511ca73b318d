#include "riskrl/var_dp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace riskrl {

namespace {

constexpr double kProbTol = 1e-12;

bool same_value(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)); }

struct Atom {
    double value;
    double weight;
};

void sort_atoms(std::vector<Atom>& atoms) {
    std::sort(atoms.begin(), atoms.end(), [](const Atom& a, const Atom& b) { return a.value < b.value; });
}

// Upper quantile of sorted weighted atoms with total mass `total`.
double upper_quantile_sorted(const std::vector<Atom>& atoms, double total, double alpha) {
    double below = 0.0; // mass strictly below atoms[i].value
    double best = atoms.front().value;
    std::size_t i = 0;
    while (i < atoms.size()) {
        const double x = atoms[i].value;
        if (below > (alpha + kProbTol) * total) break;
        best = x;
        while (i < atoms.size() && atoms[i].value == x) below += atoms[i++].weight;
    }
    return best;
}

} // namespace

ReturnDistribution ReturnDistribution::from_atoms(std::vector<RewardAtom> atoms) {
    if (atoms.empty()) throw std::invalid_argument("return distribution: no atoms");
    std::sort(atoms.begin(), atoms.end(),
              [](const RewardAtom& a, const RewardAtom& b) { return a.value < b.value; });
    ReturnDistribution d;
    double total = 0.0;
    for (const auto& a : atoms) {
        if (!(a.prob >= 0.0)) throw std::invalid_argument("return distribution: negative probability");
        total += a.prob;
        if (a.prob == 0.0) continue;
        if (!d.atoms.empty() && same_value(d.atoms.back().value, a.value))
            d.atoms.back().prob += a.prob;
        else
            d.atoms.push_back(a);
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("return distribution: mass is not 1");
    return d;
}

double ReturnDistribution::mean() const {
    double m = 0.0;
    for (const auto& a : atoms) m += a.prob * a.value;
    return m;
}

double ReturnDistribution::prob_below(double x) const {
    double p = 0.0;
    for (const auto& a : atoms) {
        if (a.value >= x) break;
        p += a.prob;
    }
    return p;
}

double exact_var_of_distribution(const ReturnDistribution& dist, double alpha) {
    if (dist.atoms.empty()) throw std::invalid_argument("empty return sample");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("invalid risk level");
    double below = 0.0;
    double best = dist.atoms.front().value;
    for (const auto& a : dist.atoms) {
        if (below > alpha + kProbTol) break;
        best = a.value;
        below += a.prob;
    }
    return best;
}

EnumeratedPolicy markov_policy(std::vector<ActionId> actions_by_state) {
    EnumeratedPolicy p;
    p.act = [acts = std::move(actions_by_state)](const ExecState& e) { return acts.at(e.s); };
    return p;
}

ReturnDistribution enumerate_return_distribution(const TabularMDP& mdp, const EnumeratedPolicy& policy,
                                                 std::size_t horizon, std::size_t atom_cap) {
    if (!mdp.is_exact()) throw std::invalid_argument("enumeration needs discrete rewards");
    using Key = std::tuple<StateId, std::size_t, double>;
    std::map<Key, double> live;
    live[{mdp.initial_state(), 0, 0.0}] = 1.0;
    std::vector<RewardAtom> done;
    double discount = 1.0;
    for (std::size_t t = 0; t < horizon && !live.empty(); ++t) {
        std::map<Key, double> next_live;
        for (const auto& [key, prob] : live) {
            const auto& [s, level, k] = key;
            if (mdp.is_terminal(s)) {
                done.push_back({k, prob});
                continue;
            }
            const ExecState e{t, s, k, level};
            const ActionId a = policy.act(e);
            for (const auto& r : mdp.rewards(s, a))
                for (const auto& o : mdp.transitions(s, a)) {
                    const double p = prob * r.prob * o.prob;
                    if (p == 0.0) continue;
                    const std::size_t nl = policy.advance ? policy.advance(e, a, r.value, o.next) : level;
                    next_live[{o.next, nl, k + discount * r.value}] += p;
                }
            if (next_live.size() > atom_cap) throw std::runtime_error("oracle blowup");
        }
        live = std::move(next_live);
        discount *= mdp.gamma();
    }
    for (const auto& [key, prob] : live) done.push_back({std::get<2>(key), prob});
    if (done.size() > atom_cap) throw std::runtime_error("oracle blowup");
    return ReturnDistribution::from_atoms(std::move(done));
}

// ---------------------------------------------------------------------------
// Brute-force optimum

namespace {

struct TreeNode {
    std::size_t t;
    StateId s;
    double k;
    bool leaf;
    // per action: (child index, probability)
    std::vector<std::vector<std::pair<std::size_t, double>>> children;
};

std::vector<TreeNode> unroll(const TabularMDP& mdp, std::size_t horizon, std::size_t cap) {
    std::vector<TreeNode> nodes;
    nodes.push_back({0, mdp.initial_state(), 0.0, false, {}});
    std::size_t layer_begin = 0;
    double discount = 1.0;
    for (std::size_t t = 0; t <= horizon; ++t) {
        const std::size_t layer_end = nodes.size();
        std::map<std::pair<StateId, double>, std::size_t> index;
        for (std::size_t n = layer_begin; n < layer_end; ++n) {
            if (t == horizon || mdp.is_terminal(nodes[n].s)) {
                nodes[n].leaf = true;
                continue;
            }
            const StateId s = nodes[n].s;
            const double k = nodes[n].k;
            std::vector<std::vector<std::pair<std::size_t, double>>> kids(mdp.n_actions());
            for (ActionId a = 0; a < mdp.n_actions(); ++a)
                for (const auto& r : mdp.rewards(s, a))
                    for (const auto& o : mdp.transitions(s, a)) {
                        const double p = r.prob * o.prob;
                        if (p == 0.0) continue;
                        const std::pair<StateId, double> key{o.next, k + discount * r.value};
                        auto it = index.find(key);
                        if (it == index.end()) {
                            it = index.emplace(key, nodes.size()).first;
                            nodes.push_back({t + 1, o.next, key.second, false, {}});
                            if (nodes.size() > cap) throw std::runtime_error("oracle blowup");
                        }
                        kids[a].emplace_back(it->second, p);
                    }
            nodes[n].children = std::move(kids);
        }
        layer_begin = layer_end;
        discount *= mdp.gamma();
        if (layer_begin == nodes.size()) break;
    }
    return nodes;
}

// min over policies of P[G < x], filling the minimizing action per node.
double min_prob_below(const std::vector<TreeNode>& nodes, double x, std::vector<ActionId>* best) {
    std::vector<double> w(nodes.size(), 0.0);
    if (best) best->assign(nodes.size(), 0);
    for (std::size_t n = nodes.size(); n-- > 0;) {
        const auto& node = nodes[n];
        if (node.leaf) {
            w[n] = node.k < x ? 1.0 : 0.0;
            continue;
        }
        double lo = std::numeric_limits<double>::infinity();
        ActionId arg = 0;
        for (ActionId a = 0; a < node.children.size(); ++a) {
            double acc = 0.0;
            for (const auto& [c, p] : node.children[a]) acc += p * w[c];
            if (acc < lo - kProbTol) {
                lo = acc;
                arg = a;
            }
        }
        w[n] = lo;
        if (best) (*best)[n] = arg;
    }
    return w[0];
}

} // namespace

EnumeratedPolicy BruteForceResult::policy() const {
    if (mode == BruteForceMode::stationary_markov) return markov_policy(stationary_actions);
    EnumeratedPolicy p;
    p.act = [this](const ExecState& e) {
        const auto it = history_actions.find({e.t, e.s, e.k});
        if (it == history_actions.end()) throw std::runtime_error("brute force policy: unknown history");
        return it->second;
    };
    return p;
}

BruteForceResult brute_force_optimal_var(const TabularMDP& mdp, double alpha, std::size_t horizon,
                                         BruteForceMode mode, std::size_t cap) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("invalid risk level");
    if (!mdp.is_exact()) throw std::invalid_argument("brute force needs discrete rewards");
    BruteForceResult res;
    res.mode = mode;
    if (mode == BruteForceMode::history) {
        const auto nodes = unroll(mdp, horizon, cap);
        std::vector<double> candidates;
        for (const auto& n : nodes)
            if (n.leaf) candidates.push_back(n.k);
        std::sort(candidates.begin(), candidates.end());
        candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
        // P[G < x] is nondecreasing in x: find the last candidate with min P <= alpha.
        std::size_t lo = 0, hi = candidates.size() - 1;
        while (lo < hi) {
            const std::size_t mid = (lo + hi + 1) / 2;
            if (min_prob_below(nodes, candidates[mid], nullptr) <= alpha + kProbTol)
                lo = mid;
            else
                hi = mid - 1;
        }
        res.value = candidates[lo];
        std::vector<ActionId> best;
        min_prob_below(nodes, res.value, &best);
        for (std::size_t n = 0; n < nodes.size(); ++n)
            if (!nodes[n].leaf) res.history_actions[{nodes[n].t, nodes[n].s, nodes[n].k}] = best[n];
        res.first_action = nodes[0].leaf ? 0 : best[0];
        return res;
    }

    std::vector<StateId> free_states;
    for (StateId s = 0; s < mdp.n_states(); ++s)
        if (!mdp.is_terminal(s)) free_states.push_back(s);
    double count = std::pow(static_cast<double>(mdp.n_actions()), static_cast<double>(free_states.size()));
    if (count > static_cast<double>(cap)) throw std::runtime_error("oracle blowup");
    std::vector<ActionId> acts(mdp.n_states(), 0);
    bool first = true;
    while (true) {
        const auto dist = enumerate_return_distribution(mdp, markov_policy(acts), horizon, cap);
        const double v = exact_var_of_distribution(dist, alpha);
        if (first || v > res.value + 1e-12 * std::max(1.0, std::abs(v))) {
            res.value = v;
            res.stationary_actions = acts;
            first = false;
        }
        // next combination, lowest state varies fastest
        std::size_t i = 0;
        for (; i < free_states.size(); ++i) {
            auto& a = acts[free_states[i]];
            if (++a < mdp.n_actions()) break;
            a = 0;
        }
        if (i == free_states.size()) break;
    }
    res.first_action = res.stationary_actions[mdp.initial_state()];
    return res;
}

// ---------------------------------------------------------------------------
// Operators

namespace {

void fill_greedy(DPSolution& sol, const TabularMDP& mdp) {
    const std::size_t I = sol.grid.size(), A = sol.n_actions;
    sol.v.n_states = sol.n_states;
    sol.v.n_levels = I;
    sol.v.data.assign(sol.n_states * I, 0.0);
    sol.pi_hat.assign(sol.n_states * I, 0);
    for (StateId s = 0; s < sol.n_states; ++s)
        for (std::size_t i = 0; i < I; ++i) {
            const double* row = &sol.q[(s * I + i) * A];
            ActionId best = 0;
            for (ActionId a = 1; a < A; ++a)
                if (row[a] > row[best]) best = a;
            sol.pi_hat[s * I + i] = best;
            sol.v.data[s * I + i] = mdp.is_terminal(s) ? 0.0 : row[best];
        }
}

// Target atoms r + gamma * next_value(s', j) for one (s, a).
template <class NextRow>
void gather_targets(const TabularMDP& mdp, StateId s, ActionId a, std::size_t I, NextRow&& next_row,
                    std::vector<Atom>& out) {
    out.clear();
    const double inv = 1.0 / static_cast<double>(I);
    for (const auto& r : mdp.rewards(s, a))
        for (const auto& o : mdp.transitions(s, a)) {
            const double p = r.prob * o.prob * inv;
            if (p == 0.0) continue;
            next_row(o.next, [&](double value, double weight) {
                out.push_back({r.value + mdp.gamma() * value, p * weight});
            });
        }
}

} // namespace

DPSolution nested_value_iteration(const TabularMDP& mdp, const QuantileGrid& grid,
                                  const NestedVIOptions& opt) {
    mdp.validate();
    if (!mdp.is_exact()) throw std::invalid_argument("value iteration needs discrete rewards");
    if (opt.loss == LossKind::soft) opt.params.validate();
    const std::size_t S = mdp.n_states(), A = mdp.n_actions(), I = grid.size();
    DPSolution sol{grid, S, A, std::vector<double>(S * I * A, 0.0), {}, {}, 0, false, 0.0};
    fill_greedy(sol, mdp);
    std::vector<double> next_q(sol.q.size());
    std::vector<Atom> targets;
    for (std::size_t it = 0; it < opt.max_iters; ++it) {
        double change = 0.0;
        for (StateId s = 0; s < S; ++s) {
            for (ActionId a = 0; a < A; ++a) {
                if (mdp.is_terminal(s)) {
                    for (std::size_t i = 0; i < I; ++i) next_q[(s * I + i) * A + a] = 0.0;
                    continue;
                }
                gather_targets(mdp, s, a, I, [&](StateId n, auto&& emit) {
                    for (std::size_t j = 0; j < I; ++j) emit(sol.v.at(n, j), 1.0);
                }, targets);
                if (opt.loss == LossKind::hard) {
                    sort_atoms(targets);
                    for (std::size_t i = 0; i < I; ++i)
                        next_q[(s * I + i) * A + a] = upper_quantile_sorted(targets, 1.0, grid.level(i));
                } else {
                    for (std::size_t i = 0; i < I; ++i) {
                        const double cur = sol.q[(s * I + i) * A + a];
                        double g = 0.0;
                        for (const auto& t : targets)
                            g += t.weight * soft_loss_grad(t.value - cur, grid.level(i), opt.params);
                        next_q[(s * I + i) * A + a] = cur + opt.params.eta * g;
                    }
                }
            }
        }
        for (std::size_t n = 0; n < next_q.size(); ++n) {
            if (!std::isfinite(next_q[n])) throw std::runtime_error("diverged value");
            change = std::max(change, std::abs(next_q[n] - sol.q[n]));
        }
        sol.q.swap(next_q);
        fill_greedy(sol, mdp);
        sol.iterations = it + 1;
        sol.last_change = change;
        if (change < opt.tol) {
            sol.converged = true;
            break;
        }
    }
    return sol;
}

ValueTable apply_v_operator(const TabularMDP& mdp, const QuantileGrid& grid, const ValueTable& v,
                            const SoftLossParams& params, const LossGradFn& grad) {
    params.validate();
    const std::size_t S = mdp.n_states(), A = mdp.n_actions(), I = grid.size();
    if (v.n_states != S || v.n_levels != I) throw std::invalid_argument("v operator: table shape mismatch");
    const LossGradFn dl = grad ? grad : LossGradFn([&params](double d, double a) {
        return soft_loss_grad(d, a, params);
    });
    ValueTable out = v;
    std::vector<Atom> targets;
    for (StateId s = 0; s < S; ++s) {
        if (mdp.is_terminal(s)) {
            for (std::size_t i = 0; i < I; ++i) out.row(s)[i] = 0.0;
            continue;
        }
        for (std::size_t i = 0; i < I; ++i) {
            const double cur = v.at(s, i);
            double best = -std::numeric_limits<double>::infinity();
            for (ActionId a = 0; a < A; ++a) {
                gather_targets(mdp, s, a, I, [&](StateId n, auto&& emit) {
                    for (std::size_t j = 0; j < I; ++j) emit(mdp.is_terminal(n) ? 0.0 : v.at(n, j), 1.0);
                }, targets);
                double g = 0.0;
                for (const auto& t : targets) g += t.weight * dl(t.value - cur, grid.level(i));
                best = std::max(best, g);
            }
            out.row(s)[i] = cur + params.eta * best;
        }
    }
    return out;
}

double hard_fixed_point_residual(const TabularMDP& mdp, const QuantileGrid& grid, const ValueTable& v) {
    const std::size_t S = mdp.n_states(), A = mdp.n_actions(), I = grid.size();
    std::vector<Atom> targets;
    double worst = 0.0;
    for (StateId s = 0; s < S; ++s) {
        if (mdp.is_terminal(s)) continue;
        for (std::size_t i = 0; i < I; ++i) {
            const double cur = v.at(s, i);
            const double tol = 1e-12 * std::max(1.0, std::abs(cur));
            double lo = -std::numeric_limits<double>::infinity();
            double hi = -std::numeric_limits<double>::infinity();
            for (ActionId a = 0; a < A; ++a) {
                gather_targets(mdp, s, a, I, [&](StateId n, auto&& emit) {
                    for (std::size_t j = 0; j < I; ++j) emit(mdp.is_terminal(n) ? 0.0 : v.at(n, j), 1.0);
                }, targets);
                double below = 0.0, at_or_below = 0.0;
                for (const auto& t : targets) {
                    if (t.value < cur - tol) below += t.weight;
                    if (t.value <= cur + tol) at_or_below += t.weight;
                }
                lo = std::max(lo, grid.level(i) - at_or_below);
                hi = std::max(hi, grid.level(i) - below);
            }
            double r = 0.0;
            if (lo > 0.0) r = lo;
            if (hi < 0.0) r = -hi;
            worst = std::max(worst, r);
        }
    }
    return worst;
}

DPSolution policy_evaluation_quantiles(const TabularMDP& mdp, const std::vector<double>& probs,
                                       const QuantileGrid& grid, std::size_t max_iters, double tol) {
    mdp.validate();
    if (!mdp.is_exact()) throw std::invalid_argument("policy evaluation needs discrete rewards");
    const std::size_t S = mdp.n_states(), A = mdp.n_actions(), I = grid.size();
    if (probs.size() != S * A) throw std::invalid_argument("policy evaluation: policy shape mismatch");
    DPSolution sol{grid, S, A, std::vector<double>(S * I * A, 0.0), {}, {}, 0, false, 0.0};
    std::vector<double> next_q(sol.q.size(), 0.0);
    std::vector<Atom> targets;
    for (std::size_t it = 0; it < max_iters; ++it) {
        for (StateId s = 0; s < S; ++s)
            for (ActionId a = 0; a < A; ++a) {
                if (mdp.is_terminal(s)) continue;
                gather_targets(mdp, s, a, I, [&](StateId n, auto&& emit) {
                    if (mdp.is_terminal(n)) {
                        for (std::size_t j = 0; j < I; ++j) emit(0.0, 1.0);
                        return;
                    }
                    for (ActionId b = 0; b < A; ++b) {
                        const double pb = probs[n * A + b];
                        if (pb == 0.0) continue;
                        for (std::size_t j = 0; j < I; ++j) emit(sol.q[(n * I + j) * A + b], pb);
                    }
                }, targets);
                sort_atoms(targets);
                double total = 0.0;
                for (const auto& t : targets) total += t.weight;
                for (std::size_t i = 0; i < I; ++i)
                    next_q[(s * I + i) * A + a] = upper_quantile_sorted(targets, total, grid.level(i));
            }
        double change = 0.0;
        for (std::size_t n = 0; n < next_q.size(); ++n) change = std::max(change, std::abs(next_q[n] - sol.q[n]));
        sol.q = next_q;
        sol.iterations = it + 1;
        sol.last_change = change;
        if (change < tol) {
            sol.converged = true;
            break;
        }
    }
    fill_greedy(sol, mdp);
    return sol;
}

// ---------------------------------------------------------------------------
// Execution

namespace {

Trajectory execute(const TabularMDP& mdp, const ValueTable& v, std::size_t level0, Rng& rng,
                   const std::function<ActionId(StateId, std::size_t)>& act) {
    if (level0 >= v.n_levels) throw std::out_of_range("static VaR execution: level out of range");
    Trajectory traj;
    traj.gamma = mdp.gamma();
    StateId s = mdp.initial_state();
    std::size_t level = level0;
    RiskTracker tracker{level0, 0.0, mdp.gamma()};
    double k = 0.0, discount = 1.0;
    for (std::size_t t = 0; t < mdp.horizon() && !mdp.is_terminal(s); ++t) {
        const ActionId a = act(s, level);
        const auto step = mdp.sample(s, a, rng);
        StepRecord rec{s, level, a, step.reward, step.next, false, k};
        rec.done = mdp.is_terminal(step.next) || t + 1 == mdp.horizon();
        traj.steps.push_back(rec);
        k += discount * step.reward;
        discount *= mdp.gamma();
        if (mdp.is_risk_state(step.next)) traj.visited_risk_state = true;
        if (!mdp.is_terminal(step.next)) level = track_level(tracker, v, s, level, step.reward, step.next);
        s = step.next;
    }
    traj.total_return = k;
    traj.reached_terminal = mdp.is_terminal(s);
    traj.risk_event_flag = traj.visited_risk_state || (mdp.has_terminal_states() && !traj.reached_terminal);
    return traj;
}

} // namespace

Trajectory execute_static_var(const TabularMDP& mdp, const DPSolution& sol, std::size_t level0, Rng& rng) {
    return execute(mdp, sol.v, level0, rng, [&](StateId s, std::size_t i) { return sol.greedy(s, i); });
}

Trajectory execute_static_var_with_q(const TabularMDP& mdp, const DPSolution& qv, std::size_t level0,
                                     Rng& rng) {
    // max_b q(s, ., b) and its argmax are exactly what fill_greedy stored.
    return execute(mdp, qv.v, level0, rng, [&](StateId s, std::size_t i) {
        ActionId best = 0;
        for (ActionId b = 1; b < qv.n_actions; ++b)
            if (qv.q_at(s, i, b) > qv.q_at(s, i, best)) best = b;
        return best;
    });
}

EnumeratedPolicy static_var_policy(const TabularMDP& mdp, const DPSolution& sol) {
    EnumeratedPolicy p;
    p.act = [&sol](const ExecState& e) { return sol.greedy(e.s, e.level); };
    p.advance = [&sol, &mdp](const ExecState& e, ActionId, double r, StateId next) {
        if (mdp.is_terminal(next)) return e.level;
        const double z = (sol.v.at(e.s, e.level) - r) / mdp.gamma();
        return lowest_level_at_least(sol.v.row(next), z);
    };
    return p;
}

std::string solution_snapshot_csv(const DPSolution& sol) {
    std::string out = value_snapshot_csv(sol.v, sol.grid);
    out += "state,level,action,q\n";
    char buf[128];
    for (StateId s = 0; s < sol.n_states; ++s)
        for (std::size_t i = 0; i < sol.grid.size(); ++i)
            for (ActionId a = 0; a < sol.n_actions; ++a) {
                std::snprintf(buf, sizeof buf, "%zu,%.17g,%zu,%.17g\n", s, sol.grid.level(i), a, sol.q_at(s, i, a));
                out += buf;
            }
    return out;
}

std::string solution_level_table(const DPSolution& sol, StateId s0) {
    std::string out = "level,value,action\n";
    char buf[96];
    for (std::size_t i = 0; i < sol.grid.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%zu\n", sol.grid.level(i), sol.v.at(s0, i), sol.greedy(s0, i));
        out += buf;
    }
    return out;
}

} // namespace riskrl
