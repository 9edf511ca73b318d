#include "riskrl/learner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <numeric>
#include <stdexcept>

namespace riskrl {

const char* to_string(Algorithm a) {
    switch (a) {
    case Algorithm::cvar_pg: return "cvar_pg";
    case Algorithm::cvar_var: return "cvar_var";
    case Algorithm::var_ac: return "var_ac";
    case Algorithm::reinforce: return "reinforce";
    case Algorithm::retcap: return "retcap";
    }
    return "?";
}

Algorithm parse_algorithm(const std::string& name) {
    for (Algorithm a : {Algorithm::cvar_pg, Algorithm::cvar_var, Algorithm::var_ac, Algorithm::reinforce,
                        Algorithm::retcap})
        if (name == to_string(a)) return a;
    throw std::invalid_argument("unknown algorithm '" + name + "'");
}

OmegaSchedule OmegaSchedule::parse(const std::string& spec) {
    OmegaSchedule s;
    if (spec == "constant") return s;
    const auto colon = spec.find(':');
    const std::string head = spec.substr(0, colon);
    if (colon == std::string::npos || (head != "linear_decay" && head != "step"))
        throw std::invalid_argument("bad omega schedule '" + spec + "'");
    s.kind = head == "step" ? Kind::step : Kind::linear_decay;
    std::size_t used = 0;
    const std::string tail = spec.substr(colon + 1);
    try {
        s.fraction = std::stod(tail, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != tail.size() || !(s.fraction >= 0.0 && s.fraction <= 1.0))
        throw std::invalid_argument("bad omega schedule fraction in '" + spec + "'");
    return s;
}

std::string OmegaSchedule::str() const {
    if (kind == Kind::constant) return "constant";
    return std::string(kind == Kind::step ? "step:" : "linear_decay:") + std::to_string(fraction);
}

double OmegaSchedule::at(double omega, std::size_t iter, std::size_t n_iters) const {
    if (kind == Kind::constant || n_iters == 0) return omega;
    const double m = static_cast<double>(iter);
    const double knee = fraction * static_cast<double>(n_iters);
    if (m < knee) return omega;
    if (kind == Kind::step) return 0.0;
    const double last = static_cast<double>(n_iters - 1);
    if (last <= knee) return 0.0;
    return omega * std::max(0.0, (last - m) / (last - knee));
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw std::invalid_argument(field + ": " + why);
    };
    if (n_trajectories < 2) fail("n_trajectories", "must be at least 2");
    if (n_iterations == 0) fail("n_iterations", "must be positive");
    if (!(alpha0 > 0.0 && alpha0 <= 1.0)) fail("alpha0", "must lie in (0, 1]");
    if (!(omega >= 0.0 && omega <= 1.0)) fail("omega", "must lie in [0, 1]");
    if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma", "must lie in (0, 1]");
    if (!(lambda > 0.0 && lambda < 1.0)) fail("lambda", "must lie in (0, 1)");
    if (!(policy_lr > 0.0)) fail("policy_lr", "must be positive");
    if (!(value_lr > 0.0)) fail("value_lr", "must be positive");
    if (n_levels == 0) fail("n_levels", "must be positive");
    if (embed == 0) fail("embed", "must be positive");
    if (hidden == 0) fail("hidden", "must be positive");
    if (!(policy_init_scale > 0.0)) fail("policy_init_scale", "must be positive");
    try {
        soft.validate();
    } catch (const std::invalid_argument& e) {
        fail("soft", e.what());
    }
}

std::uint64_t trajectory_seed(std::uint64_t seed, std::size_t iter, std::size_t index) {
    return Rng::mix(Rng::mix(Rng::mix(seed) + iter) + index);
}

// ---------------------------------------------------------------------------

std::vector<double> cvar_pg_weights(const std::vector<Trajectory>& batch, double alpha) {
    if (batch.size() < 2) throw std::invalid_argument("cvar policy gradient needs at least 2 trajectories");
    std::vector<double> returns;
    returns.reserve(batch.size());
    for (const auto& t : batch) returns.push_back(t.total_return);
    const double q = empirical_var(returns, alpha);
    const double scale = 1.0 / (alpha * static_cast<double>(batch.size()));
    std::vector<double> w(batch.size(), 0.0);
    for (std::size_t i = 0; i < batch.size(); ++i)
        if (returns[i] <= q) w[i] = scale * (returns[i] - q);
    return w;
}

void add_cvar_pg_scores(const std::vector<Trajectory>& batch, double alpha, LogitGradient& out) {
    const auto w = cvar_pg_weights(batch, alpha);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (w[i] == 0.0) continue;
        for (const auto& st : batch[i].steps) out.add_score(st.state, std::nullopt, st.action, w[i]);
    }
}

GradAccumulator cvar_pg_gradient(const std::vector<Trajectory>& batch, const PolicyModel& policy,
                                 double alpha) {
    if (policy.uses_level()) throw std::invalid_argument("cvar policy gradient needs a Markovian policy");
    const auto snap = PolicySnapshot::of(policy);
    LogitGradient g(snap);
    add_cvar_pg_scores(batch, alpha, g);
    GradAccumulator acc(policy.parameter_count());
    g.flush(policy, acc);
    return acc;
}

std::vector<AdvantageEstimate> markovian_var_advantages(const Trajectory& traj, const ValueTable& v,
                                                        const QuantileGrid& grid, double lambda,
                                                        LossKind loss, const SoftLossParams& params,
                                                        bool keep_components, Rng* level_rng) {
    if (!traj.tracked()) throw std::invalid_argument("untracked trajectory");
    const std::size_t T = traj.size();
    const std::size_t I = grid.size();
    const double gamma = traj.gamma;
    std::vector<AdvantageEstimate> out(T);
    for (std::size_t t = 0; t < T; ++t) {
        const auto& st = traj.steps[t];
        const std::size_t li = *st.risk_level;
        const double alpha = grid.level(li);
        const double base = v.at(st.state, li);
        double partial = 0.0;  // r_t + ... + gamma^(iota-1) r_{t+iota-1}
        double disc = 1.0;     // gamma^iota after the update below
        double w = 1.0 - lambda;
        double wsum = 0.0, acc = 0.0;
        if (keep_components) out[t].components.reserve(T - t);
        for (std::size_t iota = 1; t + iota <= T; ++iota) {
            partial += disc * traj.steps[t + iota - 1].reward;
            disc *= gamma;
            const bool inside = t + iota < T;
            const auto row = inside ? v.row(traj.steps[t + iota].state) : std::span<const double>();
            double a_iota;
            if (!inside) {
                a_iota = loss_grad(loss, partial - base, alpha, params);
            } else if (level_rng) {
                const std::size_t j = static_cast<std::size_t>(level_rng->uniform() * static_cast<double>(I));
                a_iota = loss_grad(loss, partial + disc * row[std::min(j, I - 1)] - base, alpha, params);
            } else if (loss == LossKind::hard) {
                const auto it = std::partition_point(row.begin(), row.end(), [&](double x) {
                    return partial + disc * x - base < 0.0;
                });
                const double below = static_cast<double>(it - row.begin()) / static_cast<double>(I);
                a_iota = alpha - below;
            } else {
                double s = 0.0;
                for (double x : row) s += soft_loss_grad(partial + disc * x - base, alpha, params);
                a_iota = s / static_cast<double>(I);
            }
            if (keep_components) out[t].components.push_back(a_iota);
            acc += w * a_iota;
            wsum += w;
            w *= lambda;
        }
        out[t].value = wsum > 0.0 ? acc / wsum : 0.0;
    }
    return out;
}

std::vector<std::vector<WeightedTarget>> multistep_quantile_targets(const Trajectory& traj,
                                                                    const ValueTable& v,
                                                                    const QuantileGrid& grid,
                                                                    double lambda) {
    const std::size_t T = traj.size(), I = grid.size();
    std::vector<std::vector<WeightedTarget>> out(T);
    for (std::size_t t = 0; t < T; ++t) {
        double wsum = 0.0, w = lambda;
        for (std::size_t iota = 1; t + iota <= T; ++iota, w *= lambda) wsum += w;
        double partial = 0.0, disc = 1.0;
        w = lambda;
        for (std::size_t iota = 1; t + iota <= T; ++iota, w *= lambda) {
            partial += disc * traj.steps[t + iota - 1].reward;
            disc *= traj.gamma;
            const bool inside = t + iota < T;
            for (std::size_t j = 0; j < I; ++j) {
                const double boot = inside ? v.at(traj.steps[t + iota].state, j) : 0.0;
                out[t].push_back({partial + disc * boot, w / wsum / static_cast<double>(I)});
            }
        }
    }
    return out;
}

std::vector<std::vector<double>> multistep_value_gradients(const Trajectory& traj, const ValueTable& v,
                                                           const QuantileGrid& grid, double lambda) {
    const std::size_t T = traj.size(), I = grid.size();
    std::vector<std::vector<double>> out(T, std::vector<double>(I, 0.0));
    std::vector<double> below(I);
    for (std::size_t t = 0; t < T; ++t) {
        const auto pred = v.row(traj.steps[t].state);
        double wsum = 0.0, w = lambda;
        for (std::size_t iota = 1; t + iota <= T; ++iota, w *= lambda) wsum += w;
        std::fill(below.begin(), below.end(), 0.0);
        double partial = 0.0, disc = 1.0;
        w = lambda;
        for (std::size_t iota = 1; t + iota <= T; ++iota, w *= lambda) {
            partial += disc * traj.steps[t + iota - 1].reward;
            disc *= traj.gamma;
            const double wi = w / wsum;
            if (t + iota == T) {
                for (std::size_t i = 0; i < I; ++i)
                    if (partial < pred[i]) below[i] += wi;
                continue;
            }
            const auto row = v.row(traj.steps[t + iota].state);
            // Both rows are nondecreasing: sweep a pointer over the targets.
            std::size_t j = 0;
            for (std::size_t i = 0; i < I; ++i) {
                while (j < I && partial + disc * row[j] < pred[i]) ++j;
                below[i] += wi * static_cast<double>(j) / static_cast<double>(I);
            }
        }
        for (std::size_t i = 0; i < I; ++i) out[t][i] = -(grid.level(i) - below[i]);
    }
    return out;
}

std::vector<double> retcap_reshape(const Trajectory& traj, double cap) {
    if (traj.gamma != 1.0) throw std::invalid_argument("return capping requires gamma = 1");
    std::vector<double> out(traj.size());
    double k = 0.0;
    for (std::size_t t = 0; t < traj.size(); ++t) {
        const double next = k + traj.steps[t].reward;
        out[t] = std::isinf(cap) && cap > 0 ? traj.steps[t].reward : std::min(next, cap) - std::min(k, cap);
        k = next;
    }
    return out;
}

double var_advantage(const TabularMDP& mdp, const ValueTable& v, const QuantileGrid& grid, StateId s,
                     std::size_t level, ActionId a, LossKind loss, const SoftLossParams& params) {
    const double alpha = grid.level(level);
    const double base = v.at(s, level);
    const std::size_t I = grid.size();
    double acc = 0.0;
    for (const auto& r : mdp.rewards(s, a))
        for (const auto& o : mdp.transitions(s, a)) {
            const double p = r.prob * o.prob;
            if (p == 0.0) continue;
            double g = 0.0;
            for (std::size_t j = 0; j < I; ++j) {
                const double boot = mdp.is_terminal(o.next) ? 0.0 : v.at(o.next, j);
                g += loss_grad(loss, r.value + mdp.gamma() * boot - base, alpha, params);
            }
            acc += p * g / static_cast<double>(I);
        }
    return acc;
}

void var_actor_critic_step(const TabularMDP& mdp, TabularQuantileValue& v, PolicyModel& pi_hat,
                           const SoftLossParams& params, double policy_lr, Rng& rng, LossKind loss) {
    if (pi_hat.kind() != PolicyKind::tabular_state_level)
        throw std::invalid_argument("actor-critic needs a level-indexed tabular policy");
    const QuantileGrid& grid = v.grid();
    const std::size_t I = grid.size(), A = mdp.n_actions();
    if (pi_hat.n_levels() != I || pi_hat.n_states() != mdp.n_states() || pi_hat.n_actions() != A)
        throw std::invalid_argument("actor-critic: policy does not match the value function");
    const ValueTable vt = v.snapshot();
    std::vector<double> row(I);
    std::vector<double> adv(A);
    auto params_out = pi_hat.parameters();
    std::vector<double> new_logits(params_out.begin(), params_out.end());
    for (StateId s = 0; s < mdp.n_states(); ++s) {
        if (mdp.is_terminal(s)) continue;
        for (std::size_t i = 0; i < I; ++i) {
            const auto probs = pi_hat.action_distribution(s, i);
            double expected = 0.0;
            for (ActionId a = 0; a < A; ++a) {
                adv[a] = var_advantage(mdp, vt, grid, s, i, a, loss, params);
                expected += probs[a] * adv[a];
            }
            row[i] = vt.at(s, i) + params.eta * expected;
            const ActionId a = rng.categorical(probs);
            const std::size_t base = (s * I + i) * A;
            for (ActionId b = 0; b < A; ++b)
                new_logits[base + b] += policy_lr * adv[a] * ((b == a ? 1.0 : 0.0) - probs[b]);
        }
        std::sort(row.begin(), row.end());
        v.set_row(s, row);
    }
    std::copy(new_logits.begin(), new_logits.end(), params_out.begin());
}

// ---------------------------------------------------------------------------
// Training loops

namespace {

using Clock = std::chrono::steady_clock;

TabularMDP with_gamma(const TabularMDP& mdp, double gamma) {
    TabularMDP m = mdp;
    m.set_gamma(gamma);
    return m;
}

std::vector<bool> terminal_mask(const TabularMDP& mdp) {
    std::vector<bool> t(mdp.n_states());
    for (StateId s = 0; s < mdp.n_states(); ++s) t[s] = mdp.is_terminal(s);
    return t;
}

PolicyModel make_markov_policy(const TabularMDP& mdp, const TrainConfig& cfg) {
    PolicyModel::Options opt;
    opt.embed = cfg.embed;
    opt.hidden = cfg.hidden;
    opt.output_scale = cfg.policy_init_scale;
    opt.seed = Rng::mix(cfg.seed ^ 0x706f6c6963790000ULL);
    const auto kind = cfg.policy_repr == Representation::network ? PolicyKind::network_state
                                                                 : PolicyKind::tabular_state;
    PolicyModel p(kind, mdp.n_states(), mdp.n_actions(), opt);
    p.enable_adam(true);
    return p;
}

std::unique_ptr<QuantileValueFn> make_value(const TabularMDP& mdp, const TrainConfig& cfg,
                                            const QuantileGrid& grid) {
    if (cfg.value_repr == Representation::tabular)
        return std::make_unique<TabularQuantileValue>(grid, terminal_mask(mdp));
    return std::make_unique<MonotoneQuantileNetwork>(grid, terminal_mask(mdp), cfg.embed, cfg.hidden,
                                                     Rng::mix(cfg.seed ^ 0x76616c7565000000ULL));
}

void check_finite(std::span<const double> p, const char* what, std::size_t iter) {
    for (double x : p)
        if (!std::isfinite(x))
            throw std::runtime_error(std::string("diverged: non-finite ") + what + " at iteration " +
                                     std::to_string(iter));
}

IterationLog summarize(const std::vector<Trajectory>& batch, std::size_t iter, double alpha, double omega) {
    IterationLog row;
    row.iter = iter;
    row.omega = omega;
    std::vector<double> returns;
    double flags = 0.0;
    for (const auto& t : batch) {
        returns.push_back(t.total_return);
        flags += t.risk_event_flag ? 1.0 : 0.0;
    }
    row.mean_return = std::accumulate(returns.begin(), returns.end(), 0.0) / static_cast<double>(returns.size());
    row.cvar_alpha = empirical_cvar(returns, alpha);
    row.risk_event_rate = flags / static_cast<double>(batch.size());
    return row;
}

std::vector<Trajectory> sample_batch(const TabularMDP& mdp, const PolicySnapshot& snap, const TrainConfig& cfg,
                                     std::size_t iter, const ValueTable* values, const QuantileGrid* grid) {
    std::vector<Trajectory> batch;
    batch.reserve(cfg.n_trajectories);
    for (std::size_t i = 0; i < cfg.n_trajectories; ++i) {
        Rng rng(trajectory_seed(cfg.seed, iter, i));
        if (values) {
            const double a = rng.uniform() * cfg.alpha0;
            LevelTracking tracking{values, project_level(a, *grid)};
            batch.push_back(rollout(mdp, snap, rng, &tracking));
        } else {
            batch.push_back(rollout(mdp, snap, rng));
        }
    }
    return batch;
}

void normalize(std::vector<double>& xs) {
    if (xs.size() < 2) return;
    const double n = static_cast<double>(xs.size());
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / n);
    for (double& x : xs) x = (x - mean) / (sd + 1e-8);
}

double elapsed_ms(const TrainConfig& cfg, Clock::time_point start) {
    if (!cfg.timing) return 0.0;
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

} // namespace

GradAccumulator cvar_var_policy_gradient(const std::vector<Trajectory>& batch, const PolicyModel& policy,
                                         const ValueTable& v, const QuantileGrid& grid, const TrainConfig& cfg,
                                         double omega, Rng* level_rng) {
    if (policy.uses_level()) throw std::invalid_argument("cvar-var policy gradient needs a Markovian policy");
    const auto snap = PolicySnapshot::of(policy);
    LogitGradient g1(snap), g2(snap), total(snap);
    if (omega > 0.0) add_cvar_pg_scores(batch, cfg.alpha0, g1);
    if (omega < 1.0) {
        std::vector<double> flat;
        for (const auto& traj : batch)
            for (const auto& a : markovian_var_advantages(traj, v, grid, cfg.lambda, cfg.loss, cfg.soft, false,
                                                          cfg.sample_level ? level_rng : nullptr))
                flat.push_back(a.value);
        if (cfg.normalize_advantage) normalize(flat);
        const double inv_n = 1.0 / static_cast<double>(batch.size());
        std::size_t k = 0;
        for (const auto& traj : batch)
            for (const auto& st : traj.steps) g2.add_score(st.state, std::nullopt, st.action, flat[k++] * inv_n);
    }
    total.add(g1, omega);
    total.add(g2, 1.0 - omega);
    GradAccumulator acc(policy.parameter_count());
    total.flush(policy, acc);
    return acc;
}

TrainLog cvar_var_train(const TabularMDP& base, const TrainConfig& cfg) {
    cfg.validate();
    const TabularMDP mdp = with_gamma(base, cfg.gamma);
    const QuantileGrid grid(cfg.n_levels);
    PolicyModel policy = make_markov_policy(mdp, cfg);
    auto value = make_value(mdp, cfg, grid);
    TrainLog log{Algorithm::cvar_var, {}, {}};
    std::vector<double> d_value(mdp.n_states() * grid.size());
    std::vector<bool> touched(mdp.n_states());
    for (std::size_t m = 0; m < cfg.n_iterations; ++m) {
        const auto start = Clock::now();
        const auto snap = PolicySnapshot::of(policy);
        ValueTable vt = value->snapshot();
        const auto batch = sample_batch(mdp, snap, cfg, m, &vt, &grid);
        const double omega = cfg.omega_schedule.at(cfg.omega, m, cfg.n_iterations);

        Rng level_rng(trajectory_seed(cfg.seed ^ 0x6c6576656cULL, m, 0));
        GradAccumulator acc = cvar_var_policy_gradient(batch, policy, vt, grid, cfg, omega, &level_rng);
        apply_gradient(policy, acc, cfg.policy_lr);
        check_finite(policy.parameters(), "policy parameters", m);

        // Weighted multi-step quantile regression, one optimizer step per trajectory.
        const std::size_t I = grid.size();
        for (const auto& traj : batch) {
            if (traj.size() == 0) continue;
            const auto grads = multistep_value_gradients(traj, vt, grid, cfg.lambda);
            std::fill(d_value.begin(), d_value.end(), 0.0);
            std::fill(touched.begin(), touched.end(), false);
            const double inv_t = 1.0 / static_cast<double>(traj.size());
            for (std::size_t t = 0; t < traj.size(); ++t) {
                const StateId s = traj.steps[t].state;
                touched[s] = true;
                for (std::size_t i = 0; i < I; ++i) d_value[s * I + i] += grads[t][i] * inv_t;
            }
            for (StateId s = 0; s < mdp.n_states(); ++s)
                if (touched[s]) value->accumulate_gradient(s, std::span<const double>(d_value).subspan(s * I, I));
            value->apply_gradient(cfg.value_lr);
            vt = value->snapshot();
        }
        check_finite(value->parameters(), "value parameters", m);

        auto row = summarize(batch, m, cfg.alpha0, omega);
        row.wall_ms = elapsed_ms(cfg, start);
        log.rows.push_back(row);
    }
    log.final_policy = PolicySnapshot::of(policy);
    return log;
}

TrainLog cvar_pg_train(const TabularMDP& base, const TrainConfig& cfg) {
    cfg.validate();
    const TabularMDP mdp = with_gamma(base, cfg.gamma);
    PolicyModel policy = make_markov_policy(mdp, cfg);
    TrainLog log{Algorithm::cvar_pg, {}, {}};
    GradAccumulator acc(policy.parameter_count());
    for (std::size_t m = 0; m < cfg.n_iterations; ++m) {
        const auto start = Clock::now();
        const auto snap = PolicySnapshot::of(policy);
        const auto batch = sample_batch(mdp, snap, cfg, m, nullptr, nullptr);
        LogitGradient g(snap);
        add_cvar_pg_scores(batch, cfg.alpha0, g);
        g.flush(policy, acc);
        apply_gradient(policy, acc, cfg.policy_lr);
        check_finite(policy.parameters(), "policy parameters", m);
        auto row = summarize(batch, m, cfg.alpha0, 1.0);
        row.wall_ms = elapsed_ms(cfg, start);
        log.rows.push_back(row);
    }
    log.final_policy = PolicySnapshot::of(policy);
    return log;
}

namespace {

// Scalar state-value network trained by squared error, shared by the
// risk-neutral baselines.
class Baseline {
  public:
    Baseline(const TabularMDP& mdp, const TrainConfig& cfg) {
        shape_.n_inputs = mdp.n_states();
        shape_.embed = cfg.embed;
        shape_.hidden = cfg.hidden;
        shape_.outputs = 1;
        params_ = mlp_init(shape_, Rng::mix(cfg.seed ^ 0x62617365ULL));
        grad_.assign(params_.size(), 0.0);
        adam_.resize(params_.size());
        terminal_ = terminal_mask(mdp);
    }

    std::vector<double> table() const {
        std::vector<double> out(terminal_.size(), 0.0);
        MlpCache c;
        for (StateId s = 0; s < out.size(); ++s) {
            if (terminal_[s]) continue;
            mlp_forward(shape_, params_, s, c);
            out[s] = c.out[0];
        }
        return out;
    }

    /// Adds d/dparams of 0.5 * weight * (V(s) - target)^2.
    void add(StateId s, double target, double weight) {
        if (terminal_[s]) return;
        MlpCache c;
        mlp_forward(shape_, params_, s, c);
        const double d = weight * (c.out[0] - target);
        mlp_backward(shape_, params_, c, std::span<const double>(&d, 1), grad_);
    }

    void step(double lr) {
        adam_.step(params_, grad_, lr, false);
        std::fill(grad_.begin(), grad_.end(), 0.0);
    }

    std::span<const double> parameters() const { return params_; }

  private:
    MlpShape shape_;
    std::vector<double> params_, grad_;
    std::vector<bool> terminal_;
    Adam adam_;
};

struct AdvantageBatch {
    std::vector<double> advantages; // flattened over the batch
    std::vector<double> targets;    // value regression targets
};

TrainLog baseline_train(const TabularMDP& mdp, const TrainConfig& cfg, Algorithm algo) {
    PolicyModel policy = make_markov_policy(mdp, cfg);
    Baseline baseline(mdp, cfg);
    TrainLog log{algo, {}, {}};
    GradAccumulator acc(policy.parameter_count());
    for (std::size_t m = 0; m < cfg.n_iterations; ++m) {
        const auto start = Clock::now();
        const auto snap = PolicySnapshot::of(policy);
        const auto batch = sample_batch(mdp, snap, cfg, m, nullptr, nullptr);
        const auto v = baseline.table();
        AdvantageBatch ab;
        std::size_t n_steps = 0;
        for (const auto& traj : batch) {
            const std::size_t T = traj.size();
            n_steps += T;
            std::vector<double> rewards(T);
            for (std::size_t t = 0; t < T; ++t) rewards[t] = traj.steps[t].reward;
            if (algo == Algorithm::retcap) rewards = retcap_reshape(traj, cfg.retcap_cap);
            std::vector<double> adv(T), target(T);
            if (algo == Algorithm::reinforce) {
                double g = 0.0;
                for (std::size_t t = T; t-- > 0;) {
                    g = rewards[t] + traj.gamma * g;
                    target[t] = g;
                    adv[t] = g - v[traj.steps[t].state];
                }
            } else {
                // GAE(lambda); the episode end (goal or time limit) has value 0.
                double gae = 0.0;
                for (std::size_t t = T; t-- > 0;) {
                    const double next_v = t + 1 < T ? v[traj.steps[t + 1].state] : 0.0;
                    const double delta = rewards[t] + traj.gamma * next_v - v[traj.steps[t].state];
                    gae = delta + traj.gamma * cfg.lambda * gae;
                    adv[t] = gae;
                    target[t] = gae + v[traj.steps[t].state];
                }
            }
            ab.advantages.insert(ab.advantages.end(), adv.begin(), adv.end());
            ab.targets.insert(ab.targets.end(), target.begin(), target.end());
        }
        if (cfg.normalize_advantage) normalize(ab.advantages);
        LogitGradient g(snap);
        const double inv_n = 1.0 / static_cast<double>(batch.size());
        std::size_t k = 0;
        for (const auto& traj : batch)
            for (const auto& st : traj.steps) {
                g.add_score(st.state, std::nullopt, st.action, ab.advantages[k] * inv_n);
                baseline.add(st.state, ab.targets[k], 1.0 / static_cast<double>(std::max<std::size_t>(n_steps, 1)));
                ++k;
            }
        g.flush(policy, acc);
        apply_gradient(policy, acc, cfg.policy_lr);
        baseline.step(cfg.value_lr);
        check_finite(policy.parameters(), "policy parameters", m);
        check_finite(baseline.parameters(), "baseline parameters", m);
        auto row = summarize(batch, m, cfg.alpha0, 0.0);
        row.wall_ms = elapsed_ms(cfg, start);
        log.rows.push_back(row);
    }
    log.final_policy = PolicySnapshot::of(policy);
    return log;
}

} // namespace

TrainLog reinforce_baseline_train(const TabularMDP& base, const TrainConfig& cfg) {
    cfg.validate();
    return baseline_train(with_gamma(base, cfg.gamma), cfg, Algorithm::reinforce);
}

TrainLog retcap_train(const TabularMDP& base, const TrainConfig& cfg) {
    cfg.validate();
    if (cfg.gamma != 1.0) throw std::invalid_argument("gamma: return capping requires gamma = 1");
    return baseline_train(with_gamma(base, 1.0), cfg, Algorithm::retcap);
}

TrainLog var_ac_train(const TabularMDP& base, const TrainConfig& cfg) {
    cfg.validate();
    const TabularMDP mdp = with_gamma(base, cfg.gamma);
    if (!mdp.is_exact()) throw std::invalid_argument("var_ac needs an environment with discrete rewards");
    const QuantileGrid grid(cfg.n_levels);
    TabularQuantileValue v(grid, terminal_mask(mdp));
    PolicyModel::Options opt;
    opt.n_levels = grid.size();
    PolicyModel pi_hat(PolicyKind::tabular_state_level, mdp.n_states(), mdp.n_actions(), opt);
    Rng rng(Rng::mix(cfg.seed ^ 0x6163ULL));
    TrainLog log{Algorithm::var_ac, {}, {}};
    for (std::size_t m = 0; m < cfg.n_iterations; ++m) {
        const auto start = Clock::now();
        var_actor_critic_step(mdp, v, pi_hat, cfg.soft, cfg.policy_lr, rng, cfg.loss);
        check_finite(v.parameters(), "value parameters", m);
        check_finite(pi_hat.parameters(), "policy parameters", m);
        const auto snap = PolicySnapshot::of(pi_hat);
        const ValueTable vt = v.snapshot();
        const auto batch = sample_batch(mdp, snap, cfg, m, &vt, &grid);
        auto row = summarize(batch, m, cfg.alpha0, 0.0);
        row.wall_ms = elapsed_ms(cfg, start);
        log.rows.push_back(row);
    }
    log.final_policy = PolicySnapshot::of(pi_hat);
    return log;
}

TrainLog train(const TabularMDP& mdp, const TrainConfig& cfg, Algorithm algorithm) {
    switch (algorithm) {
    case Algorithm::cvar_pg: return cvar_pg_train(mdp, cfg);
    case Algorithm::cvar_var: return cvar_var_train(mdp, cfg);
    case Algorithm::var_ac: return var_ac_train(mdp, cfg);
    case Algorithm::reinforce: return reinforce_baseline_train(mdp, cfg);
    case Algorithm::retcap: return retcap_train(mdp, cfg);
    }
    throw std::invalid_argument("unknown algorithm");
}

} // namespace riskrl
