#include "riskrl/mdp.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace riskrl {

namespace {

// Probability conservation and ranges of one (s, a) model.
void check_model(std::size_t n_states, StateId s, ActionId a, const std::vector<Outcome>& next,
                 const std::vector<RewardAtom>& rew) {
    constexpr double tol = 1e-12;
    if (next.empty() || rew.empty())
        throw std::invalid_argument("mdp: missing model for state " + std::to_string(s) + ", action " +
                                    std::to_string(a));
    double pt = 0.0;
    for (const auto& o : next) {
        if (o.next >= n_states) throw std::invalid_argument("mdp: successor out of range");
        if (!(o.prob >= 0.0)) throw std::invalid_argument("mdp: negative probability");
        pt += o.prob;
    }
    double pr = 0.0;
    for (const auto& r : rew) {
        if (!std::isfinite(r.value)) throw std::invalid_argument("mdp: non-finite reward");
        if (!(r.prob >= 0.0)) throw std::invalid_argument("mdp: negative probability");
        pr += r.prob;
    }
    if (std::abs(pt - 1.0) > tol || std::abs(pr - 1.0) > tol)
        throw std::invalid_argument("mdp: probabilities do not sum to 1 at state " + std::to_string(s) +
                                    ", action " + std::to_string(a));
}

} // namespace

TabularMDP::TabularMDP(std::size_t n_states, std::size_t n_actions, double gamma,
                       std::size_t horizon)
    : n_states_(n_states), n_actions_(n_actions), gamma_(gamma), horizon_(horizon),
      transitions_(n_states * n_actions), rewards_(n_states * n_actions),
      continuous_(n_states * n_actions), terminal_(n_states, false), risk_(n_states, false) {
    if (n_states == 0 || n_actions == 0)
        throw std::invalid_argument("mdp: state and action counts must be positive");
    set_gamma(gamma);
    set_horizon(horizon);
}

bool TabularMDP::has_terminal_states() const {
    for (bool t : terminal_)
        if (t) return true;
    return false;
}

bool TabularMDP::is_exact() const {
    for (const auto& c : continuous_)
        if (c) return false;
    return true;
}

void TabularMDP::set(StateId s, ActionId a, std::vector<Outcome> next,
                     std::vector<RewardAtom> reward) {
    if (s >= n_states_ || a >= n_actions_) throw std::out_of_range("mdp: (state, action) out of range");
    check_model(n_states_, s, a, next, reward);
    transitions_[index(s, a)] = std::move(next);
    rewards_[index(s, a)] = std::move(reward);
}

void TabularMDP::set_continuous_reward(StateId s, ActionId a, GaussianReward g) {
    if (s >= n_states_ || a >= n_actions_) throw std::out_of_range("mdp: (state, action) out of range");
    continuous_[index(s, a)] = g;
}

void TabularMDP::make_terminal(StateId s) {
    terminal_.at(s) = true;
    for (ActionId a = 0; a < n_actions_; ++a) {
        transitions_[index(s, a)] = {{s, 1.0}};
        rewards_[index(s, a)] = {{0.0, 1.0}};
        continuous_[index(s, a)].reset();
    }
}

void TabularMDP::set_initial_state(StateId s) {
    if (s >= n_states_) throw std::out_of_range("mdp: initial state out of range");
    initial_state_ = s;
}

void TabularMDP::set_gamma(double gamma) {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("mdp: gamma must lie in (0, 1]");
    gamma_ = gamma;
}

void TabularMDP::set_horizon(std::size_t horizon) {
    if (horizon == 0) throw std::invalid_argument("mdp: horizon must be positive");
    horizon_ = horizon;
}

void TabularMDP::validate() const {
    for (StateId s = 0; s < n_states_; ++s) {
        for (ActionId a = 0; a < n_actions_; ++a) {
            const auto& next = transitions_[index(s, a)];
            const auto& rew = rewards_[index(s, a)];
            check_model(n_states_, s, a, next, rew);
            if (terminal_[s]) {
                if (next.size() != 1 || next[0].next != s || rew.size() != 1 || rew[0].value != 0.0)
                    throw std::invalid_argument("mdp: terminal state must self-loop with reward 0");
            }
        }
    }
}

TabularMDP::Step TabularMDP::sample(StateId s, ActionId a, Rng& rng) const {
    const auto& next = transitions_[index(s, a)];
    const auto& rew = rewards_[index(s, a)];
    Step step;
    // Reward first, then successor: keeps the stream layout independent of
    // whether a state has one or many successors.
    if (const auto& g = continuous_[index(s, a)]) {
        step.reward = g->mean + g->stddev * rng.normal();
    } else if (rew.size() == 1) {
        step.reward = rew[0].value;
    } else {
        double u = rng.uniform();
        std::size_t pick = rew.size() - 1;
        for (std::size_t i = 0; i < rew.size(); ++i) {
            if (u < rew[i].prob) {
                pick = i;
                break;
            }
            u -= rew[i].prob;
        }
        step.reward = rew[pick].value;
    }
    if (next.size() == 1) {
        step.next = next[0].next;
    } else {
        double u = rng.uniform();
        std::size_t pick = next.size() - 1;
        for (std::size_t i = 0; i < next.size(); ++i) {
            if (u < next[i].prob) {
                pick = i;
                break;
            }
            u -= next[i].prob;
        }
        step.next = next[pick].next;
    }
    return step;
}

double TabularMDP::mean_reward(StateId s, ActionId a) const {
    if (const auto& g = continuous_[index(s, a)]) return g->mean;
    double m = 0.0;
    for (const auto& r : rewards_[index(s, a)]) m += r.prob * r.value;
    return m;
}

bool Trajectory::tracked() const {
    for (const auto& st : steps)
        if (!st.risk_level) return false;
    return true;
}

} // namespace riskrl
