#pragma once

#include "riskrl/rng.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace riskrl {

using StateId = std::size_t;
using ActionId = std::size_t;

struct Outcome {
    StateId next = 0;
    double prob = 1.0;
};

struct RewardAtom {
    double value = 0.0;
    double prob = 1.0;
};

struct GaussianReward {
    double mean = 0.0;
    double stddev = 1.0;
};

/// Explicit finite MDP. Rewards depend on (state, action) only and are drawn
/// independently of the successor. The initial distribution is a point mass.
class TabularMDP {
  public:
    TabularMDP() = default;
    TabularMDP(std::size_t n_states, std::size_t n_actions, double gamma, std::size_t horizon);

    std::size_t n_states() const { return n_states_; }
    std::size_t n_actions() const { return n_actions_; }
    double gamma() const { return gamma_; }
    std::size_t horizon() const { return horizon_; }
    StateId initial_state() const { return initial_state_; }

    const std::vector<Outcome>& transitions(StateId s, ActionId a) const {
        return transitions_[index(s, a)];
    }
    const std::vector<RewardAtom>& rewards(StateId s, ActionId a) const {
        return rewards_[index(s, a)];
    }
    const std::optional<GaussianReward>& continuous_reward(StateId s, ActionId a) const {
        return continuous_[index(s, a)];
    }

    bool is_terminal(StateId s) const { return terminal_[s]; }
    bool is_risk_state(StateId s) const { return risk_[s]; }
    bool has_terminal_states() const;
    /// True when every reward is a finite discrete distribution, i.e. exact
    /// oracles apply.
    bool is_exact() const;

    void set(StateId s, ActionId a, std::vector<Outcome> next, std::vector<RewardAtom> reward);
    /// Replaces the discrete reward of (s, a) in simulation with a Gaussian draw.
    void set_continuous_reward(StateId s, ActionId a, GaussianReward g);
    /// Absorbing, zero reward under every action.
    void make_terminal(StateId s);
    void mark_risk_state(StateId s, bool flag = true) { risk_.at(s) = flag; }
    void set_initial_state(StateId s);
    void set_gamma(double gamma);
    void set_horizon(std::size_t horizon);

    /// Probability conservation for every (s, a), successor ids in range and
    /// terminal self-loops. Throws std::invalid_argument.
    void validate() const;

    struct Step {
        double reward = 0.0;
        StateId next = 0;
    };
    Step sample(StateId s, ActionId a, Rng& rng) const;

    double mean_reward(StateId s, ActionId a) const;

    std::string name;

  private:
    std::size_t index(StateId s, ActionId a) const { return s * n_actions_ + a; }

    std::size_t n_states_ = 0;
    std::size_t n_actions_ = 0;
    double gamma_ = 1.0;
    std::size_t horizon_ = 1;
    StateId initial_state_ = 0;
    std::vector<std::vector<Outcome>> transitions_;
    std::vector<std::vector<RewardAtom>> rewards_;
    std::vector<std::optional<GaussianReward>> continuous_;
    std::vector<bool> terminal_;
    std::vector<bool> risk_;
};

struct StepRecord {
    StateId state = 0;
    std::optional<std::size_t> risk_level; // grid index of alpha_t when tracked
    ActionId action = 0;
    double reward = 0.0;
    StateId next_state = 0;
    bool done = false;
    double cumulative_reward = 0.0; // k_t, discounted rewards before this step
};

struct Trajectory {
    std::vector<StepRecord> steps;
    double total_return = 0.0;
    double gamma = 1.0;
    bool visited_risk_state = false;
    bool reached_terminal = false;
    /// Risk event: a risk state was visited, or the episode hit the time limit
    /// in an MDP that has terminal states.
    bool risk_event_flag = false;

    std::size_t size() const { return steps.size(); }
    bool tracked() const;
};

} // namespace riskrl
