#pragma once

#include "riskrl/mdp.hpp"
#include "riskrl/nn.hpp"
#include "riskrl/rng.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace riskrl {

enum class PolicyKind { tabular_state, tabular_state_level, network_state };

const char* to_string(PolicyKind kind);

/// Softmax action distribution over discrete actions. Tabular kinds keep one
/// logit block per state (or per state and grid level); the network kind maps
/// a state embedding through two tanh layers to logits.
class PolicyModel {
  public:
    struct Options {
        std::size_t n_levels = 0; // tabular_state_level only
        std::size_t embed = 16;   // network_state only
        std::size_t hidden = 64;
        std::uint64_t seed = 0;
        /// Output-layer scale for the network kind; small values start near uniform.
        double output_scale = 1.0;
    };

    PolicyModel() = default;
    PolicyModel(PolicyKind kind, std::size_t n_states, std::size_t n_actions, Options opt);

    PolicyKind kind() const { return kind_; }
    std::size_t n_states() const { return n_states_; }
    std::size_t n_actions() const { return n_actions_; }
    std::size_t n_levels() const { return n_levels_; }
    std::uint64_t seed() const { return seed_; }
    bool uses_level() const { return kind_ == PolicyKind::tabular_state_level; }
    const MlpShape& network_shape() const { return shape_; }

    std::span<double> parameters() { return params_; }
    std::span<const double> parameters() const { return params_; }
    std::size_t parameter_count() const { return params_.size(); }

    void logits(StateId s, std::optional<std::size_t> level, std::span<double> out) const;
    std::vector<double> action_distribution(StateId s, std::optional<std::size_t> level) const;

    /// d log pi(action | s, level) / d params, as a full-length vector.
    std::vector<double> log_prob_grad(StateId s, std::optional<std::size_t> level,
                                      ActionId action) const;

    /// grad += d/dparams of sum_a d_logits[a] * logit_a(s, level).
    void backprop_logits(StateId s, std::optional<std::size_t> level,
                         std::span<const double> d_logits, std::span<double> grad) const;

    ActionId sample(StateId s, std::optional<std::size_t> level, Rng& rng) const;
    /// Most probable action; ties go to the lowest id.
    ActionId greedy(StateId s, std::optional<std::size_t> level) const;

    void enable_adam(bool on);
    bool adam_enabled() const { return adam_on_; }
    Adam& optimizer() { return adam_; }

    void save(const std::string& path) const;
    static PolicyModel load(const std::string& path);

  private:
    void check_input(StateId s, std::optional<std::size_t> level) const;
    std::size_t block(StateId s, std::optional<std::size_t> level) const;

    PolicyKind kind_ = PolicyKind::tabular_state;
    std::size_t n_states_ = 0;
    std::size_t n_actions_ = 0;
    std::size_t n_levels_ = 0;
    std::uint64_t seed_ = 0;
    double output_scale_ = 1.0;
    MlpShape shape_;
    std::vector<double> params_;
    bool adam_on_ = false;
    Adam adam_;
};

/// Action probabilities of every (state, level) input, computed once so that a
/// batch of rollouts does not re-run the network per step.
struct PolicySnapshot {
    std::size_t n_states = 0;
    std::size_t n_levels = 1;
    std::size_t n_actions = 0;
    bool uses_level = false;
    std::vector<double> probs;

    static PolicySnapshot of(const PolicyModel& policy);

    std::span<const double> at(StateId s, std::optional<std::size_t> level) const;
    ActionId sample(StateId s, std::optional<std::size_t> level, Rng& rng) const;
};

struct GradAccumulator {
    std::vector<double> buffer;
    std::size_t sample_count = 0;

    GradAccumulator() = default;
    explicit GradAccumulator(std::size_t n) : buffer(n, 0.0) {}

    void add(std::span<const double> g, double scale = 1.0);
    void clear();
};

/// Per-input logit coefficients. Scoring many (state, action) pairs reduces to
/// d_logits[s] += c * (onehot(a) - pi(.|s)); the policy gradient is then one
/// backward pass per distinct input.
class LogitGradient {
  public:
    explicit LogitGradient(const PolicySnapshot& snap);

    /// Adds scale * d log pi(action | s, level) / d logits.
    void add_score(StateId s, std::optional<std::size_t> level, ActionId action, double scale);
    /// Writes the full parameter gradient into acc (buffer += ...).
    void flush(const PolicyModel& policy, GradAccumulator& acc) const;
    void scale(double c);
    void add(const LogitGradient& other, double c);
    std::span<const double> coefficients() const { return coef_; }

  private:
    const PolicySnapshot* snap_;
    std::vector<double> coef_;
    std::vector<bool> touched_;
};

/// params += lr * buffer / max(sample_count, 1) (gradient ascent), through Adam
/// when enabled on the policy. Clears the accumulator.
void apply_gradient(PolicyModel& policy, GradAccumulator& acc, double learning_rate);

/// Central differences per coordinate; returns the max over coordinates of
/// |fd - analytic| / max(1, |fd|, |analytic|).
double finite_difference_check(const std::function<double(std::span<const double>)>& f,
                               std::span<const double> x, std::span<const double> analytic,
                               double step);

} // namespace riskrl
