#pragma once

#include "riskrl/mdp.hpp"
#include "riskrl/nn.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace riskrl {

/// The I midpoint levels (2i - 1) / (2I), i = 1..I.
class QuantileGrid {
  public:
    explicit QuantileGrid(std::size_t n_levels = 10);

    std::size_t size() const { return levels_.size(); }
    double level(std::size_t i) const { return levels_[i]; }
    std::span<const double> levels() const { return levels_; }
    double spacing() const { return 1.0 / static_cast<double>(levels_.size()); }
    /// Levels lie in [1/(2I), 1 - 1/(2I)].
    double implied_epsilon() const { return 0.5 / static_cast<double>(levels_.size()); }

  private:
    std::vector<double> levels_;
};

/// Nearest grid index to `alpha`; ties go to the lower level.
std::size_t project_level(double alpha, const QuantileGrid& grid);

double softplus(double x);
double sigmoid(double x);

/// out[0] = raw[0]; out[i] = out[0] + sum_{j=1..i} softplus(raw[j]).
std::vector<double> monotone_head(std::span<const double> raw);

/// Dense snapshot of v(s, level) for every state, row-major by state.
struct ValueTable {
    std::size_t n_states = 0;
    std::size_t n_levels = 0;
    std::vector<double> data;

    std::span<const double> row(StateId s) const { return {data.data() + s * n_levels, n_levels}; }
    std::span<double> row(StateId s) { return {data.data() + s * n_levels, n_levels}; }
    double at(StateId s, std::size_t i) const { return data[s * n_levels + i]; }
};

/// State quantile value function v(s, alpha) on a grid. Rows are nondecreasing
/// in the level index and terminal states read as zero.
class QuantileValueFn {
  public:
    QuantileValueFn(QuantileGrid grid, std::vector<bool> terminal);
    virtual ~QuantileValueFn() = default;

    const QuantileGrid& grid() const { return grid_; }
    std::size_t n_states() const { return terminal_.size(); }
    bool is_terminal(StateId s) const { return terminal_[s]; }

    virtual void values(StateId s, std::span<double> out) const = 0;
    std::vector<double> values(StateId s) const;
    double value(StateId s, std::size_t level) const;
    ValueTable snapshot() const;

    /// Adds d(loss)/d(v(s, .)) to the pending gradient. Ignored for terminals.
    virtual void accumulate_gradient(StateId s, std::span<const double> d_values) = 0;
    /// Descends along the pending gradient and clears it.
    virtual void apply_gradient(double learning_rate) = 0;

    virtual std::span<double> parameters() = 0;
    virtual std::span<const double> parameters() const = 0;
    virtual std::unique_ptr<QuantileValueFn> clone() const = 0;

  protected:
    QuantileGrid grid_;
    std::vector<bool> terminal_;
};

/// Table of S x I values. After each update the touched rows are rearranged
/// (sorted) so monotonicity holds exactly.
class TabularQuantileValue final : public QuantileValueFn {
  public:
    TabularQuantileValue(QuantileGrid grid, std::vector<bool> terminal, double init = 0.0);

    using QuantileValueFn::values;
    void values(StateId s, std::span<double> out) const override;
    void set_row(StateId s, std::span<const double> row);
    void accumulate_gradient(StateId s, std::span<const double> d_values) override;
    void apply_gradient(double learning_rate) override;
    std::span<double> parameters() override { return table_; }
    std::span<const double> parameters() const override { return table_; }
    std::unique_ptr<QuantileValueFn> clone() const override;

    bool is_monotone() const;

  private:
    std::vector<double> table_;
    std::vector<double> pending_;
    std::vector<bool> touched_;
};

/// Network over state embeddings whose I outputs pass through monotone_head.
/// Updates use Adam.
class MonotoneQuantileNetwork final : public QuantileValueFn {
  public:
    MonotoneQuantileNetwork(QuantileGrid grid, std::vector<bool> terminal, std::size_t embed,
                            std::size_t hidden, std::uint64_t seed);

    using QuantileValueFn::values;
    void values(StateId s, std::span<double> out) const override;
    void accumulate_gradient(StateId s, std::span<const double> d_values) override;
    void apply_gradient(double learning_rate) override;
    std::span<double> parameters() override { return params_; }
    std::span<const double> parameters() const override { return params_; }
    std::unique_ptr<QuantileValueFn> clone() const override;

    const MlpShape& shape() const { return shape_; }
    /// d(values)/d(params) contracted with `d_values`, written (not added) to `grad`.
    void gradient(StateId s, std::span<const double> d_values, std::span<double> grad) const;

  private:
    MlpShape shape_;
    std::vector<double> params_;
    std::vector<double> pending_;
    Adam adam_;
};

/// Per-trajectory risk-level tracking state.
struct RiskTracker {
    std::size_t current_level = 0;
    double carried_target = 0.0;
    double gamma = 1.0;
};

/// Smallest index i with row[i] >= z (up to roundoff); the last index when
/// none qualifies.
std::size_t lowest_level_at_least(std::span<const double> row, double z);

/// z <- (v(prev_state, prev_level) - reward) / gamma, then the smallest grid
/// level whose value at next_state reaches z. Updates the tracker.
std::size_t track_level(RiskTracker& tracker, const ValueTable& v, StateId prev_state,
                        std::size_t prev_level, double reward, StateId next_state);
std::size_t track_level(RiskTracker& tracker, const QuantileValueFn& v, StateId prev_state,
                        std::size_t prev_level, double reward, StateId next_state);

/// Mean of v(state, .) over the grid: the expectation over a uniform level.
double level_expectation(const QuantileValueFn& v, StateId state);

struct WeightedTarget {
    double value = 0.0;
    double weight = 1.0;
};

/// d(loss)/d(v(state, .)) for the per-level pinball losses against weighted
/// targets (weights are normalized to sum 1):
///   grad_i = -sum_k w_k (alpha_i - 1{t_k < v_i}).
std::vector<double> quantile_regression_gradient(std::span<const double> row,
                                                 const QuantileGrid& grid,
                                                 std::span<const WeightedTarget> targets);

/// One step of quantile regression of v(state, .) toward the targets.
void quantile_regression_update(QuantileValueFn& v, StateId state, std::span<const double> targets,
                                double learning_rate);
void quantile_regression_update(QuantileValueFn& v, StateId state,
                                std::span<const WeightedTarget> targets, double learning_rate);

/// Value snapshot as CSV lines "state,level,value".
std::string value_snapshot_csv(const ValueTable& table, const QuantileGrid& grid);

} // namespace riskrl
