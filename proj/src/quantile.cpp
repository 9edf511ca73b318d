#include "riskrl/quantile.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace riskrl {

QuantileGrid::QuantileGrid(std::size_t n_levels) {
    if (n_levels == 0) throw std::invalid_argument("quantile grid needs at least one level");
    levels_.resize(n_levels);
    const double n = static_cast<double>(n_levels);
    for (std::size_t i = 0; i < n_levels; ++i)
        levels_[i] = (2.0 * static_cast<double>(i) + 1.0) / (2.0 * n);
}

std::size_t project_level(double alpha, const QuantileGrid& grid) {
    // Level i covers [i/I, (i+1)/I); a boundary point belongs to the lower cell.
    const double scaled = alpha * static_cast<double>(grid.size());
    double cell = std::ceil(scaled) - 1.0;
    if (cell < 0.0) cell = 0.0;
    const auto i = static_cast<std::size_t>(cell);
    return std::min(i, grid.size() - 1);
}

double softplus(double x) {
    return x > 30.0 ? x : std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

std::vector<double> monotone_head(std::span<const double> raw) {
    if (raw.empty()) throw std::invalid_argument("monotone head needs at least one output");
    std::vector<double> out(raw.size());
    out[0] = raw[0];
    for (std::size_t i = 1; i < raw.size(); ++i) out[i] = out[i - 1] + softplus(raw[i]);
    return out;
}

// ---------------------------------------------------------------------------

QuantileValueFn::QuantileValueFn(QuantileGrid grid, std::vector<bool> terminal)
    : grid_(std::move(grid)), terminal_(std::move(terminal)) {
    if (terminal_.empty()) throw std::invalid_argument("value function needs at least one state");
}

std::vector<double> QuantileValueFn::values(StateId s) const {
    std::vector<double> out(grid_.size());
    values(s, out);
    return out;
}

double QuantileValueFn::value(StateId s, std::size_t level) const { return values(s).at(level); }

ValueTable QuantileValueFn::snapshot() const {
    ValueTable t;
    t.n_states = n_states();
    t.n_levels = grid_.size();
    t.data.assign(t.n_states * t.n_levels, 0.0);
    for (StateId s = 0; s < t.n_states; ++s) values(s, t.row(s));
    return t;
}

TabularQuantileValue::TabularQuantileValue(QuantileGrid grid, std::vector<bool> terminal,
                                           double init)
    : QuantileValueFn(std::move(grid), std::move(terminal)) {
    const std::size_t n = n_states() * grid_.size();
    table_.assign(n, init);
    pending_.assign(n, 0.0);
    touched_.assign(n_states(), false);
    for (StateId s = 0; s < n_states(); ++s)
        if (terminal_[s]) std::fill_n(table_.begin() + s * grid_.size(), grid_.size(), 0.0);
}

void TabularQuantileValue::values(StateId s, std::span<double> out) const {
    if (s >= n_states()) throw std::out_of_range("value function: state out of range");
    if (terminal_[s]) {
        std::fill(out.begin(), out.end(), 0.0);
        return;
    }
    std::copy_n(table_.begin() + s * grid_.size(), grid_.size(), out.begin());
}

void TabularQuantileValue::set_row(StateId s, std::span<const double> row) {
    if (row.size() != grid_.size()) throw std::invalid_argument("value row has wrong length");
    if (terminal_.at(s)) return;
    std::copy(row.begin(), row.end(), table_.begin() + s * grid_.size());
}

void TabularQuantileValue::accumulate_gradient(StateId s, std::span<const double> d) {
    if (d.size() != grid_.size()) throw std::invalid_argument("value gradient has wrong length");
    if (terminal_.at(s)) return;
    for (std::size_t i = 0; i < d.size(); ++i) pending_[s * grid_.size() + i] += d[i];
    touched_[s] = true;
}

void TabularQuantileValue::apply_gradient(double lr) {
    const std::size_t I = grid_.size();
    for (StateId s = 0; s < n_states(); ++s) {
        if (!touched_[s]) continue;
        auto row = std::span<double>(table_).subspan(s * I, I);
        for (std::size_t i = 0; i < I; ++i) {
            row[i] -= lr * pending_[s * I + i];
            pending_[s * I + i] = 0.0;
        }
        std::sort(row.begin(), row.end());
        touched_[s] = false;
    }
}

std::unique_ptr<QuantileValueFn> TabularQuantileValue::clone() const {
    return std::make_unique<TabularQuantileValue>(*this);
}

bool TabularQuantileValue::is_monotone() const {
    const std::size_t I = grid_.size();
    for (StateId s = 0; s < n_states(); ++s)
        for (std::size_t i = 1; i < I; ++i)
            if (table_[s * I + i] < table_[s * I + i - 1]) return false;
    return true;
}

MonotoneQuantileNetwork::MonotoneQuantileNetwork(QuantileGrid grid, std::vector<bool> terminal,
                                                 std::size_t embed, std::size_t hidden,
                                                 std::uint64_t seed)
    : QuantileValueFn(std::move(grid), std::move(terminal)) {
    shape_.n_inputs = n_states();
    shape_.embed = embed;
    shape_.hidden = hidden;
    shape_.outputs = grid_.size();
    params_ = mlp_init(shape_, seed);
    pending_.assign(params_.size(), 0.0);
    adam_.resize(params_.size());
}

void MonotoneQuantileNetwork::values(StateId s, std::span<double> out) const {
    if (s >= n_states()) throw std::out_of_range("value function: state out of range");
    if (terminal_[s]) {
        std::fill(out.begin(), out.end(), 0.0);
        return;
    }
    MlpCache cache;
    mlp_forward(shape_, params_, s, cache);
    const auto v = monotone_head(cache.out);
    std::copy(v.begin(), v.end(), out.begin());
}

void MonotoneQuantileNetwork::gradient(StateId s, std::span<const double> d_values,
                                       std::span<double> grad) const {
    std::fill(grad.begin(), grad.end(), 0.0);
    if (terminal_.at(s)) return;
    MlpCache cache;
    mlp_forward(shape_, params_, s, cache);
    const std::size_t I = grid_.size();
    // out_i = raw_0 + sum_{1 <= j <= i} softplus(raw_j)
    std::vector<double> d_raw(I, 0.0);
    double suffix = 0.0;
    for (std::size_t j = I; j-- > 0;) {
        suffix += d_values[j];
        d_raw[j] = (j == 0) ? suffix : suffix * sigmoid(cache.out[j]);
    }
    mlp_backward(shape_, params_, cache, d_raw, grad);
}

void MonotoneQuantileNetwork::accumulate_gradient(StateId s, std::span<const double> d_values) {
    if (d_values.size() != grid_.size()) throw std::invalid_argument("value gradient has wrong length");
    if (terminal_.at(s)) return;
    MlpCache cache;
    mlp_forward(shape_, params_, s, cache);
    const std::size_t I = grid_.size();
    std::vector<double> d_raw(I, 0.0);
    double suffix = 0.0;
    for (std::size_t j = I; j-- > 0;) {
        suffix += d_values[j];
        d_raw[j] = (j == 0) ? suffix : suffix * sigmoid(cache.out[j]);
    }
    mlp_backward(shape_, params_, cache, d_raw, pending_);
}

void MonotoneQuantileNetwork::apply_gradient(double lr) {
    adam_.step(params_, pending_, lr, /*ascent=*/false);
    std::fill(pending_.begin(), pending_.end(), 0.0);
}

std::unique_ptr<QuantileValueFn> MonotoneQuantileNetwork::clone() const {
    return std::make_unique<MonotoneQuantileNetwork>(*this);
}

// ---------------------------------------------------------------------------

std::size_t lowest_level_at_least(std::span<const double> row, double z) {
    // Roundoff guard: z is usually (v - r) / gamma of a value that was itself
    // built as r + gamma * v', so exact ties must not be lost to the last ulp.
    const double tol = 1e-9 * std::max(1.0, std::abs(z));
    for (std::size_t i = 0; i < row.size(); ++i)
        if (row[i] >= z - tol) return i;
    return row.size() - 1;
}

std::size_t track_level(RiskTracker& tracker, const ValueTable& v, StateId prev_state,
                        std::size_t prev_level, double reward, StateId next_state) {
    const double z = (v.at(prev_state, prev_level) - reward) / tracker.gamma;
    if (!std::isfinite(z)) throw std::runtime_error("diverged value");
    tracker.carried_target = z;
    tracker.current_level = lowest_level_at_least(v.row(next_state), z);
    return tracker.current_level;
}

std::size_t track_level(RiskTracker& tracker, const QuantileValueFn& v, StateId prev_state,
                        std::size_t prev_level, double reward, StateId next_state) {
    const double z = (v.value(prev_state, prev_level) - reward) / tracker.gamma;
    if (!std::isfinite(z)) throw std::runtime_error("diverged value");
    tracker.carried_target = z;
    tracker.current_level = lowest_level_at_least(v.values(next_state), z);
    return tracker.current_level;
}

double level_expectation(const QuantileValueFn& v, StateId state) {
    const auto row = v.values(state);
    double sum = 0.0;
    for (double x : row) sum += x;
    return sum / static_cast<double>(row.size());
}

std::vector<double> quantile_regression_gradient(std::span<const double> row,
                                                 const QuantileGrid& grid,
                                                 std::span<const WeightedTarget> targets) {
    double total = 0.0;
    for (const auto& t : targets) total += t.weight;
    std::vector<double> g(row.size(), 0.0);
    if (targets.empty() || total <= 0.0) return g;
    for (std::size_t i = 0; i < row.size(); ++i) {
        const double alpha = grid.level(i);
        double below = 0.0;
        for (const auto& t : targets)
            if (t.value < row[i]) below += t.weight;
        g[i] = -(alpha - below / total);
    }
    return g;
}

void quantile_regression_update(QuantileValueFn& v, StateId state,
                                std::span<const WeightedTarget> targets, double learning_rate) {
    if (targets.empty()) throw std::invalid_argument("quantile regression needs targets");
    if (learning_rate == 0.0) return;
    const auto row = v.values(state);
    const auto g = quantile_regression_gradient(row, v.grid(), targets);
    v.accumulate_gradient(state, g);
    v.apply_gradient(learning_rate);
}

void quantile_regression_update(QuantileValueFn& v, StateId state, std::span<const double> targets,
                                double learning_rate) {
    std::vector<WeightedTarget> w;
    w.reserve(targets.size());
    for (double t : targets) w.push_back({t, 1.0});
    quantile_regression_update(v, state, std::span<const WeightedTarget>(w), learning_rate);
}

std::string value_snapshot_csv(const ValueTable& table, const QuantileGrid& grid) {
    std::string out = "state,level,value\n";
    char buf[96];
    for (StateId s = 0; s < table.n_states; ++s)
        for (std::size_t i = 0; i < table.n_levels; ++i) {
            std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", s, grid.level(i), table.at(s, i));
            out += buf;
        }
    return out;
}

} // namespace riskrl
