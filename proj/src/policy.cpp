#include "riskrl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace riskrl {

const char* to_string(PolicyKind kind) {
    switch (kind) {
    case PolicyKind::tabular_state: return "tabular_state";
    case PolicyKind::tabular_state_level: return "tabular_state_level";
    case PolicyKind::network_state: return "network_state";
    }
    return "?";
}

namespace {

void softmax_inplace(std::span<double> x) {
    const double m = *std::max_element(x.begin(), x.end());
    double z = 0.0;
    for (double& v : x) {
        v = std::exp(v - m);
        z += v;
    }
    for (double& v : x) v /= z;
}

} // namespace

PolicyModel::PolicyModel(PolicyKind kind, std::size_t n_states, std::size_t n_actions, Options opt)
    : kind_(kind), n_states_(n_states), n_actions_(n_actions), seed_(opt.seed),
      output_scale_(opt.output_scale) {
    if (n_states == 0 || n_actions == 0)
        throw std::invalid_argument("policy: state and action counts must be positive");
    switch (kind) {
    case PolicyKind::tabular_state:
        params_.assign(n_states * n_actions, 0.0);
        break;
    case PolicyKind::tabular_state_level:
        if (opt.n_levels == 0) throw std::invalid_argument("policy: level-indexed policy needs levels");
        n_levels_ = opt.n_levels;
        params_.assign(n_states * n_levels_ * n_actions, 0.0);
        break;
    case PolicyKind::network_state:
        shape_.n_inputs = n_states;
        shape_.embed = opt.embed;
        shape_.hidden = opt.hidden;
        shape_.outputs = n_actions;
        params_ = mlp_init(shape_, opt.seed, opt.output_scale);
        break;
    }
    adam_.resize(params_.size());
}

void PolicyModel::check_input(StateId s, std::optional<std::size_t> level) const {
    if (s >= n_states_) throw std::out_of_range("policy: state out of range");
    if (uses_level() != level.has_value())
        throw std::invalid_argument(uses_level() ? "policy: risk level required"
                                                 : "policy: unexpected risk level");
    if (level && *level >= n_levels_) throw std::out_of_range("policy: level out of range");
}

std::size_t PolicyModel::block(StateId s, std::optional<std::size_t> level) const {
    return uses_level() ? (s * n_levels_ + *level) * n_actions_ : s * n_actions_;
}

void PolicyModel::logits(StateId s, std::optional<std::size_t> level, std::span<double> out) const {
    check_input(s, level);
    if (kind_ == PolicyKind::network_state) {
        MlpCache cache;
        mlp_forward(shape_, params_, s, cache);
        std::copy(cache.out.begin(), cache.out.end(), out.begin());
        return;
    }
    std::copy_n(params_.begin() + block(s, level), n_actions_, out.begin());
}

std::vector<double> PolicyModel::action_distribution(StateId s,
                                                     std::optional<std::size_t> level) const {
    std::vector<double> p(n_actions_);
    logits(s, level, p);
    softmax_inplace(p);
    return p;
}

void PolicyModel::backprop_logits(StateId s, std::optional<std::size_t> level,
                                  std::span<const double> d_logits, std::span<double> grad) const {
    check_input(s, level);
    if (grad.size() != params_.size()) throw std::invalid_argument("policy: gradient size mismatch");
    if (kind_ == PolicyKind::network_state) {
        MlpCache cache;
        mlp_forward(shape_, params_, s, cache);
        mlp_backward(shape_, params_, cache, d_logits, grad);
        return;
    }
    const std::size_t b = block(s, level);
    for (std::size_t a = 0; a < n_actions_; ++a) grad[b + a] += d_logits[a];
}

std::vector<double> PolicyModel::log_prob_grad(StateId s, std::optional<std::size_t> level,
                                               ActionId action) const {
    if (action >= n_actions_) throw std::out_of_range("policy: action out of range");
    auto d = action_distribution(s, level);
    for (double& x : d) x = -x;
    d[action] += 1.0;
    std::vector<double> g(params_.size(), 0.0);
    backprop_logits(s, level, d, g);
    return g;
}

ActionId PolicyModel::sample(StateId s, std::optional<std::size_t> level, Rng& rng) const {
    const auto p = action_distribution(s, level);
    return rng.categorical(p);
}

ActionId PolicyModel::greedy(StateId s, std::optional<std::size_t> level) const {
    const auto p = action_distribution(s, level);
    return static_cast<ActionId>(std::max_element(p.begin(), p.end()) - p.begin());
}

void PolicyModel::enable_adam(bool on) {
    adam_on_ = on;
    adam_.resize(params_.size());
}

// Checkpoint layout (little-endian):
//   char[8]  "RISKRLP1"
//   u32      kind
//   u32      reserved (0)
//   u64      n_states, n_actions, n_levels, embed, hidden, seed
//   f64      output_scale
//   u64      parameter count
//   f64[]    parameters
namespace {

template <class T> void put(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <class T> T get(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw std::runtime_error("policy checkpoint: truncated file");
    return v;
}

constexpr char kMagic[8] = {'R', 'I', 'S', 'K', 'R', 'L', 'P', '1'};

} // namespace

void PolicyModel::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("policy checkpoint: cannot open " + path);
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(kind_));
    put<std::uint32_t>(out, 0);
    put<std::uint64_t>(out, n_states_);
    put<std::uint64_t>(out, n_actions_);
    put<std::uint64_t>(out, n_levels_);
    put<std::uint64_t>(out, shape_.embed);
    put<std::uint64_t>(out, shape_.hidden);
    put<std::uint64_t>(out, seed_);
    put<double>(out, output_scale_);
    put<std::uint64_t>(out, params_.size());
    out.write(reinterpret_cast<const char*>(params_.data()),
              static_cast<std::streamsize>(params_.size() * sizeof(double)));
    if (!out) throw std::runtime_error("policy checkpoint: write failed for " + path);
}

PolicyModel PolicyModel::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("policy checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0)
        throw std::runtime_error("policy checkpoint: bad magic in " + path);
    const auto kind = get<std::uint32_t>(in);
    get<std::uint32_t>(in);
    if (kind > 2) throw std::runtime_error("policy checkpoint: unknown kind");
    Options opt;
    const auto n_states = get<std::uint64_t>(in);
    const auto n_actions = get<std::uint64_t>(in);
    opt.n_levels = get<std::uint64_t>(in);
    opt.embed = get<std::uint64_t>(in);
    opt.hidden = get<std::uint64_t>(in);
    opt.seed = get<std::uint64_t>(in);
    opt.output_scale = get<double>(in);
    PolicyModel p(static_cast<PolicyKind>(kind), n_states, n_actions, opt);
    const auto count = get<std::uint64_t>(in);
    if (count != p.params_.size()) throw std::runtime_error("policy checkpoint: parameter count mismatch");
    in.read(reinterpret_cast<char*>(p.params_.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw std::runtime_error("policy checkpoint: truncated file");
    return p;
}

// ---------------------------------------------------------------------------

PolicySnapshot PolicySnapshot::of(const PolicyModel& policy) {
    PolicySnapshot snap;
    snap.n_states = policy.n_states();
    snap.n_actions = policy.n_actions();
    snap.uses_level = policy.uses_level();
    snap.n_levels = snap.uses_level ? policy.n_levels() : 1;
    snap.probs.resize(snap.n_states * snap.n_levels * snap.n_actions);
    for (StateId s = 0; s < snap.n_states; ++s)
        for (std::size_t l = 0; l < snap.n_levels; ++l) {
            std::optional<std::size_t> level;
            if (snap.uses_level) level = l;
            const auto p = policy.action_distribution(s, level);
            std::copy(p.begin(), p.end(),
                      snap.probs.begin() + (s * snap.n_levels + l) * snap.n_actions);
        }
    return snap;
}

std::span<const double> PolicySnapshot::at(StateId s, std::optional<std::size_t> level) const {
    const std::size_t l = uses_level ? level.value() : 0;
    return {probs.data() + (s * n_levels + l) * n_actions, n_actions};
}

ActionId PolicySnapshot::sample(StateId s, std::optional<std::size_t> level, Rng& rng) const {
    return rng.categorical(at(s, level));
}

void GradAccumulator::add(std::span<const double> g, double scale) {
    if (g.size() != buffer.size()) throw std::invalid_argument("gradient accumulator: shape mismatch");
    for (std::size_t i = 0; i < g.size(); ++i) buffer[i] += scale * g[i];
    ++sample_count;
}

void GradAccumulator::clear() {
    std::fill(buffer.begin(), buffer.end(), 0.0);
    sample_count = 0;
}

LogitGradient::LogitGradient(const PolicySnapshot& snap)
    : snap_(&snap), coef_(snap.probs.size(), 0.0), touched_(snap.n_states * snap.n_levels, false) {}

void LogitGradient::add_score(StateId s, std::optional<std::size_t> level, ActionId action,
                              double scale) {
    if (scale == 0.0) return;
    const std::size_t l = snap_->uses_level ? level.value() : 0;
    const std::size_t cell = s * snap_->n_levels + l;
    const std::size_t base = cell * snap_->n_actions;
    for (std::size_t a = 0; a < snap_->n_actions; ++a) coef_[base + a] -= scale * snap_->probs[base + a];
    coef_[base + action] += scale;
    touched_[cell] = true;
}

void LogitGradient::scale(double c) {
    for (double& x : coef_) x *= c;
}

void LogitGradient::add(const LogitGradient& other, double c) {
    if (other.coef_.size() != coef_.size()) throw std::invalid_argument("logit gradient: shape mismatch");
    for (std::size_t i = 0; i < coef_.size(); ++i) coef_[i] += c * other.coef_[i];
    for (std::size_t i = 0; i < touched_.size(); ++i) touched_[i] = touched_[i] || other.touched_[i];
}

void LogitGradient::flush(const PolicyModel& policy, GradAccumulator& acc) const {
    if (acc.buffer.size() != policy.parameter_count())
        throw std::invalid_argument("gradient accumulator: shape mismatch");
    const std::size_t A = snap_->n_actions;
    for (std::size_t cell = 0; cell < touched_.size(); ++cell) {
        if (!touched_[cell]) continue;
        const StateId s = cell / snap_->n_levels;
        std::optional<std::size_t> level;
        if (snap_->uses_level) level = cell % snap_->n_levels;
        policy.backprop_logits(s, level, std::span<const double>(coef_).subspan(cell * A, A), acc.buffer);
    }
    ++acc.sample_count;
}

void apply_gradient(PolicyModel& policy, GradAccumulator& acc, double learning_rate) {
    auto params = policy.parameters();
    if (acc.buffer.size() != params.size()) throw std::invalid_argument("apply_gradient: shape mismatch");
    const double denom = static_cast<double>(std::max<std::size_t>(acc.sample_count, 1));
    if (policy.adam_enabled()) {
        std::vector<double> g(acc.buffer);
        for (double& x : g) x /= denom;
        policy.optimizer().step(params, g, learning_rate, /*ascent=*/true);
    } else {
        for (std::size_t i = 0; i < params.size(); ++i) params[i] += learning_rate * acc.buffer[i] / denom;
    }
    acc.clear();
}

double finite_difference_check(const std::function<double(std::span<const double>)>& f,
                               std::span<const double> x, std::span<const double> analytic,
                               double step) {
    if (!(step > 0.0)) throw std::invalid_argument("finite difference: step must be positive");
    if (x.size() != analytic.size()) throw std::invalid_argument("finite difference: size mismatch");
    std::vector<double> probe(x.begin(), x.end());
    double worst = 0.0;
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const double keep = probe[i];
        probe[i] = keep + step;
        const double up = f(probe);
        probe[i] = keep - step;
        const double down = f(probe);
        probe[i] = keep;
        if (!std::isfinite(up) || !std::isfinite(down))
            throw std::runtime_error("finite difference: non-finite evaluation");
        const double fd = (up - down) / (2.0 * step);
        const double err = std::abs(fd - analytic[i]) / std::max({1.0, std::abs(fd), std::abs(analytic[i])});
        worst = std::max(worst, err);
    }
    return worst;
}

} // namespace riskrl
