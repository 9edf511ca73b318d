#include "riskrl/environments.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>
#include <stdexcept>

namespace riskrl {

namespace detail {
const char* bundled_maze_text();
}

namespace {

constexpr int kDr[4] = {-1, 1, 0, 0};
constexpr int kDc[4] = {0, 0, -1, 1};

StateId move(const MazeLayout& m, StateId s, ActionId a) {
    const auto [r, c] = m.pos[s];
    const auto nr = static_cast<long>(r) + kDr[a];
    const auto nc = static_cast<long>(c) + kDc[a];
    if (nr < 0 || nc < 0 || nr >= static_cast<long>(m.rows) || nc >= static_cast<long>(m.cols))
        return s;
    const int t = m.state_of[static_cast<std::size_t>(nr) * m.cols + static_cast<std::size_t>(nc)];
    return t < 0 ? s : static_cast<StateId>(t);
}

bool is_red(const MazeLayout& m, StateId s) {
    return std::find(m.red.begin(), m.red.end(), s) != m.red.end();
}

} // namespace

const std::string& default_maze_text() {
    static const std::string text = detail::bundled_maze_text();
    return text;
}

MazeLayout parse_maze(const std::string& text) {
    MazeLayout m;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    bool have_start = false, have_goal = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (m.cols == 0) m.cols = line.size();
        if (line.size() != m.cols)
            throw std::invalid_argument("maze line " + std::to_string(line_no) + ": expected " +
                                        std::to_string(m.cols) + " columns, got " +
                                        std::to_string(line.size()));
        for (char ch : line)
            if (ch != '#' && ch != '.' && ch != 'S' && ch != 'G' && ch != 'R')
                throw std::invalid_argument("maze line " + std::to_string(line_no) +
                                            ": unknown cell '" + std::string(1, ch) + "'");
        m.cells.push_back(line);
    }
    m.rows = m.cells.size();
    if (m.rows == 0) throw std::invalid_argument("maze: empty map");
    m.state_of.assign(m.rows * m.cols, -1);
    for (std::size_t r = 0; r < m.rows; ++r)
        for (std::size_t c = 0; c < m.cols; ++c) {
            const char ch = m.cells[r][c];
            if (ch == '#') continue;
            const StateId s = m.pos.size();
            m.state_of[r * m.cols + c] = static_cast<int>(s);
            m.pos.emplace_back(r, c);
            if (ch == 'S') {
                if (have_start) throw std::invalid_argument("maze: more than one start cell");
                m.start = s;
                have_start = true;
            } else if (ch == 'G') {
                if (have_goal) throw std::invalid_argument("maze: more than one goal cell");
                m.goal = s;
                have_goal = true;
            } else if (ch == 'R') {
                m.red.push_back(s);
            }
        }
    if (!have_start) throw std::invalid_argument("maze: no start cell 'S'");
    if (!have_goal) throw std::invalid_argument("maze: no goal cell 'G'");
    return m;
}

std::vector<RewardAtom> discretized_standard_normal(std::size_t atoms, double span) {
    if (atoms < 2 || !(span > 0.0)) throw std::invalid_argument("normal discretization: bad shape");
    std::vector<RewardAtom> out(atoms);
    double total = 0.0;
    for (std::size_t i = 0; i < atoms; ++i) {
        const double z = -span + 2.0 * span * static_cast<double>(i) / static_cast<double>(atoms - 1);
        out[i] = {z, std::exp(-0.5 * z * z)};
        total += out[i].prob;
    }
    double var = 0.0;
    for (auto& a : out) {
        a.prob /= total;
        var += a.prob * a.value * a.value;
    }
    // Symmetric atoms give mean 0; rescale the support so the variance is 1.
    const double k = 1.0 / std::sqrt(var);
    for (auto& a : out) a.value *= k;
    return out;
}

TabularMDP make_maze(const MazeOptions& opt) { return make_maze(parse_maze(default_maze_text()), opt); }

TabularMDP make_maze(const MazeLayout& m, const MazeOptions& opt) {
    TabularMDP mdp(m.n_states(), 4, opt.gamma, opt.horizon);
    mdp.name = opt.gaussian_red ? "maze_gaussian" : "maze";
    std::vector<RewardAtom> red_reward;
    for (const auto& z : discretized_standard_normal(opt.red_atoms, opt.red_span))
        red_reward.push_back({opt.step_reward + opt.red_scale * z.value, z.prob});
    for (StateId s = 0; s < m.n_states(); ++s) {
        if (s == m.goal) continue;
        for (ActionId a = 0; a < 4; ++a) {
            const StateId next = move(m, s, a);
            std::vector<RewardAtom> reward;
            if (next == m.goal)
                reward = {{opt.goal_reward, 1.0}};
            else if (is_red(m, next))
                reward = red_reward;
            else
                reward = {{opt.step_reward, 1.0}};
            mdp.set(s, a, {{next, 1.0}}, reward);
            if (opt.gaussian_red && is_red(m, next) && next != m.goal)
                mdp.set_continuous_reward(s, a, {opt.step_reward, opt.red_scale});
        }
    }
    mdp.make_terminal(m.goal);
    for (StateId r : m.red) mdp.mark_risk_state(r);
    mdp.set_initial_state(m.start);
    mdp.validate();
    return mdp;
}

namespace {

// Breadth-first search from the start; returns predecessor (state, action).
std::vector<std::pair<long, ActionId>> bfs(const MazeLayout& m, bool avoid_red) {
    std::vector<std::pair<long, ActionId>> prev(m.n_states(), {-2, 0});
    std::deque<StateId> queue{m.start};
    prev[m.start] = {-1, 0};
    while (!queue.empty()) {
        const StateId s = queue.front();
        queue.pop_front();
        if (s == m.goal) break;
        for (ActionId a = 0; a < 4; ++a) {
            const StateId n = move(m, s, a);
            if (prev[n].first != -2) continue;
            if (avoid_red && is_red(m, n)) continue;
            prev[n] = {static_cast<long>(s), a};
            queue.push_back(n);
        }
    }
    return prev;
}

} // namespace

std::vector<ActionId> maze_path_actions(const MazeLayout& m, bool avoid_red) {
    const auto prev = bfs(m, avoid_red);
    if (prev[m.goal].first == -2) return {};
    std::vector<ActionId> actions;
    for (StateId s = m.goal; prev[s].first >= 0; s = static_cast<StateId>(prev[s].first))
        actions.push_back(prev[s].second);
    std::reverse(actions.begin(), actions.end());
    return actions;
}

std::size_t maze_path_length(const MazeLayout& m, bool avoid_red) {
    return maze_path_actions(m, avoid_red).size();
}

TabularMDP make_noisy_corridor(std::size_t length, double noise_scale) {
    if (length < 3) throw std::invalid_argument("noisy corridor: length must be at least 3");
    if (!(noise_scale >= 0.0)) throw std::invalid_argument("noisy corridor: noise scale must be nonnegative");
    // 0 start, 1..length-1 fast lane, length..2*length-1 safe lane, 2*length terminal
    const std::size_t fast0 = 1;
    const std::size_t safe0 = length;
    const StateId terminal = 2 * length;
    TabularMDP mdp(2 * length + 1, 2, 1.0, length + 2);
    mdp.name = "noisy_corridor";
    std::vector<RewardAtom> noisy = {{-1.0 - noise_scale, 0.5}, {-1.0 + noise_scale, 0.5}};
    if (noise_scale == 0.0) noisy = {{-1.0, 1.0}};
    const std::vector<RewardAtom> plain = {{-1.0, 1.0}};
    mdp.set(0, 0, {{fast0, 1.0}}, noisy);
    mdp.set(0, 1, {{safe0, 1.0}}, plain);
    for (std::size_t i = 0; i + 1 < length; ++i) {
        const StateId s = fast0 + i;
        const StateId next = (i + 2 < length) ? s + 1 : terminal;
        for (ActionId a = 0; a < 2; ++a) mdp.set(s, a, {{next, 1.0}}, noisy);
    }
    for (std::size_t i = 0; i < length; ++i) {
        const StateId s = safe0 + i;
        const StateId next = (i + 1 < length) ? s + 1 : terminal;
        for (ActionId a = 0; a < 2; ++a) mdp.set(s, a, {{next, 1.0}}, plain);
    }
    mdp.make_terminal(terminal);
    if (noise_scale > 0.0)
        for (std::size_t i = 0; i + 1 < length; ++i) mdp.mark_risk_state(fast0 + i);
    mdp.set_initial_state(0);
    mdp.validate();
    return mdp;
}

Trajectory rollout(const TabularMDP& mdp, const ActionChooser& choose, Rng& rng,
                   const LevelTracking* tracking) {
    Trajectory traj;
    traj.gamma = mdp.gamma();
    StateId s = mdp.initial_state();
    std::optional<std::size_t> level;
    RiskTracker tracker;
    tracker.gamma = mdp.gamma();
    if (tracking) {
        if (!tracking->values || tracking->values->n_states != mdp.n_states())
            throw std::invalid_argument("rollout: value table does not match the mdp");
        level = tracking->initial_level;
        tracker.current_level = *level;
    }
    double k = 0.0;
    double discount = 1.0;
    for (std::size_t t = 0; t < mdp.horizon(); ++t) {
        if (mdp.is_terminal(s)) break;
        const ActionId a = choose(s, level, rng);
        if (a >= mdp.n_actions()) throw std::invalid_argument("rollout: action out of range");
        const auto step = mdp.sample(s, a, rng);
        StepRecord rec;
        rec.state = s;
        rec.risk_level = level;
        rec.action = a;
        rec.reward = step.reward;
        rec.next_state = step.next;
        rec.cumulative_reward = k;
        rec.done = mdp.is_terminal(step.next) || t + 1 == mdp.horizon();
        traj.steps.push_back(rec);
        k += discount * step.reward;
        discount *= mdp.gamma();
        if (mdp.is_risk_state(step.next)) traj.visited_risk_state = true;
        if (tracking && !mdp.is_terminal(step.next))
            level = track_level(tracker, *tracking->values, s, *level, step.reward, step.next);
        s = step.next;
    }
    traj.total_return = k;
    traj.reached_terminal = mdp.is_terminal(s);
    traj.risk_event_flag =
        traj.visited_risk_state || (mdp.has_terminal_states() && !traj.reached_terminal);
    return traj;
}

Trajectory rollout(const TabularMDP& mdp, const PolicySnapshot& policy, Rng& rng,
                   const LevelTracking* tracking) {
    if (policy.n_states != mdp.n_states() || policy.n_actions != mdp.n_actions())
        throw std::invalid_argument("rollout: policy does not match the mdp");
    if (policy.uses_level && !tracking)
        throw std::invalid_argument("rollout: level-indexed policy needs risk tracking");
    const ActionChooser choose = [&](StateId s, std::optional<std::size_t> level, Rng& r) {
        return policy.sample(s, policy.uses_level ? level : std::nullopt, r);
    };
    return rollout(mdp, choose, rng, tracking);
}

Trajectory rollout(const TabularMDP& mdp, const PolicyModel& policy, const LevelTracking* tracking,
                   std::uint64_t seed) {
    const auto snap = PolicySnapshot::of(policy);
    Rng rng(seed);
    return rollout(mdp, snap, rng, tracking);
}

double deterministic_path_return(const TabularMDP& mdp, const std::vector<ActionId>& actions) {
    StateId s = mdp.initial_state();
    double g = 0.0, discount = 1.0;
    for (ActionId a : actions) {
        const auto& next = mdp.transitions(s, a);
        if (next.size() != 1) throw std::invalid_argument("path return: stochastic transition");
        g += discount * mdp.mean_reward(s, a);
        discount *= mdp.gamma();
        s = next[0].next;
    }
    return g;
}

TabularMDP make_environment(const std::string& name) {
    if (name == "maze") return make_maze();
    if (name == "maze_gaussian") {
        MazeOptions opt;
        opt.gaussian_red = true;
        return make_maze(opt);
    }
    if (name == "noisy_corridor" || name == "corridor") return make_noisy_corridor(4, 10.0);
    if (name == "chain") {
        TabularMDP mdp(4, 1, 1.0, 3);
        mdp.name = "chain";
        for (StateId s = 0; s < 3; ++s) mdp.set(s, 0, {{s + 1, 1.0}}, {{1.0, 1.0}});
        mdp.make_terminal(3);
        mdp.validate();
        return mdp;
    }
    throw std::invalid_argument("unknown environment '" + name + "'");
}

std::vector<std::string> environment_names() { return {"maze", "maze_gaussian", "noisy_corridor", "chain"}; }

} // namespace riskrl
