#pragma once

#include "riskrl/mdp.hpp"
#include "riskrl/policy.hpp"
#include "riskrl/quantile.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace riskrl {

/// Parsed ASCII grid: '#' wall, '.' free, 'S' start, 'G' goal, 'R' red cell.
struct MazeLayout {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::string> cells;
    std::vector<int> state_of;                            // per cell, -1 for walls
    std::vector<std::pair<std::size_t, std::size_t>> pos; // per state (row, col)
    StateId start = 0;
    StateId goal = 0;
    std::vector<StateId> red;

    std::size_t n_states() const { return pos.size(); }
    char at(std::size_t r, std::size_t c) const { return cells[r][c]; }
};

/// Throws std::invalid_argument naming the offending line.
MazeLayout parse_maze(const std::string& text);

/// The bundled map.
const std::string& default_maze_text();

struct MazeOptions {
    double step_reward = -1.0;
    double goal_reward = 10.0;
    double red_scale = 30.0;   // red reward = step_reward + red_scale * z
    std::size_t red_atoms = 21;
    double red_span = 3.0;     // atoms cover +-red_span standard deviations
    bool gaussian_red = false; // sample z ~ N(0, 1) exactly; disables exact oracles
    std::size_t horizon = 100;
    double gamma = 0.999;
};

/// Actions 0..3 = Up, Down, Left, Right. Bumping into a wall keeps the position.
/// The reward belongs to the cell occupied after the move.
TabularMDP make_maze(const MazeOptions& opt = {});
TabularMDP make_maze(const MazeLayout& layout, const MazeOptions& opt = {});

/// z on `atoms` evenly spaced points over [-span, span] with weights
/// proportional to the normal density; rescaled so mean 0 and variance 1 hold
/// exactly.
std::vector<RewardAtom> discretized_standard_normal(std::size_t atoms, double span);

/// Fewest moves from start to goal, optionally never entering a red cell.
/// Returns 0 when unreachable.
std::size_t maze_path_length(const MazeLayout& layout, bool avoid_red);
/// Action sequence of one shortest path (lowest action id first on ties).
std::vector<ActionId> maze_path_actions(const MazeLayout& layout, bool avoid_red);

/// Two-lane corridor. From the start, action 0 enters the fast lane (`length`
/// steps, each reward -1 + noise_scale * (+-1) equiprobable), action 1 enters
/// the safe lane (`length + 1` steps, reward -1). Inside a lane every action
/// moves forward. gamma = 1.
TabularMDP make_noisy_corridor(std::size_t length, double noise_scale);

/// Optional risk-level tracking during a rollout.
struct LevelTracking {
    const ValueTable* values = nullptr;
    std::size_t initial_level = 0;
};

/// One episode up to the horizon or a terminal state. Levels are recorded (and
/// passed to level-indexed policies) when tracking is supplied.
Trajectory rollout(const TabularMDP& mdp, const PolicySnapshot& policy, Rng& rng,
                   const LevelTracking* tracking = nullptr);
Trajectory rollout(const TabularMDP& mdp, const PolicyModel& policy,
                   const LevelTracking* tracking, std::uint64_t seed);

/// Generic episode driver: `choose(state, level)` picks the action.
using ActionChooser = std::function<ActionId(StateId, std::optional<std::size_t>, Rng&)>;
Trajectory rollout(const TabularMDP& mdp, const ActionChooser& choose, Rng& rng,
                   const LevelTracking* tracking = nullptr);

/// Discounted sum of a fixed action sequence from the initial state when the
/// path is deterministic (uses mean rewards).
double deterministic_path_return(const TabularMDP& mdp, const std::vector<ActionId>& actions);

/// Lookup by name: "maze", "maze_gaussian", "noisy_corridor" (length 4,
/// noise 10; "corridor" is accepted too),
/// "chain" (deterministic, 3 steps). Throws std::invalid_argument otherwise.
TabularMDP make_environment(const std::string& name);
std::vector<std::string> environment_names();

} // namespace riskrl
