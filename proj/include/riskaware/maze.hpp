#pragma once

#include <array>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "riskaware/errors.hpp"
#include "riskaware/pomdp.hpp"
#include "riskaware/prospect.hpp"

namespace riskaware {

struct Cell {
    int x = 0;
    int y = 0;

    friend auto operator<=>(const Cell&, const Cell&) = default;
};

inline std::string to_string(Cell c) {
    return "(" + std::to_string(c.x) + "," + std::to_string(c.y) + ")";
}

/// Row 0 is the top of the board, so `up` decreases y.
enum class Direction : std::uint8_t { up, down, left, right };

inline constexpr std::array<Direction, 4> kDirections{Direction::up, Direction::down, Direction::left,
                                                      Direction::right};

inline std::string_view to_string(Direction d) {
    switch (d) {
        case Direction::up: return "up";
        case Direction::down: return "down";
        case Direction::left: return "left";
        case Direction::right: return "right";
    }
    return "?";
}

inline Direction parse_direction(std::string_view s) {
    for (Direction d : kDirections)
        if (to_string(d) == s) return d;
    throw ValidationError("unknown move '" + std::string(s) + "'");
}

inline Cell moved(Cell c, Direction d) {
    switch (d) {
        case Direction::up: return {c.x, c.y - 1};
        case Direction::down: return {c.x, c.y + 1};
        case Direction::left: return {c.x - 1, c.y};
        case Direction::right: return {c.x + 1, c.y};
    }
    return c;
}

enum class Grid { primary, alt };

/// A dual-grid maze game: two boards with identical walls and different
/// per-cell rewards. The player is on the primary board with probability
/// 1 - p_alt. Rewards are collected on entering a cell.
struct MazeSpec {
    std::string id;
    int width = 17;
    int height = 15;
    std::vector<bool> blocked;            ///< row-major (y, x)
    std::vector<double> rewards_primary;  ///< row-major (y, x)
    std::vector<double> rewards_alt;      ///< row-major (y, x)
    double p_alt = 0.05;
    Cell start;
    std::array<Cell, 2> goals;
    int move_limit = 1;
    int time_limit_s = 120;

    /// Shortest-path distance to the nearer goal, -1 when unreachable.
    /// Filled by finalize_maze().
    std::vector<int> goal_distance;

    std::size_t num_cells() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
    bool in_bounds(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width && c.y < height; }
    std::size_t index(Cell c) const {
        return static_cast<std::size_t>(c.y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(c.x);
    }
    Cell cell(std::size_t i) const {
        return {static_cast<int>(i % static_cast<std::size_t>(width)),
                static_cast<int>(i / static_cast<std::size_t>(width))};
    }
    bool is_open(Cell c) const { return in_bounds(c) && !blocked[index(c)]; }
    bool is_goal(Cell c) const { return c == goals[0] || c == goals[1]; }
    double reward(Grid g, Cell c) const {
        return g == Grid::primary ? rewards_primary[index(c)] : rewards_alt[index(c)];
    }
    int distance_to_goal(Cell c) const { return goal_distance[index(c)]; }
};

namespace detail {

inline std::vector<int> bfs_distances(const MazeSpec& spec, std::span<const Cell> sources) {
    std::vector<int> dist(spec.num_cells(), -1);
    std::deque<Cell> queue;
    for (Cell s : sources) {
        if (!spec.is_open(s) || dist[spec.index(s)] == 0) continue;
        dist[spec.index(s)] = 0;
        queue.push_back(s);
    }
    while (!queue.empty()) {
        const Cell c = queue.front();
        queue.pop_front();
        for (Direction d : kDirections) {
            const Cell n = moved(c, d);
            if (!spec.is_open(n) || dist[spec.index(n)] >= 0) continue;
            dist[spec.index(n)] = dist[spec.index(c)] + 1;
            queue.push_back(n);
        }
    }
    return dist;
}

}  // namespace detail

/// Checks every MazeSpec invariant and fills the goal-distance cache.
inline void finalize_maze(MazeSpec& spec) {
    if (spec.width <= 0 || spec.height <= 0) throw ValidationError("maze dimensions must be positive");
    const std::size_t n = spec.num_cells();
    if (spec.blocked.size() != n) throw ValidationError("wall mask does not match maze dimensions");
    if (spec.rewards_primary.size() != n || spec.rewards_alt.size() != n)
        throw ValidationError("reward grids do not match maze dimensions");
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(spec.rewards_primary[i]) || !std::isfinite(spec.rewards_alt[i]))
            throw ValidationError("non-finite reward at cell " + to_string(spec.cell(i)));
    if (!(spec.p_alt >= 0.0 && spec.p_alt <= 1.0)) throw ValidationError("p_alt must lie in [0, 1]");
    if (spec.move_limit <= 0) throw ValidationError("move_limit must be positive");
    if (spec.time_limit_s <= 0) throw ValidationError("time_limit_s must be positive");
    if (spec.goals[0] == spec.goals[1]) throw ValidationError("the two goals must be distinct cells");

    auto check_open = [&](Cell c, const char* what) {
        if (!spec.in_bounds(c)) throw ValidationError(std::string(what) + " " + to_string(c) + " is out of bounds");
        if (spec.blocked[spec.index(c)]) throw ValidationError(std::string(what) + " " + to_string(c) + " is a wall");
    };
    check_open(spec.start, "start");
    check_open(spec.goals[0], "goal");
    check_open(spec.goals[1], "goal");

    const std::array<Cell, 1> from_start{spec.start};
    const auto from = detail::bfs_distances(spec, from_start);
    for (Cell g : spec.goals)
        if (from[spec.index(g)] < 0) throw ValidationError("goal " + to_string(g) + " is unreachable from the start");

    spec.goal_distance = detail::bfs_distances(spec, spec.goals);
    if (spec.goal_distance[spec.index(spec.start)] > spec.move_limit) {
        std::ostringstream msg;
        msg << "no goal is reachable from the start within move_limit " << spec.move_limit << " (nearest is "
            << spec.goal_distance[spec.index(spec.start)] << " moves away)";
        throw ValidationError(msg.str());
    }
}

/// Parses and validates the maze JSON schema:
/// {id?, width, height, walls:[[x,y]..], rewards_primary:[[row]..], rewards_alt:[[row]..],
///  p_alt, start:[x,y], goals:[[x,y],[x,y]], move_limit, time_limit_s}
inline MazeSpec load_maze(const nlohmann::json& doc) {
    MazeSpec spec;
    try {
        spec.id = doc.value("id", std::string{});
        spec.width = doc.value("width", 17);
        spec.height = doc.value("height", 15);
        if (spec.width <= 0 || spec.height <= 0) throw ValidationError("maze dimensions must be positive");
        spec.blocked.assign(spec.num_cells(), false);
        for (const auto& w : doc.value("walls", nlohmann::json::array())) {
            const Cell c{w.at(0).get<int>(), w.at(1).get<int>()};
            if (!spec.in_bounds(c)) throw ValidationError("wall " + to_string(c) + " is out of bounds");
            spec.blocked[spec.index(c)] = true;
        }
        auto read_grid = [&](const char* key) {
            const auto& rows = doc.at(key);
            if (!rows.is_array() || rows.size() != static_cast<std::size_t>(spec.height))
                throw ValidationError(std::string(key) + " must have one row per maze row");
            std::vector<double> grid;
            grid.reserve(spec.num_cells());
            for (const auto& row : rows) {
                if (!row.is_array() || row.size() != static_cast<std::size_t>(spec.width))
                    throw ValidationError(std::string(key) + " rows must have one entry per column");
                for (const auto& v : row) grid.push_back(v.get<double>());
            }
            return grid;
        };
        spec.rewards_primary = read_grid("rewards_primary");
        spec.rewards_alt = read_grid("rewards_alt");
        spec.p_alt = doc.value("p_alt", 0.05);
        spec.start = {doc.at("start").at(0).get<int>(), doc.at("start").at(1).get<int>()};
        const auto& goals = doc.at("goals");
        if (!goals.is_array() || goals.size() != 2) throw ValidationError("a maze has exactly two goals");
        for (std::size_t i = 0; i < 2; ++i)
            spec.goals[i] = {goals[i].at(0).get<int>(), goals[i].at(1).get<int>()};
        spec.move_limit = doc.at("move_limit").get<int>();
        spec.time_limit_s = doc.value("time_limit_s", 120);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed maze document: ") + e.what());
    }
    finalize_maze(spec);
    return spec;
}

inline nlohmann::json to_json(const MazeSpec& spec) {
    nlohmann::json walls = nlohmann::json::array();
    for (std::size_t i = 0; i < spec.num_cells(); ++i)
        if (spec.blocked[i]) walls.push_back({spec.cell(i).x, spec.cell(i).y});
    auto grid = [&](const std::vector<double>& g) {
        nlohmann::json rows = nlohmann::json::array();
        for (int y = 0; y < spec.height; ++y) {
            nlohmann::json row = nlohmann::json::array();
            for (int x = 0; x < spec.width; ++x) row.push_back(g[spec.index({x, y})]);
            rows.push_back(std::move(row));
        }
        return rows;
    };
    return {{"id", spec.id},
            {"width", spec.width},
            {"height", spec.height},
            {"walls", walls},
            {"rewards_primary", grid(spec.rewards_primary)},
            {"rewards_alt", grid(spec.rewards_alt)},
            {"p_alt", spec.p_alt},
            {"start", {spec.start.x, spec.start.y}},
            {"goals", {{spec.goals[0].x, spec.goals[0].y}, {spec.goals[1].x, spec.goals[1].y}}},
            {"move_limit", spec.move_limit},
            {"time_limit_s", spec.time_limit_s}};
}

enum class Outcome { in_progress, goal, timeout };

inline std::string_view to_string(Outcome o) {
    switch (o) {
        case Outcome::in_progress: return "in_progress";
        case Outcome::goal: return "goal";
        case Outcome::timeout: return "timeout";
    }
    return "?";
}

struct MazeState {
    Cell position;
    int moves_used = 0;
    bool finished = false;
    Outcome outcome = Outcome::in_progress;

    friend bool operator==(const MazeState&, const MazeState&) = default;
};

inline MazeState initial_state(const MazeSpec& spec) {
    MazeState s{spec.start, 0, false, Outcome::in_progress};
    if (spec.is_goal(spec.start)) {
        s.finished = true;
        s.outcome = Outcome::goal;
    }
    return s;
}

/// Whether moving `d` from `from` is allowed with `remaining` moves left: the
/// target must be open and still within reach of some goal afterwards.
inline bool move_is_feasible(const MazeSpec& spec, Cell from, Direction d, int remaining) {
    const Cell target = moved(from, d);
    if (!spec.is_open(target)) return false;
    const int dist = spec.distance_to_goal(target);
    return dist >= 0 && dist <= remaining - 1;
}

/// Moves that stay in bounds, avoid walls, and keep a goal reachable within
/// the remaining budget. Empty once the game is finished.
inline std::vector<Direction> legal_moves(const MazeSpec& spec, const MazeState& state) {
    std::vector<Direction> out;
    if (state.finished) return out;
    const int remaining = spec.move_limit - state.moves_used;
    for (Direction d : kDirections)
        if (move_is_feasible(spec, state.position, d, remaining)) out.push_back(d);
    return out;
}

inline MazeState step(const MazeSpec& spec, const MazeState& state, Direction d) {
    const auto legal = legal_moves(spec, state);
    if (std::find(legal.begin(), legal.end(), d) == legal.end()) {
        std::string names;
        for (Direction l : legal) names += (names.empty() ? "" : ", ") + std::string(to_string(l));
        throw ValidationError("illegal move '" + std::string(to_string(d)) + "' at " + to_string(state.position) +
                              "; legal: [" + names + "]");
    }
    MazeState next = state;
    next.position = moved(state.position, d);
    next.moves_used += 1;
    if (spec.is_goal(next.position)) {
        next.finished = true;
        next.outcome = Outcome::goal;
    } else if (next.moves_used >= spec.move_limit) {
        next.finished = true;
        next.outcome = Outcome::timeout;
    }
    return next;
}

/// Single-board maze as a POMDP: states and observations are cells, four
/// human moves, one idle robot action, goals terminal. Moving into an open
/// cell earns that cell's reward; moves into walls are self-loops and are
/// excluded by maze_admissible().
inline PomdpModel grid_model(const MazeSpec& spec, Grid grid, double discount = 1.0,
                             std::optional<int> horizon = std::nullopt) {
    const std::size_t n = spec.num_cells();
    PomdpModel m = PomdpModel::allocate(n, n, kDirections.size(), 1);
    m.discount = discount;
    m.horizon = horizon.value_or(spec.move_limit);
    m.terminal.assign(n, false);
    m.robot_action_names = {"none"};
    for (Direction d : kDirections) m.human_action_names.emplace_back(to_string(d));
    for (std::size_t s = 0; s < n; ++s) {
        const Cell c = spec.cell(s);
        m.observation_of[s] = s;
        m.state_names.push_back(std::to_string(c.x) + ":" + std::to_string(c.y));
        if (spec.is_goal(c)) m.terminal[s] = true;
        for (std::size_t a = 0; a < kDirections.size(); ++a) {
            const Cell t = moved(c, kDirections[a]);
            if (spec.is_open(t) && !spec.blocked[s]) {
                const std::size_t ti = spec.index(t);
                m.transition[m.index(s, a, 0, ti)] = 1.0;
                m.human_reward[m.index(s, a, 0, ti)] = spec.reward(grid, t);
            } else {
                m.transition[m.index(s, a, 0, s)] = 1.0;
            }
        }
    }
    return m;
}

/// Budget-feasibility admissibility for grid_model() states.
inline ActionFilter maze_admissible(const MazeSpec& spec) {
    return [&spec](std::size_t s, std::size_t a, int steps_to_go) {
        return move_is_feasible(spec, spec.cell(s), kDirections[a], steps_to_go);
    };
}

/// Value tables for both boards. Each stage holds entry values
/// W_h(c) = r(c) + V_h(c): the reward for stepping onto c plus the best
/// continuation with h moves left. Infeasible (cell, h) pairs are -infinity.
struct DualValues {
    ValueTable primary;
    ValueTable alt;

    const ValueTable& operator[](Grid g) const { return g == Grid::primary ? primary : alt; }
};

inline DualValues dual_grid_values(const MazeSpec& spec, double discount = 1.0,
                                   std::optional<int> horizon = std::nullopt) {
    auto solve = [&](Grid g) {
        const PomdpModel model = grid_model(spec, g, discount, horizon);
        ValueIterationOptions opts;
        opts.admissible = maze_admissible(spec);
        ValueTable t = human_value_iteration(model, uniform_robot_model(model), opts);
        for (auto& stage : t.stages)
            for (std::size_t s = 0; s < stage.size(); ++s)
                if (std::isfinite(stage[s])) stage[s] += spec.reward(g, spec.cell(s));
        t.values = t.stages.back();
        return t;
    };
    return {solve(Grid::primary), solve(Grid::alt)};
}

/// Prospect of each legal move: [(1 - p_alt, W_primary(s')), (p_alt, W_alt(s'))]
/// with the stage matching the budget left after the move. With p_alt == 0
/// the prospect has a single consequence.
inline std::vector<std::pair<Direction, Prospect>> decision_prospects(const MazeSpec& spec,
                                                                      const DualValues& values,
                                                                      const MazeState& state) {
    std::vector<std::pair<Direction, Prospect>> out;
    const int horizon = static_cast<int>(values.primary.stages.size()) - 1;
    const int after = horizon - state.moves_used - 1;
    for (Direction d : legal_moves(spec, state)) {
        const std::size_t t = spec.index(moved(state.position, d));
        const double primary = values.primary.at_steps_to_go(after)[t];
        const double alt = values.alt.at_steps_to_go(after)[t];
        std::vector<Consequence> cs;
        if (spec.p_alt < 1.0) cs.push_back({1.0 - spec.p_alt, primary, "primary"});
        if (spec.p_alt > 0.0) cs.push_back({spec.p_alt, alt, "alt"});
        out.emplace_back(d, Prospect(std::move(cs)));
    }
    return out;
}

/// Both boards as one POMDP: state (board, cell), observation = cell, and the
/// static belief (1 - p_alt, p_alt) over the boards.
struct MazePomdp {
    PomdpModel model;
    BeliefOverStates belief;

    std::size_t state(Grid g, Cell c, const MazeSpec& spec) const {
        return (g == Grid::primary ? 0 : spec.num_cells()) + spec.index(c);
    }
};

inline MazePomdp maze_pomdp(const MazeSpec& spec) {
    const std::size_t n = spec.num_cells();
    const PomdpModel a = grid_model(spec, Grid::primary);
    const PomdpModel b = grid_model(spec, Grid::alt);
    MazePomdp out;
    PomdpModel& m = out.model;
    m = PomdpModel::allocate(2 * n, n, kDirections.size(), 1);
    m.discount = 1.0;
    m.horizon = spec.move_limit;
    m.terminal.assign(2 * n, false);
    m.human_action_names = a.human_action_names;
    m.robot_action_names = a.robot_action_names;
    for (std::size_t g = 0; g < 2; ++g) {
        const PomdpModel& src = g == 0 ? a : b;
        for (std::size_t s = 0; s < n; ++s) {
            const std::size_t gs = g * n + s;
            m.observation_of[gs] = s;
            m.terminal[gs] = src.terminal[s];
            m.state_names.push_back((g == 0 ? "p" : "a") + src.state_names[s]);
            for (std::size_t act = 0; act < kDirections.size(); ++act)
                for (std::size_t t = 0; t < n; ++t) {
                    m.transition[m.index(gs, act, 0, g * n + t)] = src.transition[src.index(s, act, 0, t)];
                    m.human_reward[m.index(gs, act, 0, g * n + t)] = src.human_reward[src.index(s, act, 0, t)];
                }
        }
    }
    out.belief.num_states = 2 * n;
    out.belief.probabilities.assign(n * 2 * n, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
        if (spec.p_alt < 1.0) out.belief.probabilities[s * 2 * n + s] = 1.0 - spec.p_alt;
        if (spec.p_alt > 0.0) out.belief.probabilities[s * 2 * n + n + s] = spec.p_alt;
    }
    return out;
}

/// One recorded game: the moves in order and how it ended.
struct TrajectoryStep {
    Cell position;  ///< observation before the move
    Direction action;
    std::int64_t t_ms = 0;
};

struct Trajectory {
    std::string session;
    std::string subject;
    std::string fixture;
    std::vector<TrajectoryStep> steps;
    Outcome terminal = Outcome::in_progress;
};

/// Replays a trajectory against the maze rules.
inline void validate_trajectory(const MazeSpec& spec, const Trajectory& t) {
    if (static_cast<int>(t.steps.size()) > spec.move_limit)
        throw ValidationError("trajectory " + t.session + " exceeds the move limit");
    MazeState state = initial_state(spec);
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
        if (t.steps[i].position != state.position)
            throw ValidationError("trajectory " + t.session + " step " + std::to_string(i) + " starts at " +
                                  to_string(t.steps[i].position) + " but the player is at " +
                                  to_string(state.position));
        state = step(spec, state, t.steps[i].action);
    }
    if (t.terminal != Outcome::in_progress && state.finished && t.terminal != state.outcome)
        throw ValidationError("trajectory " + t.session + " terminal marker disagrees with the replay");
}

}  // namespace riskaware
