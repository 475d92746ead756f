#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "riskaware/choice.hpp"
#include "riskaware/errors.hpp"
#include "riskaware/prospect.hpp"

namespace riskaware {

inline constexpr double kDistributionTolerance = 1e-9;

/// The interaction POMDP <S, O, O(.), A_H, A_R, T, r_H, r_R> with a discount
/// and an optional finite horizon.
///
/// Transition and reward tables are dense and indexed (s, a_H, a_R, s') in
/// row-major order; see index(). Terminal states are absorbing with value 0.
struct PomdpModel {
    std::size_t num_states = 0;
    std::size_t num_observations = 0;
    std::size_t num_human_actions = 0;
    std::size_t num_robot_actions = 0;

    std::vector<std::size_t> observation_of;  ///< O: S -> O
    std::vector<double> transition;           ///< T(s, a_H, a_R, s')
    std::vector<double> human_reward;         ///< r_H(s, a_H, a_R, s')
    std::vector<double> robot_reward;         ///< r_R(s, a_H, a_R, s')
    double discount = 0.95;
    std::optional<int> horizon;
    std::vector<bool> terminal;  ///< empty means no terminal states

    /// Optional labels; empty vectors mean "use the index".
    std::vector<std::string> state_names;
    std::vector<std::string> human_action_names;
    std::vector<std::string> robot_action_names;

    /// (a_H, a_R) pairs that count as interference; absent when undeclared.
    std::optional<std::vector<std::pair<std::size_t, std::size_t>>> conflicts;

    std::size_t row(std::size_t s, std::size_t a_h, std::size_t a_r) const {
        return ((s * num_human_actions + a_h) * num_robot_actions + a_r) * num_states;
    }
    std::size_t index(std::size_t s, std::size_t a_h, std::size_t a_r, std::size_t next) const {
        return row(s, a_h, a_r) + next;
    }
    double probability(std::size_t s, std::size_t a_h, std::size_t a_r, std::size_t next) const {
        return transition[index(s, a_h, a_r, next)];
    }
    bool is_terminal(std::size_t s) const { return !terminal.empty() && terminal[s]; }

    std::string human_action_name(std::size_t a) const {
        return a < human_action_names.size() ? human_action_names[a] : std::to_string(a);
    }
    std::string robot_action_name(std::size_t a) const {
        return a < robot_action_names.size() ? robot_action_names[a] : std::to_string(a);
    }
    std::string state_name(std::size_t s) const {
        return s < state_names.size() ? state_names[s] : std::to_string(s);
    }

    void validate() const {
        if (num_states == 0 || num_observations == 0 || num_human_actions == 0 || num_robot_actions == 0)
            throw ValidationError("model must have at least one state, observation and action per agent");
        if (observation_of.size() != num_states) throw ValidationError("observation map is not total");
        for (std::size_t o : observation_of)
            if (o >= num_observations) throw ValidationError("observation index out of range");
        const std::size_t n = num_states * num_human_actions * num_robot_actions * num_states;
        if (transition.size() != n || human_reward.size() != n || robot_reward.size() != n)
            throw ValidationError("transition/reward tables have the wrong size");
        if (!terminal.empty() && terminal.size() != num_states)
            throw ValidationError("terminal flags must cover every state");
        if (!(discount >= 0.0 && discount <= 1.0)) throw ValidationError("discount must lie in [0, 1]");
        if (horizon && *horizon <= 0) throw ValidationError("horizon must be positive");
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite(human_reward[i]) || !std::isfinite(robot_reward[i]))
                throw ValidationError("reward tables must be finite");
            if (!(transition[i] >= 0.0)) throw ValidationError("negative transition probability");
        }
        for (std::size_t r = 0; r < n; r += num_states) {
            double total = 0.0;
            for (std::size_t j = 0; j < num_states; ++j) total += transition[r + j];
            if (std::abs(total - 1.0) > kDistributionTolerance) {
                std::ostringstream msg;
                msg << "transition row " << r / num_states << " sums to " << total;
                throw ValidationError(msg.str());
            }
        }
        if (conflicts) {
            for (const auto& [h, r] : *conflicts)
                if (h >= num_human_actions || r >= num_robot_actions)
                    throw ValidationError("conflict relation names an unknown action");
        }
    }

    /// Zero-filled tables of the right size for the given dimensions.
    static PomdpModel allocate(std::size_t states, std::size_t observations, std::size_t human_actions,
                               std::size_t robot_actions) {
        PomdpModel m;
        m.num_states = states;
        m.num_observations = observations;
        m.num_human_actions = human_actions;
        m.num_robot_actions = robot_actions;
        m.observation_of.assign(states, 0);
        const std::size_t n = states * human_actions * robot_actions * states;
        m.transition.assign(n, 0.0);
        m.human_reward.assign(n, 0.0);
        m.robot_reward.assign(n, 0.0);
        return m;
    }
};

/// P(a_R | s), one row per state.
struct RobotActionModel {
    std::size_t num_robot_actions = 0;
    std::vector<double> probabilities;  ///< row-major (s, a_R)

    double operator()(std::size_t s, std::size_t a_r) const {
        return probabilities[s * num_robot_actions + a_r];
    }

    void validate(const PomdpModel& model) const {
        if (num_robot_actions != model.num_robot_actions ||
            probabilities.size() != model.num_states * model.num_robot_actions)
            throw ValidationError("robot action model does not match the POMDP");
        for (std::size_t s = 0; s < model.num_states; ++s) {
            double total = 0.0;
            for (std::size_t a = 0; a < num_robot_actions; ++a) {
                const double p = (*this)(s, a);
                if (!(p >= 0.0)) throw ValidationError("negative robot action probability");
                total += p;
            }
            if (std::abs(total - 1.0) > kDistributionTolerance)
                throw ValidationError("robot action row does not sum to 1");
        }
    }
};

/// Zeroth-order theory of mind: the human assumes the robot acts uniformly.
inline RobotActionModel uniform_robot_model(const PomdpModel& model) {
    if (model.num_robot_actions == 0) throw ValidationError("model has no robot actions");
    RobotActionModel out;
    out.num_robot_actions = model.num_robot_actions;
    out.probabilities.assign(model.num_states * model.num_robot_actions,
                             1.0 / static_cast<double>(model.num_robot_actions));
    return out;
}

/// Static P(s | o), one row per observation. A row is either a distribution
/// supported on states that emit o, or all zeros (empty support).
struct BeliefOverStates {
    std::size_t num_states = 0;
    std::vector<double> probabilities;  ///< row-major (o, s)

    double operator()(std::size_t o, std::size_t s) const { return probabilities[o * num_states + s]; }

    bool has_support(std::size_t o) const {
        for (std::size_t s = 0; s < num_states; ++s)
            if ((*this)(o, s) > 0.0) return true;
        return false;
    }

    void validate(const PomdpModel& model) const {
        if (num_states != model.num_states ||
            probabilities.size() != model.num_observations * model.num_states)
            throw ValidationError("belief table does not match the POMDP");
        for (std::size_t o = 0; o < model.num_observations; ++o) {
            double total = 0.0;
            for (std::size_t s = 0; s < num_states; ++s) {
                const double p = (*this)(o, s);
                if (!(p >= 0.0)) throw ValidationError("negative belief probability");
                if (p > 0.0 && model.observation_of[s] != o)
                    throw ValidationError("belief puts mass on a state that does not emit the observation");
                total += p;
            }
            if (total != 0.0 && std::abs(total - 1.0) > kDistributionTolerance)
                throw ValidationError("belief row does not sum to 1");
        }
    }

    /// Uniform over the states that emit each observation.
    static BeliefOverStates uniform(const PomdpModel& model) {
        BeliefOverStates b;
        b.num_states = model.num_states;
        b.probabilities.assign(model.num_observations * model.num_states, 0.0);
        std::vector<std::size_t> counts(model.num_observations, 0);
        for (std::size_t s = 0; s < model.num_states; ++s) ++counts[model.observation_of[s]];
        for (std::size_t s = 0; s < model.num_states; ++s) {
            const std::size_t o = model.observation_of[s];
            b.probabilities[o * model.num_states + s] = 1.0 / static_cast<double>(counts[o]);
        }
        return b;
    }
};

/// Human state values. For finite horizons stages[h] holds the value with h
/// steps to go (stages[0] is all zeros) and values == stages.back(). States
/// with no admissible action at a stage carry -infinity.
struct ValueTable {
    std::vector<double> values;
    double residual = 0.0;
    int iterations = 0;
    std::vector<std::vector<double>> stages;

    /// Values with `steps` steps to go; discounted tables return `values`.
    std::span<const double> at_steps_to_go(int steps) const {
        if (stages.empty()) return values;
        if (steps < 0 || static_cast<std::size_t>(steps) >= stages.size())
            throw ValidationError("no value stage for the requested steps-to-go");
        return stages[static_cast<std::size_t>(steps)];
    }
};

/// Optional admissibility predicate (state, human action, steps to go).
/// Unbounded-horizon iteration passes std::numeric_limits<int>::max().
using ActionFilter = std::function<bool(std::size_t, std::size_t, int)>;

struct ValueIterationOptions {
    double tolerance = 1e-6;
    int max_iterations = 100000;
    ActionFilter admissible;
};

namespace detail {

struct Successor {
    std::size_t state;
    double weight;
};

// Robot-marginalized one-step model: for each (s, a_H) the expected immediate
// reward and the successor distribution.
struct MarginalizedModel {
    std::vector<double> immediate;                   // (s, a_H)
    std::vector<std::vector<Successor>> successors;  // (s, a_H)

    MarginalizedModel(const PomdpModel& model, const RobotActionModel& robot) {
        const std::size_t S = model.num_states, H = model.num_human_actions, R = model.num_robot_actions;
        immediate.assign(S * H, 0.0);
        successors.resize(S * H);
        std::vector<double> acc(S);
        for (std::size_t s = 0; s < S; ++s) {
            for (std::size_t h = 0; h < H; ++h) {
                std::fill(acc.begin(), acc.end(), 0.0);
                double reward = 0.0;
                for (std::size_t r = 0; r < R; ++r) {
                    const double pr = robot(s, r);
                    if (pr == 0.0) continue;
                    const std::size_t base = model.row(s, h, r);
                    for (std::size_t n = 0; n < S; ++n) {
                        const double p = model.transition[base + n];
                        if (p == 0.0) continue;
                        acc[n] += pr * p;
                        reward += pr * p * model.human_reward[base + n];
                    }
                }
                immediate[s * H + h] = reward;
                auto& succ = successors[s * H + h];
                for (std::size_t n = 0; n < S; ++n)
                    if (acc[n] > 0.0) succ.push_back({n, acc[n]});
            }
        }
    }
};

inline std::vector<double> bellman_backup(const PomdpModel& model, const MarginalizedModel& mm,
                                          std::span<const double> next, const ActionFilter& admissible,
                                          int steps_to_go) {
    const std::size_t S = model.num_states, H = model.num_human_actions;
    std::vector<double> out(S, 0.0);
    for (std::size_t s = 0; s < S; ++s) {
        if (model.is_terminal(s)) continue;
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t h = 0; h < H; ++h) {
            if (admissible && !admissible(s, h, steps_to_go)) continue;
            double q = mm.immediate[s * H + h];
            for (const auto& [n, w] : mm.successors[s * H + h]) q += model.discount * w * next[n];
            best = std::max(best, q);
        }
        out[s] = best;
    }
    return out;
}

inline double sup_norm_diff(std::span<const double> a, std::span<const double> b) {
    double r = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] == b[i]) continue;
        r = std::max(r, std::abs(a[i] - b[i]));
    }
    return r;
}

}  // namespace detail

/// Human value function under the Bellman update with the robot marginalized
/// by P(a_R | s).
///
/// With a finite horizon this is exact backward induction (discount 1 allowed,
/// tolerance ignored, residual 0). Otherwise synchronous sweeps run until the
/// sup-norm Bellman residual of the returned table is at most the tolerance.
inline ValueTable human_value_iteration(const PomdpModel& model, const RobotActionModel& robot,
                                        const ValueIterationOptions& options = {}) {
    model.validate();
    robot.validate(model);
    const detail::MarginalizedModel mm(model, robot);
    ValueTable table;

    if (model.horizon) {
        const int horizon = *model.horizon;
        table.stages.reserve(static_cast<std::size_t>(horizon) + 1);
        table.stages.emplace_back(model.num_states, 0.0);
        for (int h = 1; h <= horizon; ++h)
            table.stages.push_back(
                detail::bellman_backup(model, mm, table.stages.back(), options.admissible, h));
        table.values = table.stages.back();
        table.iterations = horizon;
        table.residual = 0.0;
        return table;
    }

    if (model.discount >= 1.0)
        throw ValidationError("undiscounted value iteration requires a finite horizon");

    std::vector<double> current(model.num_states, 0.0);
    double residual = std::numeric_limits<double>::infinity();
    for (int it = 1; it <= options.max_iterations; ++it) {
        auto next = detail::bellman_backup(model, mm, current, options.admissible,
                                           std::numeric_limits<int>::max());
        residual = detail::sup_norm_diff(next, current);
        if (residual <= options.tolerance) {
            table.values = std::move(current);
            table.residual = residual;
            table.iterations = it;
            return table;
        }
        current = std::move(next);
    }
    std::ostringstream msg;
    msg << "value iteration did not converge in " << options.max_iterations
        << " iterations (residual " << residual << ")";
    throw NumericalError(msg.str(), residual);
}

/// Sup-norm distance between a table and its Bellman backup.
inline double bellman_residual(const PomdpModel& model, const RobotActionModel& robot,
                               std::span<const double> values, const ActionFilter& admissible = {}) {
    const detail::MarginalizedModel mm(model, robot);
    const auto backed = detail::bellman_backup(model, mm, values, admissible, std::numeric_limits<int>::max());
    return detail::sup_norm_diff(backed, values);
}

/// The consequence set C(a_H) at observation o: one consequence per
/// (s, s', a_R) event with P(s|o) P(a_R|s) P(s'|s,a_H,a_R) > 0, paired with
/// the continuation value of s'.
inline Prospect consequence_set(const PomdpModel& model, const RobotActionModel& robot,
                                const BeliefOverStates& belief, std::span<const double> continuation,
                                std::size_t observation, std::size_t human_action) {
    if (observation >= model.num_observations) throw ValidationError("unknown observation");
    if (human_action >= model.num_human_actions) throw ValidationError("unknown human action");
    if (continuation.size() != model.num_states) throw ValidationError("value table does not match the POMDP");
    if (!belief.has_support(observation)) throw ValidationError("observation has empty belief support");

    std::vector<Consequence> out;
    for (std::size_t s = 0; s < model.num_states; ++s) {
        const double ps = belief(observation, s);
        if (ps == 0.0) continue;
        for (std::size_t r = 0; r < model.num_robot_actions; ++r) {
            const double pr = robot(s, r);
            if (pr == 0.0) continue;
            for (std::size_t n = 0; n < model.num_states; ++n) {
                const double p = ps * pr * model.probability(s, human_action, r, n);
                if (p == 0.0) continue;
                if (!std::isfinite(continuation[n]))
                    throw ValidationError("continuation value of state " + model.state_name(n) +
                                          " is not finite");
                out.push_back({p, continuation[n],
                               model.state_name(s) + ">" + model.state_name(n) + "|" +
                                   model.robot_action_name(r)});
            }
        }
    }
    return Prospect(std::move(out));
}

inline Prospect consequence_set(const PomdpModel& model, const RobotActionModel& robot,
                                const BeliefOverStates& belief, const ValueTable& values,
                                std::size_t observation, std::size_t human_action) {
    return consequence_set(model, robot, belief, std::span<const double>(values.values), observation,
                           human_action);
}

/// P(a_H | o) under the given human model, built from the consequence set of
/// every human action. CPT decision weights are computed over each whole set.
inline ChoiceDistribution human_policy(const PomdpModel& model, const RobotActionModel& robot,
                                       const BeliefOverStates& belief, std::span<const double> continuation,
                                       std::size_t observation, const HumanModel& human) {
    std::vector<Prospect> prospects;
    std::vector<std::string> names;
    prospects.reserve(model.num_human_actions);
    for (std::size_t a = 0; a < model.num_human_actions; ++a) {
        prospects.push_back(consequence_set(model, robot, belief, continuation, observation, a));
        names.push_back(model.human_action_name(a));
    }
    const auto u = utilities(prospects, human);
    return choice_probabilities(std::move(names), u, rationality(human));
}

inline ChoiceDistribution human_policy(const PomdpModel& model, const RobotActionModel& robot,
                                       const BeliefOverStates& belief, const ValueTable& values,
                                       std::size_t observation, const HumanModel& human) {
    return human_policy(model, robot, belief, std::span<const double>(values.values), observation, human);
}

}  // namespace riskaware
