#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "riskaware/choice.hpp"
#include "riskaware/errors.hpp"
#include "riskaware/pomdp.hpp"
#include "riskaware/simulation.hpp"

namespace riskaware {

/// P(a_H | o) as seen by the robot.
using HumanPolicyFn = std::function<std::vector<double>(std::size_t observation)>;

/// Robot policy and expected return per observation. Stage h (1-based) holds
/// the decision with h steps to go; policy()/values() are the full-horizon stage.
struct RobotPlan {
    std::vector<std::vector<std::size_t>> stage_policy;
    std::vector<std::vector<double>> stage_values;
    std::string human_model;

    int horizon() const { return static_cast<int>(stage_policy.size()); }
    const std::vector<std::size_t>& policy() const { return stage_policy.back(); }
    const std::vector<double>& values() const { return stage_values.back(); }
    const std::vector<std::size_t>& policy_at(int steps_to_go) const {
        return stage_policy.at(static_cast<std::size_t>(steps_to_go - 1));
    }
};

namespace detail {

// Observations whose belief support contains a non-terminal state.
inline std::vector<bool> live_observations(const PomdpModel& model, const BeliefOverStates& belief) {
    std::vector<bool> live(model.num_observations, false);
    for (std::size_t o = 0; o < model.num_observations; ++o)
        for (std::size_t s = 0; s < model.num_states; ++s)
            if (belief(o, s) > 0.0 && !model.is_terminal(s)) live[o] = true;
    return live;
}

}  // namespace detail

/// Finite-horizon backward induction over observations:
/// Q_h(o, a_R) = sum_s P(s|o) sum_aH P(a_H|o) sum_s' T(s'|s,a_H,a_R) [r_R + discount V_{h-1}(O(s'))].
/// Terminal states contribute nothing. Ties go to the lowest robot action index.
inline RobotPlan robot_best_response(const PomdpModel& model, const BeliefOverStates& belief,
                                     const HumanPolicyFn& human, int horizon) {
    if (horizon < 1) throw ValidationError("planning horizon must be at least 1");
    model.validate();
    belief.validate(model);
    const std::size_t O = model.num_observations;
    const auto live = detail::live_observations(model, belief);

    std::vector<std::vector<double>> human_probs(O);
    for (std::size_t o = 0; o < O; ++o) {
        if (!live[o]) continue;
        human_probs[o] = human(o);
        if (human_probs[o].size() != model.num_human_actions)
            throw ValidationError("human policy returned the wrong number of actions");
        double total = 0.0;
        for (double p : human_probs[o]) {
            if (!(p >= 0.0)) throw ValidationError("human policy returned a negative probability");
            total += p;
        }
        if (std::abs(total - 1.0) > kDistributionTolerance)
            throw ValidationError("human policy at observation " + std::to_string(o) + " does not sum to 1");
    }

    RobotPlan plan;
    std::vector<double> next(O, 0.0);
    for (int h = 1; h <= horizon; ++h) {
        std::vector<std::size_t> policy(O, 0);
        std::vector<double> value(O, 0.0);
        for (std::size_t o = 0; o < O; ++o) {
            if (!live[o]) continue;
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t r = 0; r < model.num_robot_actions; ++r) {
                double q = 0.0;
                for (std::size_t s = 0; s < model.num_states; ++s) {
                    const double ps = belief(o, s);
                    if (ps == 0.0 || model.is_terminal(s)) continue;
                    for (std::size_t a = 0; a < model.num_human_actions; ++a) {
                        const double pa = human_probs[o][a];
                        if (pa == 0.0) continue;
                        const std::size_t row = model.row(s, a, r);
                        for (std::size_t n = 0; n < model.num_states; ++n) {
                            const double pn = model.transition[row + n];
                            if (pn == 0.0) continue;
                            q += ps * pa * pn *
                                 (model.robot_reward[row + n] + model.discount * next[model.observation_of[n]]);
                        }
                    }
                }
                if (q > best) {
                    best = q;
                    policy[o] = r;
                }
            }
            value[o] = best;
        }
        plan.stage_policy.push_back(std::move(policy));
        plan.stage_values.push_back(value);
        next = std::move(value);
    }
    return plan;
}

struct InteractionSummary {
    double mean_robot_return = 0.0;
    double interference_rate = 0.0;  ///< conflicting steps / all steps
    std::size_t episodes = 0;
    std::size_t steps = 0;
};

/// Seeded rollouts of the plan against a sampled human. Each episode draws
/// from its own generator seeded with (seed, episode), and a rollout ends at
/// a terminal state or after the plan's horizon.
inline InteractionSummary simulate_interaction(const PomdpModel& model, const RobotPlan& plan,
                                               const HumanPolicyFn& true_human, std::size_t episodes,
                                               std::uint64_t seed, std::size_t initial_state = 0) {
    if (!model.conflicts) throw ValidationError("interference requires a declared conflict relation");
    if (episodes == 0) throw ValidationError("at least one episode is required");
    if (initial_state >= model.num_states) throw ValidationError("initial state out of range");
    std::vector<std::vector<bool>> conflict(model.num_human_actions,
                                            std::vector<bool>(model.num_robot_actions, false));
    for (const auto& [h, r] : *model.conflicts) conflict.at(h).at(r) = true;

    std::vector<std::vector<double>> human_probs(model.num_observations);
    double total_return = 0.0;
    std::size_t steps = 0, conflicts = 0;
    for (std::size_t e = 0; e < episodes; ++e) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(e), static_cast<std::uint32_t>(e >> 32)};
        std::mt19937_64 rng(seq);
        std::size_t s = initial_state;
        double ret = 0.0, scale = 1.0;
        for (int h = plan.horizon(); h >= 1 && !model.is_terminal(s); --h) {
            const std::size_t o = model.observation_of[s];
            if (human_probs[o].empty()) human_probs[o] = true_human(o);
            const std::size_t r = plan.policy_at(h)[o];
            const std::size_t a = sample_index(human_probs[o], rng);
            const std::size_t row = model.row(s, a, r);
            const std::size_t n = sample_index(
                std::span<const double>(model.transition).subspan(row, model.num_states), rng);
            ret += scale * model.robot_reward[row + n];
            scale *= model.discount;
            ++steps;
            if (conflict[a][r]) ++conflicts;
            s = n;
        }
        total_return += ret;
    }
    InteractionSummary out;
    out.episodes = episodes;
    out.steps = steps;
    out.mean_robot_return = total_return / static_cast<double>(episodes);
    out.interference_rate = steps ? static_cast<double>(conflicts) / static_cast<double>(steps) : 0.0;
    return out;
}

/// Collaborative cup stacking as an interaction POMDP. From `start` the human
/// builds a tower (stable or unstable) while the robot reaches for one of the
/// two cups; grabbing the cup of the tower the human is building interferes.
/// The tower pays out on the following step (20, 105 with probability 0.2,
/// or 0), so the human's continuation values carry the scores. The robot
/// earns 1 for reaching for the other cup.
inline PomdpModel cup_stacking_interaction_model() {
    enum : std::size_t { start, stable_built, tower_stands, tower_collapsed, done, kStates };
    PomdpModel m = PomdpModel::allocate(kStates, kStates, 2, 2);
    m.discount = 1.0;
    m.horizon = 2;
    m.state_names = {"start", "stable_built", "tower_stands", "tower_collapsed", "done"};
    m.human_action_names = {"stable", "unstable"};
    m.robot_action_names = {"grab_stable_cup", "grab_unstable_cup"};
    m.terminal = {false, false, false, false, true};
    m.conflicts = std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}, {1, 1}};
    for (std::size_t s = 0; s < kStates; ++s) m.observation_of[s] = s;
    for (std::size_t r = 0; r < 2; ++r) {
        m.transition[m.index(start, 0, r, stable_built)] = 1.0;
        m.transition[m.index(start, 1, r, tower_stands)] = 0.2;
        m.transition[m.index(start, 1, r, tower_collapsed)] = 0.8;
        for (std::size_t a = 0; a < 2; ++a) {
            const double score = a == r ? 0.0 : 1.0;
            for (std::size_t n = 0; n < kStates; ++n) m.robot_reward[m.index(start, a, r, n)] = score;
            m.transition[m.index(stable_built, a, r, done)] = 1.0;
            m.human_reward[m.index(stable_built, a, r, done)] = 20.0;
            m.transition[m.index(tower_stands, a, r, done)] = 1.0;
            m.human_reward[m.index(tower_stands, a, r, done)] = 105.0;
            m.transition[m.index(tower_collapsed, a, r, done)] = 1.0;
            m.transition[m.index(done, a, r, done)] = 1.0;
        }
    }
    m.validate();
    return m;
}

/// Fully observed belief: P(s | O(s)) = 1. Requires an injective observation map.
inline BeliefOverStates identity_belief(const PomdpModel& model) {
    BeliefOverStates b;
    b.num_states = model.num_states;
    b.probabilities.assign(model.num_observations * model.num_states, 0.0);
    for (std::size_t s = 0; s < model.num_states; ++s) {
        const std::size_t o = model.observation_of[s];
        if (b.probabilities[o * model.num_states + s] != 0.0)
            throw ValidationError("identity belief needs one state per observation");
        for (std::size_t t = 0; t < model.num_states; ++t)
            if (t != s && b.probabilities[o * model.num_states + t] != 0.0)
                throw ValidationError("identity belief needs one state per observation");
        b.probabilities[o * model.num_states + s] = 1.0;
    }
    return b;
}

/// The robot's view of a human model: P(a_H | o) from the consequence sets
/// under a uniform robot model, averaged over the given parameter draws.
/// The continuation is the human value stage one step shorter than `steps_to_go`.
inline HumanPolicyFn model_human_policy(const PomdpModel& model, const BeliefOverStates& belief,
                                        std::vector<HumanModel> draws, int steps_to_go) {
    if (draws.empty()) throw ValidationError("human policy needs at least one parameter draw");
    const RobotActionModel robot = uniform_robot_model(model);
    ValueTable values = human_value_iteration(model, robot);
    return [model, belief, robot, values = std::move(values), draws = std::move(draws),
            steps_to_go](std::size_t o) {
        const auto cont = values.at_steps_to_go(steps_to_go - 1);
        std::vector<double> out(model.num_human_actions, 0.0);
        for (const auto& d : draws) {
            const auto p = human_policy(model, robot, belief, cont, o, d).probabilities;
            for (std::size_t a = 0; a < out.size(); ++a) out[a] += p[a];
        }
        for (double& x : out) x /= static_cast<double>(draws.size());
        return out;
    };
}

/// A fixed P(a_H) used at every observation.
inline HumanPolicyFn fixed_human_policy(std::vector<double> probabilities) {
    return [p = std::move(probabilities)](std::size_t) { return p; };
}

}  // namespace riskaware
