#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "riskaware/choice.hpp"
#include "riskaware/errors.hpp"
#include "riskaware/maze.hpp"
#include "riskaware/scenarios.hpp"

namespace riskaware {

/// Index drawn from a discrete distribution by inverse CDF on one uniform.
inline std::size_t sample_index(std::span<const double> probabilities, std::mt19937_64& rng) {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double acc = 0.0;
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        acc += probabilities[i];
        if (u < acc) return i;
    }
    return probabilities.size() - 1;
}

/// Choice counts of `n` independent draws from the model on a scenario.
inline std::vector<double> sample_scenario_counts(const ScenarioSpec& scenario, const HumanModel& model,
                                                  std::size_t n, std::uint64_t seed) {
    const auto prospects = scenario.prospects();
    const auto p = choice_probabilities(std::span<const Prospect>(prospects), model);
    std::mt19937_64 rng(seed);
    std::vector<double> counts(p.size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) counts[sample_index(p, rng)] += 1.0;
    return counts;
}

/// Choice counts matching a target distribution as closely as integers allow
/// (largest remainder).
inline std::vector<double> counts_for_distribution(std::span<const double> target, std::size_t n) {
    double total = 0.0;
    for (double t : target) {
        if (!(t >= 0.0)) throw ValidationError("target distribution has a negative entry");
        total += t;
    }
    if (std::abs(total - 1.0) > kProbabilityTolerance) throw ValidationError("target distribution does not sum to 1");
    std::vector<double> counts(target.size());
    std::vector<std::pair<double, std::size_t>> rem;
    std::size_t used = 0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double exact = target[i] * static_cast<double>(n);
        counts[i] = std::floor(exact);
        used += static_cast<std::size_t>(counts[i]);
        rem.emplace_back(exact - counts[i], i);
    }
    std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; used < n; ++k, ++used) counts[rem[k % rem.size()].second] += 1.0;
    return counts;
}

/// Choice distribution over the legal moves of a maze state.
inline ChoiceDistribution maze_move_distribution(const MazeSpec& spec, const DualValues& values,
                                                 const MazeState& state, const HumanModel& model) {
    const auto options = decision_prospects(spec, values, state);
    std::vector<std::string> actions;
    std::vector<Prospect> prospects;
    for (const auto& [d, p] : options) {
        actions.emplace_back(to_string(d));
        prospects.push_back(p);
    }
    return {std::move(actions), choice_probabilities(std::span<const Prospect>(prospects), model)};
}

/// Plays one game with moves drawn from the model. Timestamps are synthetic
/// (one second per move).
inline Trajectory simulate_trajectory(const MazeSpec& spec, const DualValues& values, const HumanModel& model,
                                      std::mt19937_64& rng, std::string session, std::string subject) {
    Trajectory t;
    t.session = std::move(session);
    t.subject = std::move(subject);
    t.fixture = spec.id;
    MazeState state = initial_state(spec);
    while (!state.finished) {
        const auto dist = maze_move_distribution(spec, values, state, model);
        const std::size_t k = dist.actions.size() == 1 ? 0 : sample_index(dist.probabilities, rng);
        const Direction d = parse_direction(dist.actions[k]);
        t.steps.push_back({state.position, d, static_cast<std::int64_t>(t.steps.size() + 1) * 1000});
        state = step(spec, state, d);
    }
    t.terminal = state.outcome;
    return t;
}

}  // namespace riskaware
