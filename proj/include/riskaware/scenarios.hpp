#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "riskaware/errors.hpp"
#include "riskaware/prospect.hpp"

namespace riskaware {

struct ScenarioAction {
    std::string id;
    Prospect prospect;
};

/// A one-shot decision problem: each action carries its own prospect.
struct ScenarioSpec {
    std::string name;
    std::vector<ScenarioAction> actions;
    std::string description;

    void validate() const {
        if (actions.size() < 2) throw ValidationError("scenario '" + name + "' needs at least two actions");
        for (std::size_t i = 0; i < actions.size(); ++i)
            for (std::size_t j = i + 1; j < actions.size(); ++j)
                if (actions[i].id == actions[j].id)
                    throw ValidationError("scenario '" + name + "' repeats action id '" + actions[i].id + "'");
    }

    const ScenarioAction& action(std::string_view id) const {
        for (const auto& a : actions)
            if (a.id == id) return a;
        throw ValidationError("scenario '" + name + "' has no action '" + std::string(id) + "'");
    }

    std::vector<Prospect> prospects() const {
        std::vector<Prospect> out;
        for (const auto& a : actions) out.push_back(a.prospect);
        return out;
    }

    std::vector<std::string> action_ids() const {
        std::vector<std::string> out;
        for (const auto& a : actions) out.push_back(a.id);
        return out;
    }
};

enum class Risk { high, low };

/// Default fine for returning the rental car late. Not a reported value; a
/// repository default chosen so that Low risk makes accelerating optimal.
inline constexpr double kDefaultStopCost = -100.0;
inline constexpr double kDefaultMakeLightReward = 0.0;
inline constexpr double kDefaultTicketCost = -500.0;

/// Yellow-light decision: accelerate risks the red-light ticket with
/// probability 0.95 (High) or 0.05 (Low); stopping pays the late fine.
inline ScenarioSpec driving_scenario(Risk risk, double ticket_cost = kDefaultTicketCost,
                                     double stop_cost = kDefaultStopCost,
                                     double make_light_reward = kDefaultMakeLightReward) {
    const double p_red = risk == Risk::high ? 0.95 : 0.05;
    ScenarioSpec s;
    s.name = risk == Risk::high ? "driving_high" : "driving_low";
    s.description = std::string("Yellow light while returning a rental car; red light with probability ") +
                    (risk == Risk::high ? "0.95" : "0.05") +
                    ". Stop cost and make-light reward are repository defaults.";
    s.actions.push_back({"accelerate", Prospect(std::vector<Consequence>{
                                           {p_red, ticket_cost, "red_light_ticket"},
                                           {1.0 - p_red, make_light_reward, "made_light"}})});
    s.actions.push_back({"stop", Prospect(std::vector<Consequence>{{1.0, stop_cost, "late_return"}})});
    s.validate();
    return s;
}

/// Collaborative cup stacking: the stable tower pays 20 surely, the unstable
/// one pays 105 but collapses 80% of the time.
inline ScenarioSpec cup_stacking_scenario() {
    ScenarioSpec s;
    s.name = "cup_stacking";
    s.description = "Stable tower: 20 points, never falls. Unstable tower: 105 points, collapses 80% of the time.";
    s.actions.push_back({"stable", Prospect(std::vector<Consequence>{{1.0, 20.0, "stable_tower"}})});
    s.actions.push_back({"unstable", Prospect(std::vector<Consequence>{{0.2, 105.0, "tower_stands"},
                                                                       {0.8, 0.0, "tower_collapses"}})});
    s.validate();
    return s;
}

/// Two certain rewards `gap` apart; the first action is optimal.
inline ScenarioSpec baseline_far_apart_scenario(double gap = 100.0) {
    if (!(gap > 0.0)) throw ValidationError("baseline gap must be positive");
    ScenarioSpec s;
    s.name = "baseline_far_apart";
    s.description = "Sanity check with certain rewards far apart.";
    s.actions.push_back({"optimal", Prospect(std::vector<Consequence>{{1.0, gap, "high"}})});
    s.actions.push_back({"suboptimal", Prospect(std::vector<Consequence>{{1.0, 0.0, "low"}})});
    s.validate();
    return s;
}

inline std::vector<std::string> builtin_scenario_names() {
    return {"driving_high", "driving_low", "cup_stacking", "baseline_far_apart"};
}

inline ScenarioSpec builtin_scenario(std::string_view name) {
    if (name == "driving_high") return driving_scenario(Risk::high);
    if (name == "driving_low") return driving_scenario(Risk::low);
    if (name == "cup_stacking") return cup_stacking_scenario();
    if (name == "baseline_far_apart") return baseline_far_apart_scenario();
    throw ValidationError("unknown scenario '" + std::string(name) + "'");
}

}  // namespace riskaware
