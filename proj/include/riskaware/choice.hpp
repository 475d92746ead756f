#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "riskaware/cpt.hpp"
#include "riskaware/errors.hpp"
#include "riskaware/prospect.hpp"

namespace riskaware {

/// Probability of each available action, in a fixed action order.
struct ChoiceDistribution {
    std::vector<std::string> actions;
    std::vector<double> probabilities;

    double probability_of(std::string_view action) const {
        for (std::size_t i = 0; i < actions.size(); ++i)
            if (actions[i] == action) return probabilities[i];
        throw ValidationError("action '" + std::string(action) + "' not in distribution");
    }

    friend bool operator==(const ChoiceDistribution&, const ChoiceDistribution&) = default;
};

/// Softmax with inverse temperature theta. The maximum utility is subtracted
/// first, so a uniform shift of the utilities leaves the result bit-identical.
inline std::vector<double> softmax(std::span<const double> utilities, double theta) {
    if (utilities.empty()) throw ValidationError("softmax over an empty action set");
    const double top = *std::max_element(utilities.begin(), utilities.end());
    std::vector<double> out(utilities.size());
    double total = 0.0;
    for (std::size_t i = 0; i < utilities.size(); ++i) {
        out[i] = std::exp(theta * (utilities[i] - top));
        total += out[i];
    }
    for (double& p : out) p /= total;
    return out;
}

/// log softmax(u)[index], computed with the same stabilizer as softmax().
inline double log_softmax_at(std::span<const double> utilities, double theta, std::size_t index) {
    const double top = *std::max_element(utilities.begin(), utilities.end());
    double total = 0.0;
    for (double u : utilities) total += std::exp(theta * (u - top));
    return theta * (utilities[index] - top) - std::log(total);
}

inline ChoiceDistribution choice_probabilities(std::vector<std::string> actions,
                                               std::span<const double> utilities, double theta) {
    if (actions.size() != utilities.size())
        throw ValidationError("action labels and utilities differ in length");
    for (double u : utilities)
        if (!std::isfinite(u)) throw ValidationError("utility is not finite");
    if (!std::isfinite(theta) || theta < 0.0) throw ValidationError("theta must be finite and >= 0");
    return {std::move(actions), softmax(utilities, theta)};
}

enum class ModelKind { noisy_rational, cpt };

inline std::string_view to_string(ModelKind kind) {
    return kind == ModelKind::noisy_rational ? "nr" : "cpt";
}

inline ModelKind parse_model_kind(std::string_view name) {
    if (name == "nr" || name == "noisy_rational") return ModelKind::noisy_rational;
    if (name == "cpt" || name == "risk_aware") return ModelKind::cpt;
    throw ValidationError("unknown model kind '" + std::string(name) + "'");
}

/// A parameterized human decision model.
using HumanModel = std::variant<NoisyRationalParams, CptParams>;

inline ModelKind kind_of(const HumanModel& model) {
    return std::holds_alternative<NoisyRationalParams>(model) ? ModelKind::noisy_rational
                                                              : ModelKind::cpt;
}

inline double rationality(const HumanModel& model) {
    return std::visit([](const auto& p) { return p.theta; }, model);
}

/// Utility the model assigns to a prospect: expected reward for the
/// noisy-rational model, CPT value for the risk-aware one.
inline double utility(const Prospect& prospect, const HumanModel& model) {
    if (const auto* cpt = std::get_if<CptParams>(&model)) return cpt_utility(prospect, *cpt);
    return expected_reward(prospect);
}

inline std::vector<double> utilities(std::span<const Prospect> prospects, const HumanModel& model) {
    std::vector<double> out;
    out.reserve(prospects.size());
    for (const auto& p : prospects) out.push_back(utility(p, model));
    return out;
}

/// Choice probabilities over actions whose consequences are given as prospects.
inline std::vector<double> choice_probabilities(std::span<const Prospect> prospects,
                                                const HumanModel& model) {
    const auto u = utilities(prospects, model);
    return softmax(u, rationality(model));
}

}  // namespace riskaware
