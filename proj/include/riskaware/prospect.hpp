#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "riskaware/errors.hpp"

namespace riskaware {

/// Tolerance on the total probability mass of a prospect.
inline constexpr double kProbabilityTolerance = 1e-6;

/// One possible outcome of an action.
struct Consequence {
    double probability = 0.0;
    double reward = 0.0;
    std::string tag;

    friend bool operator==(const Consequence&, const Consequence&) = default;
};

/// A finite set of (probability, reward) consequences attached to one action.
///
/// Construction validates the distribution: at least one consequence, every
/// probability in [0, 1], finite rewards, and a total mass of 1 within
/// kProbabilityTolerance. Zero-probability consequences are allowed.
class Prospect {
public:
    Prospect() = default;

    explicit Prospect(std::vector<Consequence> consequences)
        : consequences_(std::move(consequences)) {
        validate();
    }

    Prospect(std::initializer_list<std::pair<double, double>> pairs) {
        consequences_.reserve(pairs.size());
        for (const auto& [p, r] : pairs) consequences_.push_back({p, r, {}});
        validate();
    }

    std::span<const Consequence> consequences() const noexcept { return consequences_; }
    std::size_t size() const noexcept { return consequences_.size(); }
    const Consequence& operator[](std::size_t i) const { return consequences_[i]; }

    /// True when rewards are in non-increasing order.
    bool is_canonical() const noexcept {
        return std::is_sorted(consequences_.begin(), consequences_.end(),
                              [](const Consequence& a, const Consequence& b) {
                                  return a.reward > b.reward;
                              });
    }

    friend bool operator==(const Prospect&, const Prospect&) = default;

private:
    void validate() const {
        if (consequences_.empty()) throw ValidationError("prospect has no consequences");
        double total = 0.0;
        for (const auto& c : consequences_) {
            if (!(c.probability >= 0.0 && c.probability <= 1.0 + kProbabilityTolerance)) {
                std::ostringstream msg;
                msg << "consequence probability out of range: " << c.probability;
                throw ValidationError(msg.str());
            }
            if (!std::isfinite(c.reward)) throw ValidationError("consequence reward is not finite");
            total += c.probability;
        }
        if (std::abs(total - 1.0) > kProbabilityTolerance) {
            std::ostringstream msg;
            msg << "prospect probabilities sum to " << total << ", expected 1";
            throw ValidationError(msg.str());
        }
    }

    std::vector<Consequence> consequences_;
};

/// Sorts consequences by reward, best first. Ties keep their input order and
/// probabilities and tags travel with their rewards.
inline Prospect canonicalize(const Prospect& prospect) {
    std::vector<Consequence> sorted(prospect.consequences().begin(), prospect.consequences().end());
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const Consequence& a, const Consequence& b) { return a.reward > b.reward; });
    return Prospect(std::move(sorted));
}

/// Sum of p * R over all consequences.
inline double expected_reward(const Prospect& prospect) {
    double total = 0.0;
    for (const auto& c : prospect.consequences()) total += c.probability * c.reward;
    return total;
}

}  // namespace riskaware
