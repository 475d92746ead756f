#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <vector>

#include "riskaware/errors.hpp"
#include "riskaware/prospect.hpp"

namespace riskaware {

/// Lower bound on the probability-weighting exponents. Below roughly 0.28 the
/// weighting function stops being monotone, so exponents are kept above this.
inline constexpr double kGammaMin = 0.3;

/// Boltzmann-rational choice over expected rewards.
struct NoisyRationalParams {
    double theta = 1.0;  ///< rationality coefficient; 0 is uniform choice

    void validate() const {
        if (!std::isfinite(theta) || theta < 0.0)
            throw ValidationError("noisy-rational theta must be finite and >= 0");
    }

    friend bool operator==(const NoisyRationalParams&, const NoisyRationalParams&) = default;
};

/// Cumulative-prospect-theory parameters.
///
/// alpha, beta curve gains and losses; lambda scales losses; gamma_w and
/// delta_w are the probability-weighting exponents for gains and losses;
/// theta is the rationality coefficient of the final softmax.
struct CptParams {
    double alpha = 1.0;
    double beta = 1.0;
    double lambda = 1.0;
    double gamma_w = 1.0;
    double delta_w = 1.0;
    double theta = 1.0;

    /// Parameters under which CPT reduces to the noisy-rational model.
    static CptParams identity(double theta) { return {1.0, 1.0, 1.0, 1.0, 1.0, theta}; }

    void validate() const {
        auto fail = [](const char* name, double value) {
            std::ostringstream msg;
            msg << "CPT parameter " << name << " out of range: " << value;
            throw ValidationError(msg.str());
        };
        if (!std::isfinite(alpha) || alpha <= 0.0 || alpha > 1.0) fail("alpha", alpha);
        if (!std::isfinite(beta) || beta <= 0.0 || beta > 1.0) fail("beta", beta);
        if (!std::isfinite(lambda) || lambda < 0.0) fail("lambda", lambda);
        if (!std::isfinite(gamma_w) || gamma_w < kGammaMin || gamma_w > 1.0) fail("gamma_w", gamma_w);
        if (!std::isfinite(delta_w) || delta_w < kGammaMin || delta_w > 1.0) fail("delta_w", delta_w);
        if (!std::isfinite(theta) || theta < 0.0) fail("theta", theta);
    }

    friend bool operator==(const CptParams&, const CptParams&) = default;
};

/// Reward transform v: R^alpha on gains (R >= 0), -lambda (-R)^beta on losses.
inline double value_transform(double reward, const CptParams& params) {
    if (reward >= 0.0) return std::pow(reward, params.alpha);
    return -params.lambda * std::pow(-reward, params.beta);
}

/// Probability weighting p^g / (p^g + (1-p)^g)^(1/g).
inline double weight(double p, double exponent) {
    if (!(exponent >= kGammaMin && exponent <= 1.0)) {
        std::ostringstream msg;
        msg << "weighting exponent " << exponent << " outside [" << kGammaMin << ", 1]";
        throw ValidationError(msg.str());
    }
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("weighting probability outside [0, 1]");
    if (p == 0.0) return 0.0;
    if (p == 1.0) return 1.0;
    const double num = std::pow(p, exponent);
    const double den = std::pow(num + std::pow(1.0 - p, exponent), 1.0 / exponent);
    return num / den;
}

struct DecisionWeights {
    std::vector<double> unnormalized;  ///< pi, aligned with canonical order
    std::vector<double> normalized;    ///< pi / sum(pi)
    std::size_t gain_count = 0;
    std::size_t loss_count = 0;
};

/// Rank-dependent decision weights of a canonical prospect.
///
/// Gains (R >= 0) occupy the head of a canonical prospect. Their weights are
/// cumulative differences of w+ taken from the best outcome downward; losses
/// use w- from the worst outcome upward.
inline DecisionWeights decision_weights(const Prospect& prospect, const CptParams& params) {
    if (!prospect.is_canonical())
        throw ValidationError("decision_weights requires a canonical (reward-sorted) prospect");

    const auto cs = prospect.consequences();
    const std::size_t k = cs.size();
    DecisionWeights out;
    out.unnormalized.assign(k, 0.0);

    std::size_t n = 0;
    while (n < k && cs[n].reward >= 0.0) ++n;
    for (std::size_t i = n; i < k; ++i) {
        if (cs[i].reward >= 0.0) throw ValidationError("gains are not contiguous at the head");
    }
    out.gain_count = n;
    out.loss_count = k - n;

    auto clamp01 = [](double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); };

    double cumulative = 0.0;
    double previous = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        cumulative += cs[i].probability;
        const double current = weight(clamp01(cumulative), params.gamma_w);
        out.unnormalized[i] = current - previous;
        previous = current;
    }

    cumulative = 0.0;
    previous = 0.0;
    for (std::size_t i = k; i-- > n;) {
        cumulative += cs[i].probability;
        const double current = weight(clamp01(cumulative), params.delta_w);
        out.unnormalized[i] = current - previous;
        previous = current;
    }

    double total = 0.0;
    for (double x : out.unnormalized) total += x;
    if (!(total > 0.0)) throw ValidationError("decision weights have zero total mass");
    out.normalized.resize(k);
    for (std::size_t i = 0; i < k; ++i) out.normalized[i] = out.unnormalized[i] / total;
    return out;
}

namespace detail {

// Same arithmetic as decision_weights, without materializing the weight vectors.
inline double cpt_utility_canonical(std::span<const Consequence> cs, const CptParams& params) {
    const std::size_t k = cs.size();
    std::size_t n = 0;
    while (n < k && cs[n].reward >= 0.0) ++n;

    auto clamp01 = [](double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); };
    double weighted = 0.0;
    double mass = 0.0;

    double cumulative = 0.0;
    double previous = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        cumulative += cs[i].probability;
        const double current = weight(clamp01(cumulative), params.gamma_w);
        const double pi = current - previous;
        previous = current;
        mass += pi;
        weighted += pi * value_transform(cs[i].reward, params);
    }
    cumulative = 0.0;
    previous = 0.0;
    for (std::size_t i = k; i-- > n;) {
        cumulative += cs[i].probability;
        const double current = weight(clamp01(cumulative), params.delta_w);
        const double pi = current - previous;
        previous = current;
        mass += pi;
        weighted += pi * value_transform(cs[i].reward, params);
    }
    if (!(mass > 0.0)) throw ValidationError("decision weights have zero total mass");
    return weighted / mass;
}

}  // namespace detail

/// Weighted sum of transformed rewards under normalized decision weights.
/// Non-canonical prospects are canonicalized first.
inline double cpt_utility(const Prospect& prospect, const CptParams& params) {
    if (prospect.is_canonical()) return detail::cpt_utility_canonical(prospect.consequences(), params);
    const Prospect canonical = canonicalize(prospect);
    return detail::cpt_utility_canonical(canonical.consequences(), params);
}

}  // namespace riskaware
