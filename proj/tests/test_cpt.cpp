#include <gtest/gtest.h>

#include <random>

#include "riskaware/cpt.hpp"
#include "riskaware/errors.hpp"

using namespace riskaware;

namespace {

// Reference values below were evaluated with 40-digit arithmetic (mpmath)
// directly from the formulas, independently of this library.
constexpr double kWeight01_061 = 0.18630256637717415;
constexpr double kPi3[3] = {0.29324936491206866, 0.16411902692128241, 0.45736839183335107};
constexpr double kPi3Sum = 0.91473678366670214;
constexpr double kPiBar3[3] = {0.32058333079881742, 0.17941666920118258, 0.5};

CptParams with_weights(double g, double d) {
    CptParams p;
    p.gamma_w = g;
    p.delta_w = d;
    return p;
}

}  // namespace

TEST(ValueTransform, IdentityOnGainsAndLosses) {
    EXPECT_EQ(value_transform(5.0, CptParams{}), 5.0);
    EXPECT_EQ(value_transform(-5.0, CptParams{}), -5.0);
}

TEST(ValueTransform, LossAversionReference) {
    CptParams p;
    p.lambda = 2.25;
    p.beta = 0.5;
    EXPECT_NEAR(value_transform(-4.0, p), -4.5, 1e-15);
}

TEST(ValueTransform, ZeroIsAGain) {
    CptParams p;
    p.lambda = 3.0;
    p.alpha = 0.5;
    EXPECT_EQ(value_transform(0.0, p), 0.0);
}

TEST(ValueTransform, MonotoneForRandomParameters) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 200; ++t) {
        CptParams p{0.05 + 0.95 * u(rng), 0.05 + 0.95 * u(rng), 10.0 * u(rng), 1.0, 1.0, 1.0};
        double prev = value_transform(-50.0, p);
        for (double r = -49.5; r <= 50.0; r += 0.5) {
            const double v = value_transform(r, p);
            EXPECT_GE(v, prev);
            prev = v;
        }
    }
}

TEST(Weight, IdentityExponent) { EXPECT_DOUBLE_EQ(weight(0.5, 1.0), 0.5); }

TEST(Weight, Endpoints) {
    for (double g : {kGammaMin, 0.5, 0.61, 0.9, 1.0}) {
        EXPECT_EQ(weight(0.0, g), 0.0);
        EXPECT_EQ(weight(1.0, g), 1.0);
    }
}

TEST(Weight, HighPrecisionReference) { EXPECT_NEAR(weight(0.1, 0.61), kWeight01_061, 1e-15); }

TEST(Weight, RejectsExponentBelowFloor) {
    EXPECT_THROW(weight(0.5, 0.29), ValidationError);
    EXPECT_THROW(weight(0.5, 1.01), ValidationError);
    EXPECT_THROW(weight(1.5, 0.5), ValidationError);
}

TEST(Weight, StrictlyIncreasing) {
    for (double g : {kGammaMin, 0.4, 0.61, 0.8, 1.0}) {
        double prev = weight(0.0, g);
        for (int i = 1; i <= 1000; ++i) {
            const double w = weight(i / 1000.0, g);
            EXPECT_GT(w, prev) << "g=" << g << " p=" << i / 1000.0;
            prev = w;
        }
    }
}

TEST(DecisionWeights, Singleton) {
    const auto w = decision_weights(Prospect{{1.0, 10.0}}, with_weights(0.5, 0.5));
    ASSERT_EQ(w.normalized.size(), 1u);
    EXPECT_DOUBLE_EQ(w.normalized[0], 1.0);
}

TEST(DecisionWeights, IdentityWeightingReturnsProbabilities) {
    const Prospect p = canonicalize(Prospect{{0.1, 4.0}, {0.3, -2.0}, {0.25, 0.0}, {0.35, 7.0}});
    const auto w = decision_weights(p, CptParams{});
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(w.normalized[i], p[i].probability, 1e-15);
}

TEST(DecisionWeights, MixedProspectReference) {
    const Prospect p{{0.25, 8.0}, {0.25, 2.0}, {0.5, -3.0}};
    ASSERT_TRUE(p.is_canonical());
    const auto w = decision_weights(p, with_weights(0.7, 0.7));
    EXPECT_EQ(w.gain_count, 2u);
    EXPECT_EQ(w.loss_count, 1u);
    double sum = 0.0;
    for (int i = 0; i < 3; ++i) {
        EXPECT_NEAR(w.unnormalized[i], kPi3[i], 1e-15);
        EXPECT_NEAR(w.normalized[i], kPiBar3[i], 1e-15);
        sum += w.unnormalized[i];
    }
    EXPECT_NEAR(sum, kPi3Sum, 1e-15);
}

TEST(DecisionWeights, RejectsNonCanonical) {
    EXPECT_THROW(decision_weights(Prospect{{0.5, 2.0}, {0.5, 5.0}}, CptParams{}), ValidationError);
}

TEST(CptUtility, IdentityParametersGiveExpectedReward) {
    const Prospect p{{0.2, 105.0}, {0.8, 0.0}};
    EXPECT_NEAR(cpt_utility(p, CptParams::identity(1.0)), expected_reward(p), 1e-12);
}

TEST(CptUtility, CertainReward) {
    CptParams p{0.7, 0.6, 2.0, 0.5, 0.5, 1.0};
    EXPECT_NEAR(cpt_utility(Prospect{{1.0, 20.0}}, p), std::pow(20.0, 0.7), 1e-12);
    EXPECT_NEAR(cpt_utility(Prospect{{1.0, -20.0}}, p), -2.0 * std::pow(20.0, 0.6), 1e-12);
}

TEST(CptUtility, RiskAverseParametersPreferStableTower) {
    const CptParams p{0.7, 1.0, 2.0, 0.6, 0.7, 1.0};
    // Straight-line evaluation: one gain at p=0.2 above a zero outcome.
    const double w = std::pow(0.2, 0.6) / std::pow(std::pow(0.2, 0.6) + std::pow(0.8, 0.6), 1.0 / 0.6);
    const double unstable = w * std::pow(105.0, 0.7);
    EXPECT_NEAR(cpt_utility(Prospect{{0.2, 105.0}, {0.8, 0.0}}, p), unstable, 1e-12);
    EXPECT_LT(unstable, cpt_utility(Prospect{{1.0, 20.0}}, p));
}

TEST(CptUtility, CanonicalizesInput) {
    const CptParams p{0.8, 0.9, 2.0, 0.6, 0.7, 1.0};
    const Prospect raw{{0.5, -3.0}, {0.25, 2.0}, {0.25, 8.0}};
    EXPECT_DOUBLE_EQ(cpt_utility(raw, p), cpt_utility(canonicalize(raw), p));
}

TEST(CptParamsValidation, Ranges) {
    EXPECT_NO_THROW(CptParams::identity(2.0).validate());
    EXPECT_THROW((CptParams{0.0, 1, 1, 1, 1, 1}).validate(), ValidationError);
    EXPECT_THROW((CptParams{1, 1.2, 1, 1, 1, 1}).validate(), ValidationError);
    EXPECT_THROW((CptParams{1, 1, -1, 1, 1, 1}).validate(), ValidationError);
    EXPECT_THROW((CptParams{1, 1, 1, 0.2, 1, 1}).validate(), ValidationError);
    EXPECT_THROW((CptParams{1, 1, 1, 1, 0.2, 1}).validate(), ValidationError);
    EXPECT_THROW((CptParams{1, 1, 1, 1, 1, -0.1}).validate(), ValidationError);
    EXPECT_THROW(NoisyRationalParams{-1.0}.validate(), ValidationError);
}
