#include <gtest/gtest.h>

#include <cmath>

#include "riskaware/choice.hpp"
#include "riskaware/errors.hpp"
#include "riskaware/scenarios.hpp"
#include "riskaware/simulation.hpp"

using namespace riskaware;

namespace {

double ev(const ScenarioSpec& s, const char* id) { return expected_reward(s.action(id).prospect); }

std::size_t nr_argmax(const ScenarioSpec& s) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < s.actions.size(); ++i)
        if (expected_reward(s.actions[i].prospect) > expected_reward(s.actions[best].prospect)) best = i;
    return best;
}

}  // namespace

TEST(Driving, LowRiskMakesAcceleratingOptimal) {
    const auto s = driving_scenario(Risk::low);
    EXPECT_DOUBLE_EQ(ev(s, "accelerate"), -25.0);
    EXPECT_DOUBLE_EQ(ev(s, "stop"), -100.0);
    EXPECT_EQ(s.actions[nr_argmax(s)].id, "accelerate");
}

TEST(Driving, HighRiskMakesStoppingOptimal) {
    const auto s = driving_scenario(Risk::high);
    EXPECT_DOUBLE_EQ(ev(s, "accelerate"), -475.0);
    EXPECT_EQ(s.actions[nr_argmax(s)].id, "stop");
}

TEST(Driving, RiskLevelsDifferOnlyInProbabilities) {
    const auto hi = driving_scenario(Risk::high), lo = driving_scenario(Risk::low);
    ASSERT_EQ(hi.actions.size(), lo.actions.size());
    for (std::size_t a = 0; a < hi.actions.size(); ++a) {
        ASSERT_EQ(hi.actions[a].id, lo.actions[a].id);
        const auto& p = hi.actions[a].prospect;
        const auto& q = lo.actions[a].prospect;
        ASSERT_EQ(p.size(), q.size());
        for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(p[i].reward, q[i].reward);
    }
    EXPECT_EQ(hi.actions[0].prospect[0].probability, 0.95);
    EXPECT_EQ(lo.actions[0].prospect[0].probability, 0.05);
}

TEST(Driving, EqualPayoffsAreIndifferent) {
    const auto s = driving_scenario(Risk::high, -100.0, -100.0, -100.0);
    const auto ps = s.prospects();
    for (double theta : {0.0, 0.5, 3.0, 20.0}) {
        const auto p = choice_probabilities(std::span<const Prospect>(ps), HumanModel{NoisyRationalParams{theta}});
        EXPECT_DOUBLE_EQ(p[0], 0.5);
        EXPECT_DOUBLE_EQ(p[1], 0.5);
    }
}

TEST(CupStacking, ExpectedRewards) {
    const auto s = cup_stacking_scenario();
    EXPECT_DOUBLE_EQ(ev(s, "stable"), 20.0);
    EXPECT_NEAR(ev(s, "unstable"), 21.0, 1e-12);
    EXPECT_EQ(s.actions[nr_argmax(s)].id, "unstable");
}

TEST(CupStacking, NoisyRationalCeiling) {
    const auto ps = cup_stacking_scenario().prospects();
    for (double theta = 0.0; theta <= 20.0; theta += 0.25) {
        const auto p = choice_probabilities(std::span<const Prospect>(ps), HumanModel{NoisyRationalParams{theta}});
        EXPECT_GE(p[1], 0.5);
    }
}

TEST(CupStacking, CptCanMatchSeventyFivePercentStable) {
    // Grid search over curvature, weighting and rationality.
    const auto ps = cup_stacking_scenario().prospects();
    double best_gap = 1.0;
    for (double alpha = 0.3; alpha <= 1.0; alpha += 0.05)
        for (double gamma = 0.3; gamma <= 1.0; gamma += 0.1)
            for (double theta = 0.02; theta <= 3.0; theta += 0.02) {
                const CptParams c{alpha, 1.0, 1.0, gamma, 1.0, theta};
                const auto p = choice_probabilities(std::span<const Prospect>(ps), HumanModel{c});
                best_gap = std::min(best_gap, std::abs(p[0] - 0.75));
            }
    EXPECT_LE(best_gap, 0.01);
}

TEST(Baseline, NearlyAlwaysOptimal) {
    const auto s = baseline_far_apart_scenario(100.0);
    const auto ps = s.prospects();
    const auto nr = choice_probabilities(std::span<const Prospect>(ps), HumanModel{NoisyRationalParams{1.0}});
    EXPECT_GT(nr[0], 0.99);
    const auto cpt = choice_probabilities(std::span<const Prospect>(ps), HumanModel{CptParams::identity(1.0)});
    EXPECT_EQ(nr, cpt);
}

TEST(Baseline, RationalityThresholdForNinetyThreePercent) {
    const auto ps = baseline_far_apart_scenario(100.0).prospects();
    auto p_opt = [&](double theta) {
        return choice_probabilities(std::span<const Prospect>(ps), HumanModel{NoisyRationalParams{theta}})[0];
    };
    double lo = 0.0, hi = 1.0;
    for (int i = 0; i < 100; ++i) {
        const double mid = 0.5 * (lo + hi);
        (p_opt(mid) < 0.93 ? lo : hi) = mid;
    }
    EXPECT_NEAR(hi, std::log(0.93 / 0.07) / 100.0, 1e-9);
    EXPECT_GE(p_opt(0.05), 0.93);

    const auto counts = sample_scenario_counts(baseline_far_apart_scenario(), NoisyRationalParams{0.05}, 2000, 17);
    EXPECT_GE(counts[0] / 2000.0, 0.93);
}

TEST(Scenarios, BuiltinsAreValid) {
    for (const auto& name : builtin_scenario_names()) {
        const auto s = builtin_scenario(name);
        EXPECT_EQ(s.name, name);
        EXPECT_NO_THROW(s.validate());
    }
    EXPECT_THROW(builtin_scenario("poker"), ValidationError);
    EXPECT_THROW(baseline_far_apart_scenario(0.0), ValidationError);
}

TEST(Scenarios, RejectsDuplicateOrTooFewActions) {
    ScenarioSpec s{"x", {{"a", Prospect{{1.0, 1.0}}}}, ""};
    EXPECT_THROW(s.validate(), ValidationError);
    s.actions.push_back({"a", Prospect{{1.0, 2.0}}});
    EXPECT_THROW(s.validate(), ValidationError);
}
