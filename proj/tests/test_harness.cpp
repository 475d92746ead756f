#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <random>
#include <sys/wait.h>

#include "riskaware/errors.hpp"
#include "riskaware/harness.hpp"
#include "riskaware/io.hpp"

using namespace riskaware;
namespace fs = std::filesystem;

namespace {

class HarnessTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("riskaware_harness_" + std::to_string(std::random_device{}()));
        fs::create_directories(dir_);
        harness_log() = nullptr;
    }
    void TearDown() override { fs::remove_all(dir_); }

    ExperimentConfig parse(json doc) { return parse_experiment_config(doc, dir_); }

    fs::path dir_;
};

json fast_fit() { return {{"chains", 8}, {"burn_in", 300}}; }

int run_cli(const std::string& args) {
    const std::string cmd = std::string(RISKAWARE_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_F(HarnessTest, ConfigNeedsSeed) {
    EXPECT_THROW(parse(json::parse(R"({"scenario": "cup_stacking", "data": {"counts": [3, 1]}})")), ValidationError);
    ConfigOverrides o;
    o.seed = 5;
    const auto cfg = parse_experiment_config(json::parse(R"({"scenario": "cup_stacking", "data": {"counts": [3, 1]}})"),
                                             dir_, o);
    EXPECT_EQ(cfg.seed, 5u);
}

TEST_F(HarnessTest, ConfigNeedsExactlyOneSource) {
    EXPECT_THROW(parse(json::parse(R"({"seed": 1, "scenario": "cup_stacking", "data": {}})")), ValidationError);
    EXPECT_THROW(parse(json::parse(R"({"seed": 1, "scenario": "cup_stacking",
                                       "data": {"counts": [3, 1], "distribution": {"probabilities": [0.5, 0.5]}}})")),
                 ValidationError);
    EXPECT_THROW(parse(json::parse(R"({"seed": 1, "scenario": "cup_stacking", "maze": "maze_game_A",
                                       "data": {"counts": [3, 1]}})")),
                 ValidationError);
    EXPECT_THROW(parse(json::parse(R"({"seed": 1, "data": {"counts": [3, 1]}})")), ValidationError);
    EXPECT_THROW(parse(json::parse(R"({"seed": 1, "scenario": "cup_stacking", "data": {"cohort": {}}})")),
                 ValidationError);
    EXPECT_THROW(parse(json::parse(R"({"seed": 1, "maze": "maze_game_A", "data": {"counts": [1, 2]}})")),
                 ValidationError);
}

TEST_F(HarnessTest, ConfigRejectsBadValues) {
    EXPECT_THROW(parse(json::parse(R"({"seed": 1, "scenario": "poker", "data": {"counts": [1, 1]}})")), ValidationError);
    EXPECT_THROW(parse(json::parse(R"({"seed": 1, "scenario": "cup_stacking", "models": "all",
                                       "data": {"counts": [1, 1]}})")),
                 ValidationError);
    EXPECT_THROW(parse(json::parse(R"({"seed": 1, "maze": "maze_game_A",
                                       "data": {"cohort": {"ranges": {"zeta": [0, 1]}}}})")),
                 ValidationError);
    EXPECT_THROW(parse(json::parse(R"({"seed": 1, "maze": "no_such_maze", "data": {"cohort": {}}})")), IoError);
    EXPECT_THROW(parse(json::parse(R"({"seed": "x", "scenario": "cup_stacking", "data": {"counts": [1, 1]}})")),
                 ValidationError);
}

TEST_F(HarnessTest, ConfigParsesDrivingAndFitOptions) {
    const auto cfg = parse(json::parse(R"({"seed": 3, "models": "cpt",
        "scenario": {"driving": {"risk": "low", "stop_cost": -50}},
        "fit": {"chains": 4, "proposal_scale": 0.1, "lambda_max": 5},
        "data": {"distribution": {"probabilities": [0.3, 0.7], "population": 10}}})"));
    ASSERT_TRUE(cfg.scenario);
    EXPECT_EQ(cfg.scenario->name, "driving_low");
    EXPECT_DOUBLE_EQ(expected_reward(cfg.scenario->action("stop").prospect), -50.0);
    EXPECT_EQ(cfg.models, std::vector<ModelKind>{ModelKind::cpt});
    EXPECT_EQ(cfg.mcmc.chains, 4);
    EXPECT_DOUBLE_EQ(cfg.mcmc.default_scale, 0.1);
    EXPECT_DOUBLE_EQ(cfg.mcmc.box.lambda_max, 5.0);
    const auto ds = scenario_datasets(cfg);
    ASSERT_EQ(ds.size(), 1u);
    EXPECT_DOUBLE_EQ(ds[0].data.total_count(), 10.0);
}

TEST_F(HarnessTest, DerivedSeedsDiffer) {
    EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
    EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
    EXPECT_EQ(derive_seed(9, 4), derive_seed(9, 4));
}

TEST_F(HarnessTest, SimulateIsDeterministic) {
    json doc = json::parse(R"({"seed": 21, "maze": {"train": "maze_game_A", "test": "maze_game_B"},
                               "data": {"cohort": {"users": 2, "games_per_user": 2}}})");
    doc["out"] = "a";
    const auto a = cmd_simulate(parse(doc));
    doc["out"] = "b";
    const auto b = cmd_simulate(parse(doc));
    ASSERT_EQ(a.size(), 4u);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].filename(), b[i].filename());
        EXPECT_EQ(read_text_file(a[i]), read_text_file(b[i]));
    }
    const auto ts = read_trajectories(dir_ / "a" / "trajectories_maze_game_B.jsonl");
    EXPECT_EQ(ts.size(), 4u);
    const auto spec = resolve_maze("maze_game_B");
    for (const auto& t : ts) EXPECT_NO_THROW(validate_trajectory(spec, t));
}

TEST_F(HarnessTest, SweepWritesOneDatasetPerValue) {
    auto doc = json::parse(R"({"seed": 2, "scenario": {"driving": {"risk": "high"}},
        "data": {"sweep": {"action": "accelerate", "values": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]}}})");
    doc["out"] = "sweep";
    const auto written = cmd_simulate(parse(doc));
    std::size_t jsonl = 0;
    for (const auto& p : written)
        if (p.extension() == ".jsonl") ++jsonl;
    EXPECT_EQ(jsonl, 9u);
    EXPECT_TRUE(fs::exists(dir_ / "sweep" / "driving_high_accelerate_0.30.jsonl"));
    const auto ds = read_choice_dataset(dir_ / "sweep" / "driving_high_accelerate_0.30.jsonl");
    const auto [pred, kl] = predict(NoisyRationalParams{0.0}, ds);
    EXPECT_DOUBLE_EQ(pred[0].empirical.probability_of("accelerate"), 0.3);
    EXPECT_THROW(scenario_datasets(parse(json::parse(R"({"seed": 2, "scenario": "cup_stacking",
        "data": {"sweep": {"action": "juggle", "values": [0.5]}}})"))),
                 ValidationError);
}

TEST_F(HarnessTest, BaselineFitsAreAccurate) {
    auto doc = json::parse(R"({"seed": 8, "scenario": "baseline_far_apart",
        "data": {"distribution": {"probabilities": [0.93, 0.07], "population": 1000}}})");
    doc["out"] = "fit";
    doc["fit"] = fast_fit();
    const auto rows = cmd_fit(parse(doc));
    ASSERT_EQ(rows.size(), 2u);
    for (const auto& r : rows) EXPECT_LT(r.fit.scores.kl, 0.05) << to_string(r.fit.kind);
    EXPECT_TRUE(fs::exists(dir_ / "fit" / "fit_nr.json"));
    EXPECT_TRUE(fs::exists(dir_ / "fit" / "fit_cpt.json"));
    const auto back = fit_from_json(read_json_file(dir_ / "fit" / "fit_cpt.json"));
    EXPECT_EQ(back.samples, rows[1].fit.samples);
    EXPECT_NE(read_text_file(dir_ / "fit" / "summary.csv").find("baseline_far_apart,cpt,"), std::string::npos);
}

TEST_F(HarnessTest, EmptyTrajectoryFileIsAValidationError) {
    atomic_write(dir_ / "empty.jsonl", "");
    const auto cfg = parse(json::parse(R"({"seed": 1, "maze": "maze_game_A",
        "data": {"trajectories": {"train": "empty.jsonl"}}})"));
    EXPECT_THROW(cmd_fit(cfg), ValidationError);
}

TEST_F(HarnessTest, EvalSkipsSubjectsWithoutTestGames) {
    CohortSource c;
    c.users = 2;
    c.games_per_user = 2;
    c.ranges = default_cohort_ranges(ModelKind::cpt);
    const auto a = resolve_maze("maze_game_A"), b = resolve_maze("maze_game_B");
    const auto data = simulate_cohort(c, a, b, 4);
    std::vector<Trajectory> test;
    for (const auto& t : data.test)
        if (t.subject == "user01") test.push_back(t);
    atomic_write(dir_ / "train.jsonl", trajectories_to_jsonl(data.train));
    atomic_write(dir_ / "test.jsonl", trajectories_to_jsonl(test));
    auto doc = json::parse(R"({"seed": 1, "maze": {"train": "maze_game_A", "test": "maze_game_B"},
        "data": {"trajectories": {"train": "train.jsonl", "test": "test.jsonl"}}})");
    doc["fit"] = fast_fit();
    doc["out"] = "eval";
    const auto report = cmd_eval_maze(parse(doc));
    ASSERT_EQ(report.users.size(), 1u);
    EXPECT_EQ(report.users[0].subject, "user01");
    EXPECT_EQ(report.skipped, std::vector<std::string>{"user02"});
    const auto saved = read_json_file(dir_ / "eval" / "eval_maze.json");
    EXPECT_EQ(saved["skipped"][0], "user02");
    EXPECT_TRUE(saved["users"][0].contains("cpt_minus_nr"));
}

TEST_F(HarnessTest, CohortParametersStayInRanges) {
    CohortSource c;
    c.users = 17;
    c.games_per_user = 1;
    c.ranges = default_cohort_ranges(ModelKind::cpt);
    const auto data = simulate_cohort(c, resolve_maze("maze_game_A"), std::nullopt, 10);
    ASSERT_EQ(data.cohort.size(), 17u);
    EXPECT_EQ(data.cohort[16].subject, "user17");
    const auto names = parameter_names(ModelKind::cpt);
    for (const auto& m : data.cohort) {
        const auto x = parameter_vector(m.ground_truth);
        for (std::size_t i = 0; i < x.size(); ++i) {
            EXPECT_GE(x[i], c.ranges.at(names[i]).first);
            EXPECT_LE(x[i], c.ranges.at(names[i]).second);
        }
    }
    EXPECT_TRUE(data.test.empty());
}

TEST_F(HarnessTest, PlanComparesModels) {
    auto doc = json::parse(R"({"seed": 4, "scenario": "cup_stacking",
        "data": {"distribution": {"probabilities": [0.75, 0.25], "population": 100}},
        "interaction": {"true_human": [0.75, 0.25], "episodes": 2000}})");
    doc["fit"] = fast_fit();
    doc["out"] = "plan";
    const auto res = cmd_plan(parse(doc));
    ASSERT_EQ(res.size(), 2u);
    EXPECT_EQ(res[0].kind, ModelKind::noisy_rational);
    EXPECT_EQ(res[0].plan.policy()[0], 0u);
    EXPECT_EQ(res[1].plan.policy()[0], 1u);
    EXPECT_LT(res[1].summary.interference_rate, res[0].summary.interference_rate);
    EXPECT_TRUE(fs::exists(dir_ / "plan" / "plan_cpt.json"));
    auto bad = doc;
    bad.erase("interaction");
    EXPECT_THROW(cmd_plan(parse(bad)), ValidationError);
}

TEST_F(HarnessTest, CliExitCodes) {
    atomic_write(dir_ / "ok.json", R"({"seed": 1, "scenario": "cup_stacking", "data": {"counts": [3, 1]}})");
    atomic_write(dir_ / "bad.json", R"({"scenario": "cup_stacking", "data": {"counts": [3, 1]}})");
    atomic_write(dir_ / "missing.json", R"({"seed": 1, "scenario": "cup_stacking", "data": {"dataset": "nope.jsonl"}})");
    const std::string out = " --out " + (dir_ / "cli").string();
    EXPECT_EQ(run_cli("simulate --config " + (dir_ / "ok.json").string() + out), 0);
    EXPECT_TRUE(fs::exists(dir_ / "cli" / "cup_stacking.jsonl"));
    EXPECT_EQ(run_cli("simulate --config " + (dir_ / "bad.json").string() + out), 2);
    EXPECT_EQ(run_cli("simulate --config " + (dir_ / "missing.json").string() + out), 4);
    EXPECT_EQ(run_cli("simulate"), 2);
    EXPECT_EQ(run_cli("scenarios show cup_stacking"), 0);
    EXPECT_EQ(run_cli("scenarios show poker"), 2);
}
