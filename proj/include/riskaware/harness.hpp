#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "riskaware/choice.hpp"
#include "riskaware/errors.hpp"
#include "riskaware/inference.hpp"
#include "riskaware/io.hpp"
#include "riskaware/maze.hpp"
#include "riskaware/planner.hpp"
#include "riskaware/scenarios.hpp"
#include "riskaware/simulation.hpp"

#ifndef RISKAWARE_DATA_DIR
#define RISKAWARE_DATA_DIR "data"
#endif

namespace riskaware {

namespace fs = std::filesystem;

/// Fixture directory: $RISKAWARE_DATA_DIR if set, else the build-time default.
inline fs::path data_dir() {
    if (const char* env = std::getenv("RISKAWARE_DATA_DIR"); env && *env) return env;
    return RISKAWARE_DATA_DIR;
}

/// A maze reference is either a path to a JSON file or a fixture id under
/// data_dir()/mazes.
inline MazeSpec resolve_maze(const std::string& ref, const fs::path& base = {}) {
    fs::path p(ref);
    if (p.extension() != ".json") return read_maze_file(data_dir() / "mazes" / (ref + ".json"));
    if (p.is_relative() && !base.empty()) p = base / p;
    return read_maze_file(p);
}

/// Distinct, reproducible seeds for the k-th sub-task of a run.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t k) {
    std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (k + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// ---- configuration ----

struct SimulatedSource {
    HumanModel model;
    std::size_t population = 1000;
};
struct DistributionSource {
    std::vector<double> probabilities;
    std::size_t population = 1000;
};
/// Empirical share of one action swept over `values`; the rest is split
/// evenly over the other actions.
struct SweepSource {
    std::string action;
    std::vector<double> values;
    std::size_t population = 1000;
};
struct CountsSource {
    std::vector<double> counts;
};
struct DatasetSource {
    fs::path path;
};
/// Simulated maze players with per-user parameters drawn uniformly from
/// `ranges` (parameter name -> [lo, hi]).
struct CohortSource {
    ModelKind ground_truth = ModelKind::cpt;
    std::size_t users = 17;
    std::size_t games_per_user = 20;
    std::map<std::string, std::pair<double, double>> ranges;
};
struct TrajectorySource {
    fs::path train;
    std::optional<fs::path> test;
};

using DataSource = std::variant<SimulatedSource, DistributionSource, SweepSource, CountsSource, DatasetSource,
                                CohortSource, TrajectorySource>;

inline std::map<std::string, std::pair<double, double>> default_cohort_ranges(ModelKind kind) {
    if (kind == ModelKind::noisy_rational) return {{"theta", {0.5, 2.0}}};
    return {{"alpha", {0.85, 1.0}}, {"beta", {0.85, 1.0}}, {"lambda", {1.5, 3.0}},
            {"gamma", {0.4, 0.6}},  {"delta", {0.4, 0.6}}, {"theta", {1.0, 3.0}}};
}

/// Robot-planning section: which interaction model, how long, and against
/// which simulated population the plans are compared.
struct InteractionSpec {
    PomdpModel model;
    BeliefOverStates belief;
    int horizon = 1;
    int human_steps_to_go = 2;
    std::size_t episodes = 10000;
    std::size_t initial_state = 0;
    std::vector<double> true_human;  ///< P(a_H) of the simulated population
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    fs::path out = "results";
    std::vector<ModelKind> models{ModelKind::noisy_rational, ModelKind::cpt};
    McmcConfig mcmc;
    std::optional<ScenarioSpec> scenario;
    std::optional<MazeSpec> train_maze;
    std::optional<MazeSpec> test_maze;
    DataSource source;
    std::optional<InteractionSpec> interaction;
};

inline std::vector<ModelKind> parse_model_selection(const std::string& s) {
    if (s == "both") return {ModelKind::noisy_rational, ModelKind::cpt};
    return {parse_model_kind(s)};
}

struct ConfigOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<fs::path> out;
    std::optional<std::string> models;
};

namespace detail {

inline ScenarioSpec scenario_from_config(const json& doc) {
    if (doc.is_string()) return builtin_scenario(doc.get<std::string>());
    if (doc.contains("driving")) {
        const auto& d = doc["driving"];
        const std::string risk = d.value("risk", std::string("high"));
        if (risk != "high" && risk != "low") throw ValidationError("driving risk must be 'high' or 'low'");
        return driving_scenario(risk == "high" ? Risk::high : Risk::low, d.value("ticket_cost", kDefaultTicketCost),
                                d.value("stop_cost", kDefaultStopCost),
                                d.value("make_light_reward", kDefaultMakeLightReward));
    }
    return scenario_from_json(doc);
}

inline McmcConfig mcmc_from_config(const json& doc) {
    McmcConfig c;
    c.chains = doc.value("chains", c.chains);
    c.samples_per_chain = doc.value("samples_per_chain", c.samples_per_chain);
    c.burn_in = doc.value("burn_in", c.burn_in);
    c.thinning = doc.value("thinning", c.thinning);
    c.threads = doc.value("threads", c.threads);
    c.box.lambda_max = doc.value("lambda_max", c.box.lambda_max);
    c.box.theta_max = doc.value("theta_max", c.box.theta_max);
    c.box.gamma_min = doc.value("gamma_min", c.box.gamma_min);
    c.default_scale = doc.value("proposal_scale", c.default_scale);
    return c;
}

inline fs::path resolve_path(const std::string& p, const fs::path& base) {
    fs::path path(p);
    return path.is_relative() && !base.empty() ? base / path : path;
}

inline InteractionSpec interaction_from_config(const json& doc, const fs::path& base) {
    InteractionSpec spec;
    const json model = doc.value("model", json("cup_stacking"));
    if (model.is_string() && model.get<std::string>() == "cup_stacking") {
        spec.model = cup_stacking_interaction_model();
    } else if (model.is_string()) {
        spec.model = pomdp_from_json(read_json_file(resolve_path(model.get<std::string>(), base)));
    } else {
        spec.model = pomdp_from_json(model);
    }
    spec.belief = identity_belief(spec.model);
    spec.horizon = doc.value("horizon", 1);
    spec.human_steps_to_go = doc.value("human_steps_to_go", spec.model.horizon.value_or(2));
    spec.episodes = doc.value("episodes", spec.episodes);
    spec.initial_state = doc.value("initial_state", spec.initial_state);
    spec.true_human = doc.at("true_human").get<std::vector<double>>();
    if (spec.true_human.size() != spec.model.num_human_actions)
        throw ValidationError("true_human must give one probability per human action");
    return spec;
}

}  // namespace detail

/// Parses an experiment document. Relative paths resolve against `base`.
/// Exactly one data source is required, and a seed is mandatory (either in
/// the document or as an override).
inline ExperimentConfig parse_experiment_config(const json& doc, const fs::path& base = {},
                                                const ConfigOverrides& overrides = {}) {
    return detail::guard_json("experiment config", [&] {
        if (!doc.is_object()) throw ValidationError("experiment config must be a JSON object");
        ExperimentConfig cfg;
        if (overrides.seed) cfg.seed = *overrides.seed;
        else if (doc.contains("seed")) cfg.seed = doc["seed"].get<std::uint64_t>();
        else throw ValidationError("experiment config requires a seed");
        if (overrides.out) cfg.out = *overrides.out;
        else if (doc.contains("out")) cfg.out = detail::resolve_path(doc["out"].get<std::string>(), base);
        const std::string models = overrides.models ? *overrides.models : doc.value("models", std::string("both"));
        cfg.models = parse_model_selection(models);
        cfg.mcmc = detail::mcmc_from_config(doc.value("fit", json::object()));

        const bool has_scenario = doc.contains("scenario");
        const bool has_maze = doc.contains("maze");
        if (has_scenario == has_maze) throw ValidationError("experiment config needs exactly one of scenario or maze");
        if (has_scenario) cfg.scenario = detail::scenario_from_config(doc["scenario"]);
        if (has_maze) {
            const auto& m = doc["maze"];
            if (m.is_string()) {
                cfg.train_maze = resolve_maze(m.get<std::string>(), base);
            } else {
                cfg.train_maze = resolve_maze(m.at("train").get<std::string>(), base);
                if (m.contains("test")) cfg.test_maze = resolve_maze(m["test"].get<std::string>(), base);
            }
        }

        const json data = doc.value("data", json::object());
        if (!data.is_object() || data.size() != 1)
            throw ValidationError("experiment config needs exactly one data source under 'data'");
        const auto& [kind, body] = *data.items().begin();
        const std::set<std::string> scenario_sources{"simulate", "distribution", "sweep", "counts", "dataset"};
        const std::set<std::string> maze_sources{"cohort", "trajectories"};
        if (has_scenario && !scenario_sources.contains(kind))
            throw ValidationError("data source '" + kind + "' does not apply to a scenario");
        if (has_maze && !maze_sources.contains(kind))
            throw ValidationError("data source '" + kind + "' does not apply to a maze");

        if (kind == "simulate") {
            cfg.source = SimulatedSource{human_model_from_json(body.at("model")),
                                         body.value("population", std::size_t{1000})};
        } else if (kind == "distribution") {
            cfg.source = DistributionSource{body.at("probabilities").get<std::vector<double>>(),
                                            body.value("population", std::size_t{1000})};
        } else if (kind == "sweep") {
            cfg.source = SweepSource{body.at("action").get<std::string>(), body.at("values").get<std::vector<double>>(),
                                     body.value("population", std::size_t{1000})};
        } else if (kind == "counts") {
            cfg.source = CountsSource{body.get<std::vector<double>>()};
        } else if (kind == "dataset") {
            cfg.source = DatasetSource{detail::resolve_path(body.get<std::string>(), base)};
        } else if (kind == "cohort") {
            CohortSource c;
            c.ground_truth = parse_model_kind(body.value("ground_truth", std::string("cpt")));
            c.users = body.value("users", c.users);
            c.games_per_user = body.value("games_per_user", c.games_per_user);
            c.ranges = default_cohort_ranges(c.ground_truth);
            for (const auto& [name, range] : body.value("ranges", json::object()).items()) {
                if (!c.ranges.contains(name)) throw ValidationError("unknown cohort parameter '" + name + "'");
                c.ranges[name] = {range.at(0).get<double>(), range.at(1).get<double>()};
            }
            if (c.users == 0 || c.games_per_user == 0) throw ValidationError("cohort needs users and games");
            cfg.source = c;
        } else {
            TrajectorySource t;
            t.train = detail::resolve_path(body.at("train").get<std::string>(), base);
            if (body.contains("test")) t.test = detail::resolve_path(body["test"].get<std::string>(), base);
            cfg.source = t;
        }
        if (doc.contains("interaction")) cfg.interaction = detail::interaction_from_config(doc["interaction"], base);
        return cfg;
    });
}

inline ExperimentConfig load_experiment_config(const fs::path& path, const ConfigOverrides& overrides = {}) {
    return parse_experiment_config(read_json_file(path), path.parent_path(), overrides);
}

// ---- data generation ----

struct NamedDataset {
    std::string name;
    ChoiceDataset data;
};

/// Scenario datasets produced by the configured source (several for a sweep).
inline std::vector<NamedDataset> scenario_datasets(const ExperimentConfig& cfg) {
    if (!cfg.scenario) throw ValidationError("experiment has no scenario");
    const ScenarioSpec& sc = *cfg.scenario;
    std::vector<NamedDataset> out;
    if (const auto* s = std::get_if<SimulatedSource>(&cfg.source)) {
        const auto counts = sample_scenario_counts(sc, s->model, s->population, derive_seed(cfg.seed, 0));
        out.push_back({sc.name, dataset_from_counts(sc, counts)});
    } else if (const auto* d = std::get_if<DistributionSource>(&cfg.source)) {
        if (d->probabilities.size() != sc.actions.size())
            throw ValidationError("distribution must give one probability per scenario action");
        out.push_back({sc.name, dataset_from_counts(sc, counts_for_distribution(d->probabilities, d->population))});
    } else if (const auto* w = std::get_if<SweepSource>(&cfg.source)) {
        std::size_t target = sc.actions.size();
        for (std::size_t i = 0; i < sc.actions.size(); ++i)
            if (sc.actions[i].id == w->action) target = i;
        if (target == sc.actions.size()) throw ValidationError("sweep action '" + w->action + "' is not in the scenario");
        if (w->values.empty()) throw ValidationError("sweep needs at least one value");
        for (double q : w->values) {
            if (!(q >= 0.0 && q <= 1.0)) throw ValidationError("sweep values must lie in [0, 1]");
            std::vector<double> p(sc.actions.size(), (1.0 - q) / static_cast<double>(sc.actions.size() - 1));
            p[target] = q;
            std::ostringstream name;
            name << sc.name << "_" << w->action << "_" << std::fixed << std::setprecision(2) << q;
            out.push_back({name.str(), dataset_from_counts(sc, counts_for_distribution(p, w->population))});
        }
    } else if (const auto* c = std::get_if<CountsSource>(&cfg.source)) {
        out.push_back({sc.name, dataset_from_counts(sc, c->counts)});
    } else if (const auto* f = std::get_if<DatasetSource>(&cfg.source)) {
        out.push_back({sc.name, read_choice_dataset(f->path)});
    } else {
        throw ValidationError("data source does not apply to a scenario");
    }
    return out;
}

struct CohortMember {
    std::string subject;
    HumanModel ground_truth;
};

struct MazeData {
    std::vector<Trajectory> train;
    std::vector<Trajectory> test;
    std::vector<CohortMember> cohort;  ///< empty for recorded trajectories
};

/// Draws each simulated user's parameters and plays their games on both mazes.
inline MazeData simulate_cohort(const CohortSource& c, const MazeSpec& train, const std::optional<MazeSpec>& test,
                                std::uint64_t seed) {
    MazeData out;
    std::mt19937_64 param_rng(derive_seed(seed, 1));
    const auto names = parameter_names(c.ground_truth);
    const DualValues train_values = dual_grid_values(train);
    const std::optional<DualValues> test_values =
        test ? std::optional<DualValues>(dual_grid_values(*test)) : std::nullopt;
    for (std::size_t u = 0; u < c.users; ++u) {
        std::vector<double> x;
        for (const auto& n : names) {
            const auto [lo, hi] = c.ranges.at(n);
            x.push_back(std::uniform_real_distribution<double>(lo, hi)(param_rng));
        }
        HumanModel gt = make_model(c.ground_truth, x);
        std::visit([](const auto& p) { p.validate(); }, gt);
        std::ostringstream subject;
        subject << "user" << std::setw(2) << std::setfill('0') << u + 1;
        out.cohort.push_back({subject.str(), gt});
        std::mt19937_64 rng(derive_seed(seed, 100 + u));
        for (std::size_t g = 0; g < c.games_per_user; ++g) {
            out.train.push_back(simulate_trajectory(train, train_values, gt, rng,
                                                    subject.str() + "-" + train.id + "-" + std::to_string(g),
                                                    subject.str()));
            if (test)
                out.test.push_back(simulate_trajectory(*test, *test_values, gt, rng,
                                                       subject.str() + "-" + test->id + "-" + std::to_string(g),
                                                       subject.str()));
        }
    }
    return out;
}

inline MazeData maze_data(const ExperimentConfig& cfg) {
    if (!cfg.train_maze) throw ValidationError("experiment has no maze");
    if (const auto* c = std::get_if<CohortSource>(&cfg.source))
        return simulate_cohort(*c, *cfg.train_maze, cfg.test_maze, cfg.seed);
    const auto& t = std::get<TrajectorySource>(cfg.source);
    MazeData out;
    out.train = read_trajectories(t.train);
    if (t.test) out.test = read_trajectories(*t.test);
    return out;
}

// ---- reports ----

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    static std::string cell(double v) {
        std::ostringstream s;
        s << std::setprecision(12) << v;
        return s.str();
    }

    std::string str() const {
        auto line = [](const std::vector<std::string>& cells) {
            std::string out;
            for (std::size_t i = 0; i < cells.size(); ++i) {
                if (i) out += ',';
                const bool quote = cells[i].find_first_of(",\"\n") != std::string::npos;
                if (!quote) {
                    out += cells[i];
                    continue;
                }
                out += '"';
                for (char ch : cells[i]) {
                    if (ch == '"') out += '"';
                    out += ch;
                }
                out += '"';
            }
            return out + "\n";
        };
        std::string out = line(header);
        for (const auto& r : rows) out += line(r);
        return out;
    }
};

/// Progress and warnings go here; tests may swap it out.
inline std::ostream*& harness_log() {
    static std::ostream* log = nullptr;
    return log;
}

inline void log_line(const std::string& msg) {
    if (auto* log = harness_log()) *log << msg << "\n";
}

inline McmcConfig seeded(McmcConfig c, std::uint64_t seed) {
    c.seed = seed;
    return c;
}

// ---- commands ----

/// Writes the configured datasets: choices as JSONL per scenario dataset,
/// trajectories as JSONL per maze, plus summary.csv. Returns written paths.
inline std::vector<fs::path> cmd_simulate(const ExperimentConfig& cfg) {
    std::vector<fs::path> written;
    CsvTable summary;
    if (cfg.scenario) {
        summary.header = {"dataset", "action", "count", "share"};
        for (const auto& ds : scenario_datasets(cfg)) {
            const fs::path p = cfg.out / (ds.name + ".jsonl");
            atomic_write(p, dataset_to_jsonl(ds.data));
            written.push_back(p);
            const auto [preds, kl] = predict(NoisyRationalParams{0.0}, ds.data);
            for (const auto& pr : preds)
                for (std::size_t i = 0; i < pr.empirical.actions.size(); ++i)
                    summary.rows.push_back({ds.name, pr.empirical.actions[i],
                                            CsvTable::cell(pr.empirical.probabilities[i] * ds.data.total_count()),
                                            CsvTable::cell(pr.empirical.probabilities[i])});
        }
    } else {
        const MazeData data = maze_data(cfg);
        summary.header = {"fixture", "subject", "session", "moves", "terminal"};
        auto emit = [&](const std::vector<Trajectory>& ts, const MazeSpec& spec) {
            const fs::path p = cfg.out / ("trajectories_" + spec.id + ".jsonl");
            atomic_write(p, trajectories_to_jsonl(ts));
            written.push_back(p);
            for (const auto& t : ts)
                summary.rows.push_back({spec.id, t.subject, t.session, std::to_string(t.steps.size()),
                                        std::string(to_string(t.terminal))});
        };
        emit(data.train, *cfg.train_maze);
        if (cfg.test_maze && !data.test.empty()) emit(data.test, *cfg.test_maze);
        if (!data.cohort.empty()) {
            json truth = json::object();
            for (const auto& m : data.cohort) truth[m.subject] = to_json(m.ground_truth);
            const fs::path p = cfg.out / "ground_truth.json";
            write_json_file(p, truth);
            written.push_back(p);
        }
    }
    const fs::path p = cfg.out / "summary.csv";
    atomic_write(p, summary.str());
    written.push_back(p);
    return written;
}

struct FitRow {
    std::string dataset;
    FitResult fit;
};

/// Fits every selected model on every dataset (scenario datasets, or the
/// pooled training-maze trajectories) and writes fit JSON plus summary.csv.
inline std::vector<FitRow> cmd_fit(const ExperimentConfig& cfg) {
    std::vector<NamedDataset> datasets;
    if (cfg.scenario) {
        datasets = scenario_datasets(cfg);
    } else {
        const MazeData data = maze_data(cfg);
        const DualValues values = dual_grid_values(*cfg.train_maze);
        datasets.push_back({cfg.train_maze->id, dataset_from_trajectories(*cfg.train_maze, values, data.train)});
    }
    std::vector<FitRow> rows;
    CsvTable summary{{"dataset", "model", "kl", "log_kl", "train_log_likelihood", "mean_acceptance"}, {}};
    for (std::size_t d = 0; d < datasets.size(); ++d) {
        for (ModelKind kind : cfg.models) {
            const std::uint64_t seed = derive_seed(cfg.seed, 1000 + 2 * d + (kind == ModelKind::cpt));
            log_line("fitting " + std::string(to_string(kind)) + " on " + datasets[d].name);
            FitResult fit = metropolis_hastings(kind, datasets[d].data, seeded(cfg.mcmc, seed));
            const std::string stem = datasets.size() == 1 ? "fit_" + std::string(to_string(kind))
                                                          : datasets[d].name + "_" + std::string(to_string(kind));
            json doc = to_json(fit);
            doc["dataset"] = datasets[d].name;
            doc["seed"] = seed;
            write_json_file(cfg.out / (stem + ".json"), doc);
            double acc = 0.0;
            for (double a : fit.acceptance_rates) acc += a;
            acc /= static_cast<double>(fit.acceptance_rates.size());
            summary.rows.push_back({datasets[d].name, std::string(to_string(kind)), CsvTable::cell(fit.scores.kl),
                                    CsvTable::cell(fit.scores.log_kl), CsvTable::cell(fit.scores.train_log_likelihood),
                                    CsvTable::cell(acc)});
            rows.push_back({datasets[d].name, std::move(fit)});
        }
    }
    atomic_write(cfg.out / "summary.csv", summary.str());
    return rows;
}

struct UserEvaluation {
    std::string subject;
    std::size_t train_choices = 0;
    std::size_t test_choices = 0;
    std::map<ModelKind, double> held_out;
    std::map<ModelKind, double> train;
    std::optional<HumanModel> ground_truth;
};

struct MazeEvaluation {
    std::vector<UserEvaluation> users;
    std::vector<std::string> skipped;

    /// Users whose CPT held-out log-likelihood beats NR's.
    std::size_t cpt_wins() const {
        std::size_t n = 0;
        for (const auto& u : users)
            if (u.held_out.at(ModelKind::cpt) > u.held_out.at(ModelKind::noisy_rational)) ++n;
        return n;
    }
    /// Mean of CPT minus NR held-out log-likelihood per user, in nats.
    double mean_cpt_advantage() const {
        double d = 0.0;
        for (const auto& u : users) d += u.held_out.at(ModelKind::cpt) - u.held_out.at(ModelKind::noisy_rational);
        return users.empty() ? 0.0 : d / static_cast<double>(users.size());
    }
};

/// Per-user fits on the training maze, scored on the test maze.
inline MazeEvaluation cmd_eval_maze(const ExperimentConfig& cfg) {
    if (!cfg.train_maze || !cfg.test_maze) throw ValidationError("eval-maze needs a train and a test maze");
    const MazeData data = maze_data(cfg);
    if (data.test.empty()) throw ValidationError("eval-maze needs test trajectories");
    const DualValues train_values = dual_grid_values(*cfg.train_maze);
    const DualValues test_values = dual_grid_values(*cfg.test_maze);
    const ChoiceDataset train = dataset_from_trajectories(*cfg.train_maze, train_values, data.train);
    const ChoiceDataset test = dataset_from_trajectories(*cfg.test_maze, test_values, data.test);

    std::vector<std::string> subjects;
    for (const auto& r : train.records)
        if (std::find(subjects.begin(), subjects.end(), r.subject) == subjects.end()) subjects.push_back(r.subject);
    std::map<std::string, HumanModel> truth;
    for (const auto& m : data.cohort) truth.emplace(m.subject, m.ground_truth);

    MazeEvaluation out;
    json users = json::array();
    CsvTable summary{{"subject", "train_choices", "test_choices"}, {}};
    for (ModelKind k : cfg.models) {
        summary.header.push_back(std::string(to_string(k)) + "_train_ll");
        summary.header.push_back(std::string(to_string(k)) + "_held_out_ll");
    }
    const bool paired = cfg.models.size() == 2;
    if (paired) summary.header.push_back("cpt_minus_nr");
    for (std::size_t i = 0; i < subjects.size(); ++i) {
        const auto& subject = subjects[i];
        const ChoiceDataset tr = train.for_subject(subject);
        const ChoiceDataset te = test.for_subject(subject);
        if (te.empty()) {
            log_line("warning: " + subject + " has training but no test trajectories; skipped");
            out.skipped.push_back(subject);
            continue;
        }
        UserEvaluation u;
        u.subject = subject;
        u.train_choices = tr.records.size();
        u.test_choices = te.records.size();
        if (auto it = truth.find(subject); it != truth.end()) u.ground_truth = it->second;
        json entry{{"subject", subject}, {"train_choices", u.train_choices}, {"test_choices", u.test_choices}};
        if (u.ground_truth) entry["ground_truth"] = to_json(*u.ground_truth);
        std::vector<std::string> row{subject, std::to_string(u.train_choices), std::to_string(u.test_choices)};
        for (ModelKind k : cfg.models) {
            const std::uint64_t seed = derive_seed(cfg.seed, 5000 + 2 * i + (k == ModelKind::cpt));
            log_line("fitting " + std::string(to_string(k)) + " for " + subject);
            FitResult fit = metropolis_hastings(k, tr, seeded(cfg.mcmc, seed));
            const double held = held_out_log_likelihood(fit, te);
            fit.scores.held_out_log_likelihood = held;
            u.held_out[k] = held;
            u.train[k] = fit.scores.train_log_likelihood;
            entry[std::string(to_string(k))] = {{"posterior_mean", to_json(fit.mean_model())},
                                                {"train_log_likelihood", fit.scores.train_log_likelihood},
                                                {"held_out_log_likelihood", held}};
            row.push_back(CsvTable::cell(fit.scores.train_log_likelihood));
            row.push_back(CsvTable::cell(held));
        }
        if (paired) {
            const double diff = u.held_out[ModelKind::cpt] - u.held_out[ModelKind::noisy_rational];
            entry["cpt_minus_nr"] = diff;
            row.push_back(CsvTable::cell(diff));
        }
        users.push_back(std::move(entry));
        summary.rows.push_back(std::move(row));
        out.users.push_back(std::move(u));
    }
    json report{{"train_maze", cfg.train_maze->id}, {"test_maze", cfg.test_maze->id}, {"users", users},
                {"skipped", out.skipped}};
    if (paired) {
        report["cpt_wins"] = out.cpt_wins();
        report["mean_cpt_minus_nr"] = out.mean_cpt_advantage();
    }
    write_json_file(cfg.out / "eval_maze.json", report);
    atomic_write(cfg.out / "eval_maze.csv", summary.str());
    return out;
}

struct PlanComparison {
    ModelKind kind;
    FitResult fit;
    RobotPlan plan;
    InteractionSummary summary;
};

/// Fits each selected model on the scenario data, plans a best response
/// against its posterior-predictive human policy, and simulates each plan
/// against the configured population.
inline std::vector<PlanComparison> cmd_plan(const ExperimentConfig& cfg) {
    if (!cfg.interaction) throw ValidationError("plan needs an 'interaction' section");
    if (!cfg.interaction->model.conflicts)
        throw ValidationError("interaction model declares no conflict relation");
    const auto& ix = *cfg.interaction;
    const auto datasets = scenario_datasets(cfg);
    if (datasets.size() != 1) throw ValidationError("plan takes a single dataset");
    const HumanPolicyFn population = fixed_human_policy(ix.true_human);

    std::vector<PlanComparison> out;
    CsvTable summary{{"model", "start_action", "plan_value", "mean_robot_return", "interference_rate"}, {}};
    for (std::size_t i = 0; i < cfg.models.size(); ++i) {
        const ModelKind kind = cfg.models[i];
        FitResult fit = metropolis_hastings(kind, datasets[0].data,
                                            seeded(cfg.mcmc, derive_seed(cfg.seed, 2000 + (kind == ModelKind::cpt))));
        std::vector<HumanModel> draws;
        for (const auto& s : fit.samples) draws.push_back(make_model(kind, s));
        const HumanPolicyFn human = model_human_policy(ix.model, ix.belief, draws, ix.human_steps_to_go);
        RobotPlan plan = robot_best_response(ix.model, ix.belief, human, ix.horizon);
        plan.human_model = std::string(to_string(kind));
        const InteractionSummary sim =
            simulate_interaction(ix.model, plan, population, ix.episodes, derive_seed(cfg.seed, 3000), ix.initial_state);
        const std::size_t o = ix.model.observation_of[ix.initial_state];
        json doc = to_json(plan, ix.model);
        doc["fit"] = to_json(fit);
        doc["predicted_human"] = human(o);
        doc["simulation"] = {{"episodes", sim.episodes},
                             {"steps", sim.steps},
                             {"mean_robot_return", sim.mean_robot_return},
                             {"interference_rate", sim.interference_rate}};
        write_json_file(cfg.out / ("plan_" + std::string(to_string(kind)) + ".json"), doc);
        summary.rows.push_back({std::string(to_string(kind)), ix.model.robot_action_name(plan.policy()[o]),
                                CsvTable::cell(plan.values()[o]), CsvTable::cell(sim.mean_robot_return),
                                CsvTable::cell(sim.interference_rate)});
        out.push_back({kind, std::move(fit), std::move(plan), sim});
    }
    atomic_write(cfg.out / "summary.csv", summary.str());
    return out;
}

}  // namespace riskaware
