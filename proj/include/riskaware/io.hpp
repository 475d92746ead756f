#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "riskaware/choice.hpp"
#include "riskaware/errors.hpp"
#include "riskaware/inference.hpp"
#include "riskaware/maze.hpp"
#include "riskaware/planner.hpp"
#include "riskaware/pomdp.hpp"
#include "riskaware/prospect.hpp"
#include "riskaware/scenarios.hpp"

namespace riskaware {

using nlohmann::json;

namespace detail {

template <class F>
auto guard_json(const std::string& what, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const json::exception& e) {
        throw ValidationError("malformed " + what + ": " + e.what());
    }
}

}  // namespace detail

// ---- files ----

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("cannot read " + path.string());
    return ss.str();
}

inline json read_json_file(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(path.string() + " is not valid JSON: " + e.what());
    }
}

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// never see a partial file.
inline void atomic_write(const std::filesystem::path& path, const std::string& contents) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
    std::random_device rd;
    auto tmp = path;
    tmp += ".tmp" + std::to_string(rd());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << contents;
        out.flush();
        if (!out) {
            std::filesystem::remove(tmp, ec);
            throw IoError("cannot write " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
    }
}

inline void write_json_file(const std::filesystem::path& path, const json& doc) {
    atomic_write(path, doc.dump(2) + "\n");
}

// ---- prospects and scenarios ----

inline json to_json(const Prospect& p) {
    json cs = json::array();
    for (const auto& c : p.consequences()) {
        json item{{"probability", c.probability}, {"reward", c.reward}};
        if (!c.tag.empty()) item["tag"] = c.tag;
        cs.push_back(std::move(item));
    }
    return cs;
}

inline Prospect prospect_from_json(const json& doc) {
    return detail::guard_json("prospect", [&] {
        if (!doc.is_array()) throw ValidationError("a prospect is an array of consequences");
        std::vector<Consequence> cs;
        for (const auto& c : doc)
            cs.push_back({c.at("probability").get<double>(), c.at("reward").get<double>(),
                          c.value("tag", std::string{})});
        return Prospect(std::move(cs));
    });
}

inline json to_json(const ScenarioSpec& s) {
    json actions = json::array();
    for (const auto& a : s.actions) actions.push_back({{"id", a.id}, {"prospect", to_json(a.prospect)}});
    return {{"name", s.name}, {"description", s.description}, {"actions", actions}};
}

inline ScenarioSpec scenario_from_json(const json& doc) {
    return detail::guard_json("scenario", [&] {
        ScenarioSpec s;
        s.name = doc.at("name").get<std::string>();
        s.description = doc.value("description", std::string{});
        for (const auto& a : doc.at("actions"))
            s.actions.push_back({a.at("id").get<std::string>(), prospect_from_json(a.at("prospect"))});
        s.validate();
        return s;
    });
}

// ---- model parameters ----

inline json to_json(const HumanModel& model) {
    const auto names = parameter_names(kind_of(model));
    const auto values = parameter_vector(model);
    json out{{"kind", std::string(to_string(kind_of(model)))}};
    for (std::size_t i = 0; i < names.size(); ++i) out[names[i]] = values[i];
    return out;
}

inline HumanModel human_model_from_json(const json& doc) {
    return detail::guard_json("model parameters", [&] {
        const ModelKind kind = parse_model_kind(doc.at("kind").get<std::string>());
        std::vector<double> x;
        if (kind == ModelKind::cpt) {
            const CptParams d;
            x = {doc.value("alpha", d.alpha), doc.value("beta", d.beta),       doc.value("lambda", d.lambda),
                 doc.value("gamma", d.gamma_w), doc.value("delta", d.delta_w), doc.at("theta").get<double>()};
        } else {
            x = {doc.at("theta").get<double>()};
        }
        HumanModel m = make_model(kind, x);
        std::visit([](const auto& p) { p.validate(); }, m);
        return m;
    });
}

// ---- POMDP ----

/// Dense schema: tables flattened row-major over (s, a_H, a_R, s').
inline json to_json(const PomdpModel& m) {
    json out{{"num_states", m.num_states},
             {"num_observations", m.num_observations},
             {"num_human_actions", m.num_human_actions},
             {"num_robot_actions", m.num_robot_actions},
             {"observation_of", m.observation_of},
             {"transition", m.transition},
             {"human_reward", m.human_reward},
             {"robot_reward", m.robot_reward},
             {"discount", m.discount},
             {"horizon", m.horizon ? json(*m.horizon) : json(nullptr)},
             {"terminal", m.terminal},
             {"state_names", m.state_names},
             {"human_action_names", m.human_action_names},
             {"robot_action_names", m.robot_action_names}};
    if (m.conflicts) {
        json c = json::array();
        for (const auto& [h, r] : *m.conflicts) c.push_back({h, r});
        out["conflicts"] = c;
    }
    return out;
}

inline PomdpModel pomdp_from_json(const json& doc) {
    return detail::guard_json("POMDP model", [&] {
        PomdpModel m;
        m.num_states = doc.at("num_states").get<std::size_t>();
        m.num_observations = doc.at("num_observations").get<std::size_t>();
        m.num_human_actions = doc.at("num_human_actions").get<std::size_t>();
        m.num_robot_actions = doc.at("num_robot_actions").get<std::size_t>();
        m.observation_of = doc.at("observation_of").get<std::vector<std::size_t>>();
        m.transition = doc.at("transition").get<std::vector<double>>();
        m.human_reward = doc.at("human_reward").get<std::vector<double>>();
        m.robot_reward = doc.at("robot_reward").get<std::vector<double>>();
        m.discount = doc.value("discount", 0.95);
        if (doc.contains("horizon") && !doc["horizon"].is_null()) m.horizon = doc["horizon"].get<int>();
        m.terminal = doc.value("terminal", std::vector<bool>{});
        m.state_names = doc.value("state_names", std::vector<std::string>{});
        m.human_action_names = doc.value("human_action_names", std::vector<std::string>{});
        m.robot_action_names = doc.value("robot_action_names", std::vector<std::string>{});
        if (doc.contains("conflicts")) {
            std::vector<std::pair<std::size_t, std::size_t>> c;
            for (const auto& pair : doc["conflicts"])
                c.emplace_back(pair.at(0).get<std::size_t>(), pair.at(1).get<std::size_t>());
            m.conflicts = std::move(c);
        }
        m.validate();
        return m;
    });
}

// ---- fits ----

inline json to_json(const ChoiceDistribution& d) {
    json out = json::object();
    for (std::size_t i = 0; i < d.actions.size(); ++i) out[d.actions[i]] = d.probabilities[i];
    return out;
}

inline json to_json(const FitResult& fit) {
    json preds = json::array();
    for (const auto& p : fit.predictions)
        preds.push_back({{"decision_point", p.decision_point},
                         {"actions", p.predicted.actions},
                         {"predicted", p.predicted.probabilities},
                         {"empirical", p.empirical.probabilities},
                         {"kl", p.kl}});
    json scores{{"kl", fit.scores.kl},
                {"log_kl", std::isfinite(fit.scores.log_kl) ? json(fit.scores.log_kl) : json(nullptr)},
                {"train_log_likelihood", fit.scores.train_log_likelihood},
                {"held_out_log_likelihood", fit.scores.held_out_log_likelihood
                                                ? json(*fit.scores.held_out_log_likelihood)
                                                : json(nullptr)}};
    return {{"kind", std::string(to_string(fit.kind))},
            {"parameter_names", parameter_names(fit.kind)},
            {"samples", fit.samples},
            {"posterior_mean", fit.posterior_mean},
            {"posterior_mean_model", to_json(fit.mean_model())},
            {"acceptance_rates", fit.acceptance_rates},
            {"predictions", preds},
            {"scores", scores}};
}

inline FitResult fit_from_json(const json& doc) {
    return detail::guard_json("fit result", [&] {
        FitResult fit;
        fit.kind = parse_model_kind(doc.at("kind").get<std::string>());
        fit.samples = doc.at("samples").get<std::vector<std::vector<double>>>();
        fit.posterior_mean = doc.at("posterior_mean").get<std::vector<double>>();
        fit.acceptance_rates = doc.value("acceptance_rates", std::vector<double>{});
        const std::size_t dims = parameter_names(fit.kind).size();
        if (fit.posterior_mean.size() != dims) throw ValidationError("posterior mean has the wrong dimension");
        for (const auto& s : fit.samples)
            if (s.size() != dims) throw ValidationError("posterior sample has the wrong dimension");
        for (const auto& p : doc.value("predictions", json::array())) {
            Prediction pr;
            pr.decision_point = p.at("decision_point").get<std::string>();
            const auto actions = p.at("actions").get<std::vector<std::string>>();
            pr.predicted = {actions, p.at("predicted").get<std::vector<double>>()};
            pr.empirical = {actions, p.at("empirical").get<std::vector<double>>()};
            pr.kl = p.at("kl").get<double>();
            fit.predictions.push_back(std::move(pr));
        }
        const auto& s = doc.at("scores");
        fit.scores.kl = s.at("kl").get<double>();
        fit.scores.log_kl = s.at("log_kl").is_null() ? log_kl(fit.scores.kl) : s.at("log_kl").get<double>();
        fit.scores.train_log_likelihood = s.at("train_log_likelihood").get<double>();
        if (s.contains("held_out_log_likelihood") && !s["held_out_log_likelihood"].is_null())
            fit.scores.held_out_log_likelihood = s["held_out_log_likelihood"].get<double>();
        return fit;
    });
}

// ---- plans ----

inline json to_json(const RobotPlan& plan, const PomdpModel& model) {
    json policy = json::object(), values = json::object(), stages = json::array();
    for (std::size_t o = 0; o < plan.policy().size(); ++o) {
        const std::string key = std::to_string(o);
        policy[key] = model.robot_action_name(plan.policy()[o]);
        values[key] = plan.values()[o];
    }
    for (int h = 1; h <= plan.horizon(); ++h) {
        json p = json::array();
        for (std::size_t a : plan.policy_at(h)) p.push_back(model.robot_action_name(a));
        stages.push_back({{"steps_to_go", h}, {"policy", p}, {"values", plan.stage_values[h - 1]}});
    }
    return {{"human_model", plan.human_model}, {"horizon", plan.horizon()},
            {"policy", policy},               {"values", values},
            {"stages", stages}};
}

// ---- trajectories (JSONL) ----

/// One log line per move:
/// {session, step, pos:[x,y], action, t_ms, subject, fixture}.
inline json trajectory_step_line(const Trajectory& t, std::size_t index) {
    const auto& s = t.steps.at(index);
    return {{"session", t.session},
            {"step", index},
            {"pos", {s.position.x, s.position.y}},
            {"action", std::string(to_string(s.action))},
            {"t_ms", s.t_ms},
            {"subject", t.subject},
            {"fixture", t.fixture}};
}

/// The closing line of a game: action null plus a terminal marker.
inline json trajectory_terminal_line(const Trajectory& t, std::int64_t t_ms) {
    return {{"session", t.session},
            {"step", t.steps.size()},
            {"action", nullptr},
            {"terminal", std::string(to_string(t.terminal))},
            {"t_ms", t_ms},
            {"subject", t.subject},
            {"fixture", t.fixture}};
}

inline std::string trajectories_to_jsonl(std::span<const Trajectory> trajectories) {
    std::string out;
    for (const auto& t : trajectories) {
        for (std::size_t i = 0; i < t.steps.size(); ++i) out += trajectory_step_line(t, i).dump() + "\n";
        if (t.terminal != Outcome::in_progress)
            out += trajectory_terminal_line(t, t.steps.empty() ? 0 : t.steps.back().t_ms).dump() + "\n";
    }
    return out;
}

inline Outcome parse_outcome(std::string_view s) {
    if (s == "goal") return Outcome::goal;
    if (s == "timeout") return Outcome::timeout;
    if (s == "in_progress") return Outcome::in_progress;
    throw ValidationError("unknown terminal marker '" + std::string(s) + "'");
}

/// Groups log lines into trajectories in order of first appearance. Steps of
/// a session must be numbered 0, 1, 2, ... in file order.
inline std::vector<Trajectory> parse_trajectories(std::istream& in) {
    std::vector<Trajectory> out;
    std::map<std::string, std::size_t> slot;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        detail::guard_json("trajectory line " + std::to_string(lineno), [&] {
            const json doc = json::parse(line);
            const std::string session = doc.at("session").get<std::string>();
            auto [it, inserted] = slot.try_emplace(session, out.size());
            if (inserted) {
                Trajectory t;
                t.session = session;
                t.subject = doc.value("subject", std::string{});
                t.fixture = doc.value("fixture", std::string{});
                out.push_back(std::move(t));
            }
            Trajectory& t = out[it->second];
            if (t.terminal != Outcome::in_progress)
                throw ValidationError("line " + std::to_string(lineno) + ": session " + session +
                                      " continues after its terminal marker");
            const auto step = doc.at("step").get<std::size_t>();
            if (step != t.steps.size())
                throw ValidationError("line " + std::to_string(lineno) + ": session " + session +
                                      " expected step " + std::to_string(t.steps.size()));
            if (doc.at("action").is_null()) {
                t.terminal = parse_outcome(doc.at("terminal").get<std::string>());
                return 0;
            }
            t.steps.push_back({{doc.at("pos").at(0).get<int>(), doc.at("pos").at(1).get<int>()},
                               parse_direction(doc.at("action").get<std::string>()),
                               doc.value("t_ms", std::int64_t{0})});
            return 0;
        });
    }
    return out;
}

inline std::vector<Trajectory> read_trajectories(const std::filesystem::path& path) {
    std::istringstream in(read_text_file(path));
    auto out = parse_trajectories(in);
    if (out.empty()) throw ValidationError(path.string() + " contains no trajectories");
    return out;
}

// ---- one-shot choices (JSONL) ----

/// {decision_point, actions:[{id, prospect}], chosen, count?, subject?}
inline json choice_line(const DecisionRecord& r) {
    json actions = json::array();
    for (std::size_t i = 0; i < r.actions.size(); ++i)
        actions.push_back({{"id", r.actions[i]}, {"prospect", to_json(r.prospects[i])}});
    json out{{"decision_point", r.decision_point}, {"actions", actions}, {"chosen", r.actions[r.chosen]}};
    if (r.count != 1.0) out["count"] = r.count;
    if (!r.subject.empty()) out["subject"] = r.subject;
    return out;
}

inline std::string dataset_to_jsonl(const ChoiceDataset& data) {
    std::string out;
    for (const auto& r : data.records) out += choice_line(r).dump() + "\n";
    return out;
}

inline ChoiceDataset parse_choice_dataset(std::istream& in) {
    ChoiceDataset ds;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        detail::guard_json("choice line " + std::to_string(lineno), [&] {
            const json doc = json::parse(line);
            DecisionRecord r;
            r.decision_point = doc.at("decision_point").get<std::string>();
            for (const auto& a : doc.at("actions")) {
                r.actions.push_back(a.at("id").get<std::string>());
                r.prospects.push_back(prospect_from_json(a.at("prospect")));
            }
            const auto chosen = doc.at("chosen").get<std::string>();
            r.chosen = r.actions.size();
            for (std::size_t i = 0; i < r.actions.size(); ++i)
                if (r.actions[i] == chosen) r.chosen = i;
            r.count = doc.value("count", 1.0);
            r.subject = doc.value("subject", std::string{});
            ds.add(std::move(r));
            return 0;
        });
    }
    return ds;
}

inline ChoiceDataset read_choice_dataset(const std::filesystem::path& path) {
    std::istringstream in(read_text_file(path));
    auto ds = parse_choice_dataset(in);
    if (ds.empty()) throw ValidationError(path.string() + " contains no choices");
    return ds;
}

inline MazeSpec read_maze_file(const std::filesystem::path& path) {
    MazeSpec spec = load_maze(read_json_file(path));
    if (spec.id.empty()) spec.id = path.stem().string();
    return spec;
}

}  // namespace riskaware
