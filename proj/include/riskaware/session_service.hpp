#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "riskaware/choice.hpp"
#include "riskaware/errors.hpp"
#include "riskaware/inference.hpp"
#include "riskaware/io.hpp"
#include "riskaware/maze.hpp"
#include "riskaware/scenarios.hpp"
#include "riskaware/simulation.hpp"

namespace riskaware {

/// Milliseconds since the epoch; injectable so tests can move time.
using ClockFn = std::function<std::int64_t()>;

inline std::int64_t system_now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

/// 128 random bits, hex-encoded.
inline std::string new_session_id() {
    static std::mutex mu;
    static std::random_device rd;
    std::lock_guard lock(mu);
    std::ostringstream s;
    for (int i = 0; i < 4; ++i) {
        s.width(8);
        s.fill('0');
        s << std::hex << static_cast<std::uint32_t>(rd());
    }
    return s.str();
}

struct ServiceOptions {
    std::filesystem::path out = "sessions";
    std::filesystem::path fits_dir;  ///< holds fit_nr.json / fit_cpt.json; empty means out/fits
    std::vector<MazeSpec> mazes;
    std::vector<ScenarioSpec> scenarios;
    ClockFn now = system_now_ms;
    std::string cors_origin = "*";
};

enum class SessionStatus { active, finished, expired };

inline std::string_view to_string(SessionStatus s) {
    switch (s) {
        case SessionStatus::active: return "active";
        case SessionStatus::finished: return "finished";
        case SessionStatus::expired: return "expired";
    }
    return "?";
}

struct Session {
    std::string id;
    std::string subject;
    std::string fixture;
    bool is_maze = true;
    std::int64_t started_ms = 0;
    std::int64_t deadline_ms = 0;
    SessionStatus status = SessionStatus::active;
    MazeState state;
    Trajectory trajectory;
    std::optional<std::size_t> choice;  ///< bandit sessions
    std::int64_t choice_ms = 0;
    std::mutex mu;
};

struct ServiceResponse {
    int status = 200;
    json body;
};

/// Live maze and one-shot scenario sessions. All state changes go to
/// append-only JSONL logs under the output directory:
///   sessions.jsonl               one line per created session
///   trajectories_<maze>.jsonl    trajectory log, readable by the fitter
///   choices_<scenario>.jsonl     one choice line per finished bandit session
class SessionService {
public:
    explicit SessionService(ServiceOptions options) : opt_(std::move(options)) {
        if (opt_.fits_dir.empty()) opt_.fits_dir = opt_.out / "fits";
        for (auto& m : opt_.mazes) {
            const std::string id = m.id;
            values_.emplace(id, dual_grid_values(m));
            mazes_.emplace(id, std::move(m));
        }
        for (auto& s : opt_.scenarios) scenarios_.emplace(s.name, std::move(s));
        opt_.mazes.clear();
        opt_.scenarios.clear();
        std::error_code ec;
        std::filesystem::create_directories(opt_.out, ec);
        if (ec) throw IoError("cannot create " + opt_.out.string() + ": " + ec.message());
        reload();
    }

    SessionService(const SessionService&) = delete;
    SessionService& operator=(const SessionService&) = delete;

    ServiceResponse create(const std::string& body) {
        json doc;
        if (auto err = parse_body(body, doc)) return *err;
        const bool has_maze = doc.contains("maze_id"), has_scenario = doc.contains("scenario_id");
        if (has_maze == has_scenario) return error(422, "body needs exactly one of maze_id or scenario_id");
        if (!doc.contains("subject") || !doc["subject"].is_string() || doc["subject"].get<std::string>().empty())
            return error(422, "body needs a non-empty subject string");
        const auto& ref = has_maze ? doc["maze_id"] : doc["scenario_id"];
        if (!ref.is_string()) return error(422, "fixture id must be a string");
        const std::string fixture = ref.get<std::string>();

        auto s = std::make_shared<Session>();
        s->id = new_session_id();
        s->subject = doc["subject"].get<std::string>();
        s->fixture = fixture;
        s->is_maze = has_maze;
        s->started_ms = opt_.now();
        if (has_maze) {
            auto it = mazes_.find(fixture);
            if (it == mazes_.end()) return error(404, "unknown maze '" + fixture + "'");
            s->state = initial_state(it->second);
            s->deadline_ms = s->started_ms + 1000LL * it->second.time_limit_s;
            s->trajectory = {s->id, s->subject, fixture, {}, Outcome::in_progress};
        } else {
            if (!scenarios_.contains(fixture)) return error(404, "unknown scenario '" + fixture + "'");
            s->deadline_ms = s->started_ms + 1000LL * kScenarioTimeLimitS;
        }
        append("sessions.jsonl", json{{"session", s->id},
                                      {"kind", has_maze ? "maze" : "scenario"},
                                      {"fixture", fixture},
                                      {"subject", s->subject},
                                      {"started_ms", s->started_ms},
                                      {"deadline_ms", s->deadline_ms}});
        {
            std::unique_lock lock(sessions_mu_);
            sessions_.emplace(s->id, s);
        }
        std::lock_guard lock(s->mu);
        json view = session_view(*s);
        return {201, view};
    }

    ServiceResponse get(const std::string& id) {
        auto s = find(id);
        if (!s) return error(404, "unknown session");
        std::lock_guard lock(s->mu);
        check_deadline(*s);
        return {200, session_view(*s)};
    }

    ServiceResponse move(const std::string& id, const std::string& body) {
        auto s = find(id);
        if (!s) return error(404, "unknown session");
        json doc;
        if (auto err = parse_body(body, doc)) return *err;
        if (!doc.contains("action") || !doc["action"].is_string()) return error(422, "body needs an action string");
        if (doc.contains("step") && !doc["step"].is_number_unsigned())
            return error(422, "step must be a non-negative integer");
        const std::string action = doc["action"].get<std::string>();

        std::lock_guard lock(s->mu);
        check_deadline(*s);
        if (s->status != SessionStatus::active) {
            ServiceResponse r = error(409, "session is " + std::string(to_string(s->status)));
            r.body["status"] = std::string(to_string(s->status));
            return r;
        }
        const std::size_t expected = s->is_maze ? static_cast<std::size_t>(s->state.moves_used) : 0;
        if (doc.contains("step") && doc["step"].get<std::size_t>() != expected) {
            ServiceResponse r = error(409, "stale move: session is at step " + std::to_string(expected));
            r.body["status"] = std::string(to_string(s->status));
            r.body["step"] = expected;
            return r;
        }
        return s->is_maze ? maze_move(*s, action) : bandit_move(*s, action);
    }

    ServiceResponse review(const std::string& id) {
        auto s = find(id);
        if (!s) return error(404, "unknown session");
        std::lock_guard lock(s->mu);
        check_deadline(*s);
        if (s->status == SessionStatus::active) return error(409, "session is still active");

        json out{{"session_id", s->id}, {"fixture", s->fixture}, {"subject", s->subject},
                 {"status", std::string(to_string(s->status))}};
        std::map<std::string, std::vector<HumanModel>> fits;
        json models = json::object();
        for (const char* kind : {"nr", "cpt"}) {
            const auto path = opt_.fits_dir / ("fit_" + std::string(kind) + ".json");
            if (!std::filesystem::exists(path)) continue;
            const FitResult fit = fit_from_json(read_json_file(path));
            std::vector<HumanModel> draws;
            for (const auto& x : fit.samples) draws.push_back(make_model(fit.kind, x));
            if (draws.empty()) draws.push_back(fit.mean_model());
            fits[kind] = std::move(draws);
            models[kind] = to_json(fit.mean_model());
        }
        const bool available = fits.size() == 2;
        out["predictions_available"] = available;
        if (available) out["models"] = models;

        auto predictions = [&](const std::vector<std::string>& actions, const std::vector<Prospect>& prospects,
                               std::size_t chosen, json& step) {
            if (!available) return;
            for (const auto& [kind, draws] : fits) {
                std::vector<double> p(actions.size(), 0.0);
                for (const auto& d : draws) {
                    const auto q = choice_probabilities(std::span<const Prospect>(prospects), d);
                    for (std::size_t i = 0; i < p.size(); ++i) p[i] += q[i];
                }
                for (double& x : p) x /= static_cast<double>(draws.size());
                step[kind] = {{"probabilities", to_json(ChoiceDistribution{actions, p})},
                              {"chosen_probability", p[chosen]}};
            }
        };

        json steps = json::array();
        if (s->is_maze) {
            const MazeSpec& spec = mazes_.at(s->fixture);
            const DualValues& values = values_.at(s->fixture);
            MazeState state = initial_state(spec);
            for (std::size_t i = 0; i < s->trajectory.steps.size(); ++i) {
                const auto& st = s->trajectory.steps[i];
                std::vector<std::string> actions;
                std::vector<Prospect> prospects;
                std::size_t chosen = 0;
                for (const auto& [d, p] : decision_prospects(spec, values, state)) {
                    if (d == st.action) chosen = actions.size();
                    actions.emplace_back(to_string(d));
                    prospects.push_back(p);
                }
                json step{{"step", i},
                          {"pos", {st.position.x, st.position.y}},
                          {"action", std::string(to_string(st.action))},
                          {"t_ms", st.t_ms},
                          {"legal_actions", actions}};
                predictions(actions, prospects, chosen, step);
                steps.push_back(std::move(step));
                state = step_state(spec, state, st.action);
            }
            out["terminal"] = std::string(to_string(s->trajectory.terminal));
        } else if (s->choice) {
            const ScenarioSpec& sc = scenarios_.at(s->fixture);
            json step{{"step", 0},
                      {"action", sc.actions[*s->choice].id},
                      {"t_ms", s->choice_ms},
                      {"legal_actions", sc.action_ids()}};
            predictions(sc.action_ids(), sc.prospects(), *s->choice, step);
            steps.push_back(std::move(step));
        }
        out["steps"] = steps;
        return {200, out};
    }

    ServiceResponse list_fixtures() const {
        json mazes = json::array(), scenarios = json::array();
        for (const auto& [id, m] : mazes_)
            mazes.push_back({{"id", id},
                             {"width", m.width},
                             {"height", m.height},
                             {"move_limit", m.move_limit},
                             {"time_limit_s", m.time_limit_s}});
        for (const auto& [id, s] : scenarios_) scenarios.push_back({{"id", id}, {"actions", s.action_ids()}});
        return {200, {{"mazes", mazes}, {"scenarios", scenarios}}};
    }

    ServiceResponse maze(const std::string& id) const {
        auto it = mazes_.find(id);
        if (it == mazes_.end()) return error(404, "unknown maze '" + id + "'");
        return {200, to_json(it->second)};
    }

    /// Registers the HTTP routes on a server.
    void mount(httplib::Server& server) {
        auto reply = [this](httplib::Response& res, const ServiceResponse& r) {
            res.status = r.status;
            res.set_content(r.body.dump(), "application/json");
        };
        server.set_default_headers({{"Access-Control-Allow-Origin", opt_.cors_origin},
                                    {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                    {"Access-Control-Allow-Headers", "Content-Type"}});
        server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
        server.Post("/sessions", [this, reply](const httplib::Request& req, httplib::Response& res) {
            reply(res, guarded([&] { return create(req.body); }));
        });
        server.Get(R"(/sessions/([0-9a-f]+))", [this, reply](const httplib::Request& req, httplib::Response& res) {
            reply(res, guarded([&] { return get(req.matches[1]); }));
        });
        server.Post(R"(/sessions/([0-9a-f]+)/moves)",
                    [this, reply](const httplib::Request& req, httplib::Response& res) {
                        reply(res, guarded([&] { return move(req.matches[1], req.body); }));
                    });
        server.Get(R"(/sessions/([0-9a-f]+)/review)",
                   [this, reply](const httplib::Request& req, httplib::Response& res) {
                       reply(res, guarded([&] { return review(req.matches[1]); }));
                   });
        server.Get("/mazes", [this, reply](const httplib::Request&, httplib::Response& res) {
            reply(res, list_fixtures());
        });
        server.Get(R"(/mazes/([A-Za-z0-9_\-]+))", [this, reply](const httplib::Request& req, httplib::Response& res) {
            reply(res, maze(req.matches[1]));
        });
    }

    std::size_t session_count() const {
        std::shared_lock lock(sessions_mu_);
        return sessions_.size();
    }

    /// Sessions with no explicit deadline: scenario choices get this long.
    static constexpr int kScenarioTimeLimitS = 120;

private:
    static ServiceResponse error(int status, const std::string& message) {
        return {status, {{"error", message}}};
    }

    template <class F>
    ServiceResponse guarded(F&& f) {
        try {
            return f();
        } catch (const ValidationError& e) {
            return error(422, e.what());
        } catch (const std::exception& e) {
            return error(500, e.what());
        }
    }

    static std::optional<ServiceResponse> parse_body(const std::string& body, json& doc) {
        try {
            doc = json::parse(body);
        } catch (const json::parse_error&) {
            return error(422, "body is not valid JSON");
        }
        if (!doc.is_object()) return error(422, "body must be a JSON object");
        return std::nullopt;
    }

    std::shared_ptr<Session> find(const std::string& id) const {
        std::shared_lock lock(sessions_mu_);
        auto it = sessions_.find(id);
        return it == sessions_.end() ? nullptr : it->second;
    }

    static MazeState step_state(const MazeSpec& spec, const MazeState& state, Direction d) {
        return riskaware::step(spec, state, d);
    }

    void append(const std::string& file, const json& line) {
        std::lock_guard lock(file_mu_);
        std::ofstream out(opt_.out / file, std::ios::app | std::ios::binary);
        if (!out) throw IoError("cannot append to " + (opt_.out / file).string());
        out << line.dump() << "\n";
        out.flush();
        if (!out) throw IoError("cannot append to " + (opt_.out / file).string());
    }

    // Caller holds s.mu.
    void check_deadline(Session& s) {
        if (s.status != SessionStatus::active || opt_.now() < s.deadline_ms) return;
        expire(s, s.deadline_ms - s.started_ms);
    }

    void expire(Session& s, std::int64_t t_ms) {
        s.status = SessionStatus::expired;
        if (s.is_maze) {
            s.trajectory.terminal = Outcome::timeout;
            append("trajectories_" + s.fixture + ".jsonl", trajectory_terminal_line(s.trajectory, t_ms));
        }
    }

    json session_view(const Session& s) const {
        json v{{"session_id", s.id},
               {"kind", s.is_maze ? "maze" : "scenario"},
               {"fixture", s.fixture},
               {"subject", s.subject},
               {"status", std::string(to_string(s.status))},
               {"started_ms", s.started_ms},
               {"deadline_ms", s.deadline_ms},
               {"finished", s.status != SessionStatus::active}};
        if (s.is_maze) {
            const MazeSpec& spec = mazes_.at(s.fixture);
            json legal = json::array();
            if (s.status == SessionStatus::active)
                for (Direction d : legal_moves(spec, s.state)) legal.push_back(std::string(to_string(d)));
            v["observation"] = {{"position", {s.state.position.x, s.state.position.y}},
                                {"moves_used", s.state.moves_used}};
            v["legal_actions"] = legal;
            v["remaining_moves"] = spec.move_limit - s.state.moves_used;
            v["step"] = s.state.moves_used;
        } else {
            const ScenarioSpec& sc = scenarios_.at(s.fixture);
            json actions = json::array();
            for (const auto& a : sc.actions) actions.push_back({{"id", a.id}, {"prospect", to_json(a.prospect)}});
            v["observation"] = {{"scenario", sc.name}, {"description", sc.description}, {"actions", actions}};
            v["legal_actions"] = s.status == SessionStatus::active ? json(sc.action_ids()) : json::array();
            v["remaining_moves"] = s.choice ? 0 : 1;
            v["step"] = s.choice ? 1 : 0;
        }
        return v;
    }

    ServiceResponse maze_move(Session& s, const std::string& action) {
        const MazeSpec& spec = mazes_.at(s.fixture);
        const auto legal = legal_moves(spec, s.state);
        std::optional<Direction> d;
        for (Direction l : legal)
            if (to_string(l) == action) d = l;
        if (!d) {
            json names = json::array();
            for (Direction l : legal) names.push_back(std::string(to_string(l)));
            ServiceResponse r = error(400, "illegal move '" + action + "'");
            r.body["legal_actions"] = names;
            return r;
        }
        const std::int64_t t = opt_.now() - s.started_ms;
        s.trajectory.steps.push_back({s.state.position, *d, t});
        append("trajectories_" + s.fixture + ".jsonl", trajectory_step_line(s.trajectory, s.trajectory.steps.size() - 1));
        s.state = step_state(spec, s.state, *d);
        if (s.state.finished) {
            s.status = SessionStatus::finished;
            s.trajectory.terminal = s.state.outcome;
            append("trajectories_" + s.fixture + ".jsonl", trajectory_terminal_line(s.trajectory, t));
        }
        json v = session_view(s);
        if (s.state.finished) {
            double primary = 0.0, alt = 0.0;
            Cell c = spec.start;
            for (const auto& st : s.trajectory.steps) {
                c = moved(c, st.action);
                primary += spec.reward(Grid::primary, c);
                alt += spec.reward(Grid::alt, c);
            }
            v["terminal"] = {{"outcome", std::string(to_string(s.state.outcome))},
                             {"reward_primary", primary},
                             {"reward_alt", alt},
                             {"expected_reward", (1.0 - spec.p_alt) * primary + spec.p_alt * alt}};
        }
        return {200, v};
    }

    ServiceResponse bandit_move(Session& s, const std::string& action) {
        const ScenarioSpec& sc = scenarios_.at(s.fixture);
        const auto ids = sc.action_ids();
        const auto it = std::find(ids.begin(), ids.end(), action);
        if (it == ids.end()) {
            ServiceResponse r = error(400, "illegal action '" + action + "'");
            r.body["legal_actions"] = ids;
            return r;
        }
        s.choice = static_cast<std::size_t>(it - ids.begin());
        s.choice_ms = opt_.now() - s.started_ms;
        s.status = SessionStatus::finished;
        DecisionRecord rec{sc.name, ids, sc.prospects(), *s.choice, 1.0, s.subject};
        json line = choice_line(rec);
        line["session"] = s.id;
        line["t_ms"] = s.choice_ms;
        append("choices_" + s.fixture + ".jsonl", line);
        json v = session_view(s);
        v["terminal"] = {{"outcome", "chosen"},
                         {"action", action},
                         {"prospect", to_json(sc.actions[*s.choice].prospect)},
                         {"expected_reward", expected_reward(sc.actions[*s.choice].prospect)}};
        return {200, v};
    }

    // Rebuilds sessions from the logs. Sessions that were still active when
    // the previous process stopped are closed as expired.
    void reload() {
        const auto index_path = opt_.out / "sessions.jsonl";
        if (!std::filesystem::exists(index_path)) return;
        std::map<std::string, std::vector<Trajectory>> trajectories;
        std::map<std::string, std::map<std::string, json>> choices;
        std::istringstream index(read_text_file(index_path));
        std::string line;
        std::vector<std::shared_ptr<Session>> loaded;
        while (std::getline(index, line)) {
            if (line.empty()) continue;
            const json doc = json::parse(line);
            auto s = std::make_shared<Session>();
            s->id = doc.at("session").get<std::string>();
            s->is_maze = doc.at("kind").get<std::string>() == "maze";
            s->fixture = doc.at("fixture").get<std::string>();
            s->subject = doc.at("subject").get<std::string>();
            s->started_ms = doc.at("started_ms").get<std::int64_t>();
            s->deadline_ms = doc.at("deadline_ms").get<std::int64_t>();
            if (s->is_maze ? !mazes_.contains(s->fixture) : !scenarios_.contains(s->fixture)) continue;
            loaded.push_back(s);
        }
        for (auto& s : loaded) {
            if (s->is_maze) {
                if (!trajectories.contains(s->fixture)) {
                    const auto p = opt_.out / ("trajectories_" + s->fixture + ".jsonl");
                    std::istringstream in(std::filesystem::exists(p) ? read_text_file(p) : std::string{});
                    trajectories[s->fixture] = parse_trajectories(in);
                }
                const MazeSpec& spec = mazes_.at(s->fixture);
                s->state = initial_state(spec);
                s->trajectory = {s->id, s->subject, s->fixture, {}, Outcome::in_progress};
                for (const auto& t : trajectories[s->fixture]) {
                    if (t.session != s->id) continue;
                    s->trajectory = t;
                    for (const auto& st : t.steps) s->state = step_state(spec, s->state, st.action);
                }
                if (s->trajectory.terminal == Outcome::in_progress) {
                    expire(*s, s->trajectory.steps.empty() ? 0 : s->trajectory.steps.back().t_ms);
                } else {
                    s->status = s->state.finished && s->state.outcome == s->trajectory.terminal
                                    ? SessionStatus::finished
                                    : SessionStatus::expired;
                }
            } else {
                if (!choices.contains(s->fixture)) {
                    const auto p = opt_.out / ("choices_" + s->fixture + ".jsonl");
                    auto& by_session = choices[s->fixture];
                    if (std::filesystem::exists(p)) {
                        std::istringstream in(read_text_file(p));
                        std::string l;
                        while (std::getline(in, l))
                            if (!l.empty()) {
                                json c = json::parse(l);
                                by_session[c.value("session", std::string{})] = c;
                            }
                    }
                }
                const auto& by_session = choices[s->fixture];
                if (auto it = by_session.find(s->id); it != by_session.end()) {
                    const auto ids = scenarios_.at(s->fixture).action_ids();
                    const auto chosen = it->second.at("chosen").get<std::string>();
                    s->choice = static_cast<std::size_t>(std::find(ids.begin(), ids.end(), chosen) - ids.begin());
                    s->choice_ms = it->second.value("t_ms", std::int64_t{0});
                    s->status = SessionStatus::finished;
                } else {
                    s->status = SessionStatus::expired;
                }
            }
            sessions_.emplace(s->id, s);
        }
    }

    ServiceOptions opt_;
    std::map<std::string, MazeSpec> mazes_;
    std::map<std::string, DualValues> values_;
    std::map<std::string, ScenarioSpec> scenarios_;
    mutable std::shared_mutex sessions_mu_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::mutex file_mu_;
};

/// Loads every maze under `maze_dir` plus the built-in scenarios.
inline ServiceOptions default_service_options(const std::filesystem::path& out, const std::filesystem::path& maze_dir) {
    ServiceOptions opt;
    opt.out = out;
    if (std::filesystem::is_directory(maze_dir)) {
        std::vector<std::filesystem::path> files;
        for (const auto& e : std::filesystem::directory_iterator(maze_dir))
            if (e.path().extension() == ".json") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) opt.mazes.push_back(read_maze_file(f));
    }
    for (const auto& name : builtin_scenario_names()) opt.scenarios.push_back(builtin_scenario(name));
    return opt;
}

}  // namespace riskaware
