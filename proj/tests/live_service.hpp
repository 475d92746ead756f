#pragma once

// A SessionService mounted on a real HTTP server bound to a free local port,
// with a hand-driven clock.

#include <atomic>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <thread>

#include <httplib.h>

#include "riskaware/harness.hpp"
#include "riskaware/session_service.hpp"

namespace riskaware::live {

namespace fs = std::filesystem;

/// "S..G" over ".#.G": two legal openings, nearest goal three moves to the right.
inline MazeSpec tiny_maze(int move_limit = 5) {
    json doc{{"id", "tiny"},
             {"width", 4},
             {"height", 2},
             {"walls", json::array({json::array({1, 1})})},
             {"rewards_primary", {{0, 1, 0, 4}, {0, 0, 0, 0}}},
             {"rewards_alt", {{0, -6, 0, 4}, {2, 0, 0, 0}}},
             {"p_alt", 0.2},
             {"start", {0, 0}},
             {"goals", json::array({json::array({3, 0}), json::array({3, 1})})},
             {"move_limit", move_limit},
             {"time_limit_s", 60}};
    return load_maze(doc);
}

inline fs::path fresh_dir(const std::string& tag) {
    auto d = fs::temp_directory_path() / ("riskaware_" + tag + "_" + std::to_string(std::random_device{}()));
    fs::create_directories(d);
    return d;
}

struct ManualClock {
    std::shared_ptr<std::atomic<std::int64_t>> ms = std::make_shared<std::atomic<std::int64_t>>(1'700'000'000'000);
    ClockFn fn() const {
        auto p = ms;
        return [p] { return p->load(); };
    }
    void advance(std::int64_t d) { *ms += d; }
};

class LiveService {
public:
    LiveService(const fs::path& out, const ManualClock& clock, bool with_fixtures = true) {
        ServiceOptions opt = with_fixtures ? default_service_options(out, data_dir() / "mazes") : ServiceOptions{};
        opt.out = out;
        opt.mazes.push_back(tiny_maze());
        if (!with_fixtures)
            for (const auto& name : builtin_scenario_names()) opt.scenarios.push_back(builtin_scenario(name));
        opt.now = clock.fn();
        service_ = std::make_unique<SessionService>(std::move(opt));
        service_->mount(server_);
        port_ = server_.bind_to_any_port("127.0.0.1");
        if (port_ <= 0) throw IoError("cannot bind a local port");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~LiveService() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }
    LiveService(const LiveService&) = delete;
    LiveService& operator=(const LiveService&) = delete;

    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port_);
        c.set_connection_timeout(5);
        c.set_read_timeout(10);
        return c;
    }
    int port() const { return port_; }
    SessionService& service() { return *service_; }

private:
    std::unique_ptr<SessionService> service_;
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
};

struct Reply {
    int status = 0;
    json body;
};

inline Reply to_reply(const httplib::Result& r) {
    if (!r) return {-1, json()};
    return {r->status, r->body.empty() ? json() : json::parse(r->body)};
}

inline Reply post(httplib::Client& c, const std::string& path, const json& body) {
    return to_reply(c.Post(path, body.dump(), "application/json"));
}

inline Reply get(httplib::Client& c, const std::string& path) { return to_reply(c.Get(path)); }

inline std::string create_session(httplib::Client& c, const std::string& fixture, const std::string& subject,
                                  bool maze = true) {
    const auto r = post(c, "/sessions", {{maze ? "maze_id" : "scenario_id", fixture}, {"subject", subject}});
    if (r.status != 201) throw ValidationError("session create failed: " + r.body.dump());
    return r.body["session_id"].get<std::string>();
}

}  // namespace riskaware::live
