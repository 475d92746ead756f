// riskaware command-line harness.
//
// Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 I/O error.

#include <csignal>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <httplib.h>

#include "riskaware/errors.hpp"
#include "riskaware/harness.hpp"
#include "riskaware/io.hpp"
#include "riskaware/scenarios.hpp"
#include "riskaware/session_service.hpp"

namespace {

namespace fs = std::filesystem;
using namespace riskaware;

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> model;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", f.seed, "master seed (overrides the config)");
    cmd->add_option("--out", f.out, "output directory (overrides the config)");
    cmd->add_option("--model", f.model, "models to fit")->check(CLI::IsMember({"nr", "cpt", "both"}));
}

ExperimentConfig load(const CommonFlags& f) {
    ConfigOverrides o;
    o.seed = f.seed;
    if (f.out) o.out = fs::path(*f.out);
    o.models = f.model;
    return load_experiment_config(f.config, o);
}

httplib::Server* g_server = nullptr;

void stop_server(int) {
    if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Risk-aware human modeling workbench"};
    app.require_subcommand(1);

    CommonFlags sim_flags, fit_flags, eval_flags, plan_flags;
    auto* simulate = app.add_subcommand("simulate", "generate choice datasets or maze trajectories");
    add_common(simulate, sim_flags);
    auto* fit = app.add_subcommand("fit", "fit NR and/or CPT models with Metropolis-Hastings");
    add_common(fit, fit_flags);
    auto* eval = app.add_subcommand("eval-maze", "per-user held-out comparison across two mazes");
    add_common(eval, eval_flags);
    auto* plan = app.add_subcommand("plan", "plan robot best responses and simulate interference");
    add_common(plan, plan_flags);

    std::string addr = "127.0.0.1", serve_out = "sessions", mazes_dir = (data_dir() / "mazes").string(), fits_dir;
    int port = 8080;
    auto* serve = app.add_subcommand("serve", "run the live session service");
    serve->add_option("--addr", addr, "bind address");
    serve->add_option("--port", port, "bind port")->check(CLI::Range(0, 65535));
    serve->add_option("--out", serve_out, "session log directory");
    serve->add_option("--mazes", mazes_dir, "directory of maze fixtures");
    serve->add_option("--fits", fits_dir, "directory holding fit_nr.json and fit_cpt.json (default OUT/fits)");

    auto* scenarios = app.add_subcommand("scenarios", "built-in bandit scenarios");
    scenarios->require_subcommand(1);
    auto* list = scenarios->add_subcommand("list", "list scenario names");
    std::string show_name;
    auto* show = scenarios->add_subcommand("show", "print a scenario as JSON");
    show->add_option("name", show_name)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    auto& log = std::cerr;
    harness_log() = &log;
    try {
        if (*simulate) {
            for (const auto& p : cmd_simulate(load(sim_flags))) std::cout << p.string() << "\n";
        } else if (*fit) {
            const auto cfg = load(fit_flags);
            cmd_fit(cfg);
            std::cout << read_text_file(cfg.out / "summary.csv");
        } else if (*eval) {
            const auto cfg = load(eval_flags);
            const auto report = cmd_eval_maze(cfg);
            std::cout << read_text_file(cfg.out / "eval_maze.csv");
            if (cfg.models.size() == 2)
                std::cout << "cpt_wins," << report.cpt_wins() << "/" << report.users.size()
                          << "\nmean_cpt_minus_nr," << report.mean_cpt_advantage() << "\n";
        } else if (*plan) {
            const auto cfg = load(plan_flags);
            cmd_plan(cfg);
            std::cout << read_text_file(cfg.out / "summary.csv");
        } else if (*serve) {
            auto opt = default_service_options(serve_out, mazes_dir);
            if (!fits_dir.empty()) opt.fits_dir = fits_dir;
            SessionService service(std::move(opt));
            httplib::Server server;
            service.mount(server);
            g_server = &server;
            std::signal(SIGINT, stop_server);
            std::signal(SIGTERM, stop_server);
            std::cerr << "listening on " << addr << ":" << port << "\n";
            if (!server.listen(addr, port)) throw IoError("cannot bind " + addr + ":" + std::to_string(port));
        } else if (*list) {
            for (const auto& name : builtin_scenario_names())
                std::cout << name << "\t" << builtin_scenario(name).description << "\n";
        } else if (*show) {
            std::cout << to_json(builtin_scenario(show_name)).dump(2) << "\n";
        }
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
