// Command-line front end. Links only the C API.
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mazeslam/mazeslam.h"

namespace {

struct ConfigHandle {
    ms_config* p{nullptr};
    ~ConfigHandle() { ms_config_free(p); }
};

const char* c_str_or_null(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

int report(ms_status st, char* summary) {
    if (st != MS_OK) {
        std::fprintf(stderr, "error: %s\n", ms_last_error());
        return static_cast<int>(st);
    }
    if (summary != nullptr) std::fputs(summary, stdout);
    ms_string_free(summary);
    return 0;
}

std::optional<std::vector<double>> parse_numbers(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        char* end = nullptr;
        const double v = std::strtod(item.c_str(), &end);
        if (item.empty() || end != item.c_str() + item.size()) return std::nullopt;
        out.push_back(v);
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"2D SLAM workbench: simulate, map, localize, navigate, evaluate, serve"};
    app.require_subcommand(1);

    std::optional<std::uint64_t> seed;
    std::string config_path;
    std::string out_dir = "out";
    app.add_option("--seed", seed, "Random seed (overrides the config)");
    app.add_option("--config", config_path, "RunConfig JSON file")->check(CLI::ExistingFile);
    app.add_option("--out", out_dir, "Output directory");

    std::string world, script, teleop_log;
    auto* simulate = app.add_subcommand("simulate", "Run the simulator and write a SensorLog");
    simulate->add_option("--world", world, "World JSON");
    auto* script_opt = simulate->add_option("--script", script, "Command script JSON");
    auto* teleop_opt = simulate->add_option("--teleop-from-log", teleop_log, "Replay the commands of a SensorLog");
    script_opt->excludes(teleop_opt);

    std::string log_path, mode;
    auto* slam = app.add_subcommand("slam", "Build a map and trajectory from a SensorLog");
    slam->add_option("--log", log_path, "SensorLog JSONL")->required();
    slam->add_option("--mode", mode, "with_encoders | encoderless | gt-odom")
        ->check(CLI::IsMember({"with_encoders", "encoderless", "gt-odom"}));

    std::string map_path;
    auto* localize = app.add_subcommand("localize", "Run MCL on a known map");
    localize->add_option("--map", map_path, "Map path (map.pgm or its stem)")->required();
    localize->add_option("--log", log_path, "SensorLog JSONL")->required();

    std::string goal;
    auto* navigate = app.add_subcommand("navigate", "Drive to a goal with ground-truth localization");
    navigate->add_option("--world", world, "World JSON");
    navigate->add_option("--goal", goal, "Goal as x,y or x,y,theta")->required();

    std::string truth_map, trajectory, truth;
    auto* eval = app.add_subcommand("eval", "Score a map and/or a trajectory");
    eval->add_option("--map", map_path, "Estimated map");
    eval->add_option("--truth-map", truth_map, "Reference map");
    eval->add_option("--world", world, "World to rasterize as the reference map");
    eval->add_option("--trajectory", trajectory, "Estimated trajectory CSV");
    eval->add_option("--truth", truth, "Reference trajectory CSV");
    eval->add_option("--log", log_path, "SensorLog whose gt records are the reference trajectory");

    int port = -1;
    double duration = 0;
    auto* serve = app.add_subcommand("serve", "Run a live WebSocket session");
    serve->add_option("--world", world, "World JSON");
    serve->add_option("--port", port, "TCP port (0 picks one)")->check(CLI::Range(0, 65535));
    serve->add_option("--duration", duration, "Stop after this many seconds of sim time");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    ConfigHandle cfg;
    ms_status st = config_path.empty() ? ms_config_new(&cfg.p) : ms_config_load(config_path.c_str(), &cfg.p);
    if (st == MS_OK && seed) st = ms_config_set_seed(cfg.p, *seed);
    if (st == MS_OK && serve->parsed() && port >= 0) st = ms_config_set_port(cfg.p, port);
    if (st != MS_OK) return report(st, nullptr);

    char* summary = nullptr;
    if (simulate->parsed()) {
        st = ms_simulate(cfg.p, c_str_or_null(world), c_str_or_null(script), c_str_or_null(teleop_log),
                         out_dir.c_str(), &summary);
    } else if (slam->parsed()) {
        st = ms_slam(cfg.p, log_path.c_str(), c_str_or_null(mode), out_dir.c_str(), &summary);
    } else if (localize->parsed()) {
        st = ms_localize(cfg.p, map_path.c_str(), log_path.c_str(), out_dir.c_str(), &summary);
    } else if (navigate->parsed()) {
        const auto g = parse_numbers(goal);
        if (!g || (g->size() != 2 && g->size() != 3)) {
            std::fprintf(stderr, "error: --goal expects x,y or x,y,theta\n");
            return 1;
        }
        const bool has_heading = g->size() == 3;
        st = ms_navigate(cfg.p, c_str_or_null(world), (*g)[0], (*g)[1], has_heading ? 1 : 0,
                         has_heading ? (*g)[2] : 0.0, out_dir.c_str(), &summary);
    } else if (eval->parsed()) {
        const ms_eval_inputs in{c_str_or_null(map_path),   c_str_or_null(truth_map), c_str_or_null(world),
                                c_str_or_null(trajectory), c_str_or_null(truth),     c_str_or_null(log_path)};
        st = ms_eval(cfg.p, &in, out_dir.c_str(), &summary);
    } else if (serve->parsed()) {
        ms_server* srv = nullptr;
        st = ms_server_new(cfg.p, c_str_or_null(world), out_dir.c_str(), duration, &srv);
        if (st != MS_OK) return report(st, nullptr);
        std::fprintf(stderr, "listening on port %d\n", ms_server_port(srv));
        std::fflush(stderr);
        st = ms_server_run(srv);
        ms_server_free(srv);
        if (st == MS_OK) std::fprintf(stdout, "session saved to %s\n", out_dir.c_str());
    }
    return report(st, summary);
}
