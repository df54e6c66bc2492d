#include "mazeslam/mazeslam.h"

#include <cstring>
#include <fstream>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "mazeslam/app.hpp"
#include "mazeslam/errors.hpp"
#include "mazeslam/ws_server.hpp"

using nlohmann::json;
namespace fs = std::filesystem;
namespace ms = mazeslam;

struct ms_config {
    ms::RunConfig cfg;
};

struct ms_server {
    std::unique_ptr<ms::WsServer> server;
};

namespace {

thread_local std::string g_last_error;

template <class F>
ms_status guarded(F&& f) noexcept {
    g_last_error.clear();
    try {
        f();
        return MS_OK;
    } catch (const ms::UsageError& e) {
        g_last_error = e.what();
        return MS_ERR_USAGE;
    } catch (const ms::InputError& e) {
        g_last_error = e.what();
        return MS_ERR_INPUT;
    } catch (const ms::IoError& e) {
        g_last_error = e.what();
        return MS_ERR_INPUT;
    } catch (const ms::EvalError& e) {
        g_last_error = e.what();
        return MS_ERR_INPUT;
    } catch (const json::exception& e) {
        g_last_error = e.what();
        return MS_ERR_INPUT;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return MS_ERR_RUNTIME;
    } catch (...) {
        g_last_error = "unknown error";
        return MS_ERR_RUNTIME;
    }
}

void require(const void* p, const char* name) {
    if (p == nullptr) throw ms::UsageError(std::string(name) + " must not be null");
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out == nullptr) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

std::optional<std::string> opt(const char* s) {
    if (s == nullptr || *s == '\0') return std::nullopt;
    return std::string(s);
}

ms::WorldModel world_for(const ms::RunConfig& cfg, const char* override_path) {
    const auto path = opt(override_path).value_or(cfg.world);
    if (path.empty()) throw ms::UsageError("no world given (--world or config world)");
    return ms::load_world(path);
}

/// Writes config.json and summary.json, and hands the summary back.
void finish(const fs::path& out, ms::RunConfig cfg, const json& summary, char** summary_out) {
    cfg.validate();
    ms::write_run_config(out / "config.json", cfg);
    const std::string text = summary.dump(2) + "\n";
    std::ofstream f(out / "summary.json", std::ios::binary);
    if (!(f << text)) throw ms::IoError("cannot write " + (out / "summary.json").string());
    if (summary_out != nullptr) *summary_out = dup_string(text);
}

fs::path prepare_out(const char* out_dir) {
    require(out_dir, "out_dir");
    const fs::path out(out_dir);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw ms::IoError("cannot create " + out.string() + ": " + ec.message());
    return out;
}

json ate_json(const ms::AteResult& a) {
    return {{"rmse_m", a.rmse_m}, {"mean_m", a.mean_m}, {"max_m", a.max_m}, {"pairs", a.n_pairs},
            {"unpaired", a.n_unpaired}};
}

json map_json(const ms::MapScore& m) {
    return {{"occ_iou", m.occ_iou},
            {"occ_precision", m.occ_precision},
            {"occ_recall", m.occ_recall},
            {"agreement", m.agreement},
            {"agreement_defined", m.agreement_defined},
            {"compared_cells", m.compared_cells}};
}

}  // namespace

extern "C" {

const char* ms_version(void) { return "0.1.0"; }

const char* ms_last_error(void) { return g_last_error.c_str(); }

void ms_string_free(char* s) { std::free(s); }

ms_status ms_config_new(ms_config** out) {
    return guarded([&] {
        require(out, "out");
        *out = new ms_config{};
    });
}

ms_status ms_config_load(const char* path, ms_config** out) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        *out = new ms_config{ms::load_run_config(path)};
    });
}

ms_status ms_config_parse(const char* text, ms_config** out) {
    return guarded([&] {
        require(text, "json");
        require(out, "out");
        json j;
        try {
            j = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ms::InputError(std::string("config: ") + e.what());
        }
        *out = new ms_config{ms::parse_run_config(j)};
    });
}

void ms_config_free(ms_config* cfg) { delete cfg; }

ms_status ms_config_set_seed(ms_config* cfg, uint64_t seed) {
    return guarded([&] {
        require(cfg, "cfg");
        cfg->cfg.seed = seed;
    });
}

ms_status ms_config_set_mode(ms_config* cfg, const char* mode) {
    return guarded([&] {
        require(cfg, "cfg");
        require(mode, "mode");
        (void)ms::parse_odometry_source(mode);
        cfg->cfg.mode = mode;
    });
}

ms_status ms_config_set_world(ms_config* cfg, const char* world_path) {
    return guarded([&] {
        require(cfg, "cfg");
        require(world_path, "world_path");
        cfg->cfg.world = world_path;
    });
}

ms_status ms_config_set_port(ms_config* cfg, int port) {
    return guarded([&] {
        require(cfg, "cfg");
        if (port < 0 || port > 65535) throw ms::UsageError("port must be in [0, 65535]");
        cfg->cfg.serve.port = port;
    });
}

ms_status ms_config_to_json(const ms_config* cfg, char** out) {
    return guarded([&] {
        require(cfg, "cfg");
        require(out, "out");
        *out = dup_string(ms::to_json(cfg->cfg).dump(2) + "\n");
    });
}

ms_status ms_simulate(const ms_config* cfg, const char* world_path, const char* script_path,
                      const char* teleop_log_path, const char* out_dir, char** summary) {
    return guarded([&] {
        require(cfg, "cfg");
        ms::RunConfig c = cfg->cfg;
        c.validate();
        const auto script = opt(script_path);
        const auto teleop = opt(teleop_log_path);
        if (script.has_value() == teleop.has_value())
            throw ms::UsageError("simulate needs exactly one of a script or a teleop log");
        const ms::WorldModel world = world_for(c, world_path);
        if (auto w = opt(world_path)) c.world = *w;
        const fs::path out = prepare_out(out_dir);
        const auto log = script ? ms::simulate_script(world, ms::load_script(*script), c)
                                : ms::simulate_teleop_log(world, ms::read_log(fs::path(*teleop)), c);
        ms::write_log(out / "log.jsonl", log);
        std::size_t scans = 0;
        for (const auto& r : log) scans += r.get<ms::LidarScan>() != nullptr;
        finish(out, c,
               {{"command", "simulate"},
                {"records", log.size()},
                {"scans", scans},
                {"duration_s", log.empty() ? 0.0 : log.back().t}},
               summary);
    });
}

ms_status ms_slam(const ms_config* cfg, const char* log_path, const char* mode, const char* out_dir, char** summary) {
    return guarded([&] {
        require(cfg, "cfg");
        require(log_path, "log_path");
        ms::RunConfig c = cfg->cfg;
        if (auto m = opt(mode)) c.mode = *m;
        c.validate();
        const ms::OdometrySource source = ms::parse_odometry_source(c.mode);
        const auto log = ms::read_log(fs::path(log_path));
        const fs::path out = prepare_out(out_dir);
        const ms::SlamRun run = ms::run_slam(log, source, c);
        ms::save_map(run.map, out / "map");
        ms::write_trajectory_csv(out / "trajectory.csv", run.trajectory);
        ms::write_trajectory_csv(out / "odometry.csv", run.odometry);
        finish(out, c,
               {{"command", "slam"},
                {"mode", c.mode},
                {"updates", run.updates},
                {"resamples", run.resamples},
                {"degenerate_resets", run.degenerate},
                {"poses", run.trajectory.size()}},
               summary);
    });
}

ms_status ms_localize(const ms_config* cfg, const char* map_path, const char* log_path, const char* out_dir,
                      char** summary) {
    return guarded([&] {
        require(cfg, "cfg");
        require(map_path, "map_path");
        require(log_path, "log_path");
        const ms::RunConfig c = cfg->cfg;
        c.validate();
        const ms::OccupancyGrid map = ms::load_map(map_path);
        const auto log = ms::read_log(fs::path(log_path));
        const fs::path out = prepare_out(out_dir);
        const ms::LocalizeRun run = ms::run_localize(map, log, c);
        ms::write_trajectory_csv(out / "estimates.csv", run.estimates);
        ms::write_error_csv(out / "errors.csv", run.errors);
        json s{{"command", "localize"}, {"updates", run.updates}, {"resets", run.resets},
               {"paired", run.errors.size()}};
        if (!run.errors.empty()) {
            s["final_pos_err_m"] = run.errors.back().pos_err_m;
            s["final_heading_err_rad"] = run.errors.back().heading_err_rad;
        }
        finish(out, c, s, summary);
    });
}

ms_status ms_navigate(const ms_config* cfg, const char* world_path, double goal_x, double goal_y, int has_heading,
                      double goal_heading, const char* out_dir, char** summary) {
    return guarded([&] {
        require(cfg, "cfg");
        ms::RunConfig c = cfg->cfg;
        c.validate();
        const ms::WorldModel world = world_for(c, world_path);
        if (auto w = opt(world_path)) c.world = *w;
        const fs::path out = prepare_out(out_dir);
        const ms::OccupancyGrid truth = ms::rasterize_world(world, c.truth_resolution);
        ms::Simulator sim(world, c.sim, c.seed);
        const std::optional<double> heading = has_heading ? std::optional<double>(goal_heading) : std::nullopt;
        const ms::NavResult r = ms::navigate(sim, truth, {goal_x, goal_y}, heading, c.nav);
        ms::write_trajectory_csv(out / "trajectory.csv", r.trajectory);
        {
            std::ofstream f(out / "path.csv", std::ios::binary);
            f << "x,y\n";
            f.precision(17);
            for (const auto& p : r.initial_plan.waypoints) f << p.x << ',' << p.y << '\n';
            if (!f) throw ms::IoError("cannot write " + (out / "path.csv").string());
        }
        json s{{"command", "navigate"},
               {"outcome", ms::to_string(r.outcome)},
               {"goal", {goal_x, goal_y}},
               {"path_length_m", r.path_length},
               {"elapsed_s", r.elapsed},
               {"replans", r.replans}};
        s["planned_cost_m"] = r.initial_plan.waypoints.empty() ? json(nullptr) : json(r.initial_plan.total_cost);
        finish(out, c, s, summary);
    });
}

ms_status ms_eval(const ms_config* cfg, const ms_eval_inputs* in, const char* out_dir, char** summary) {
    return guarded([&] {
        require(cfg, "cfg");
        require(in, "inputs");
        const ms::RunConfig c = cfg->cfg;
        c.validate();
        ms::EvalReport report;
        json s{{"command", "eval"}};
        const fs::path out = prepare_out(out_dir);
        if (auto m = opt(in->map_path)) {
            const ms::OccupancyGrid map = ms::load_map(*m);
            ms::OccupancyGrid truth;
            if (auto t = opt(in->truth_map_path)) {
                truth = ms::load_map(*t);
            } else if (auto w = opt(in->world_path)) {
                truth = ms::rasterize_world(ms::load_world(*w), c.truth_resolution);
                ms::save_map(truth, out / "truth_map");
            } else {
                throw ms::UsageError("eval of a map needs a truth map or a world");
            }
            report.map = ms::map_compare(map, truth);
            s["map"] = map_json(*report.map);
        }
        std::optional<ms::Trajectory> est;
        if (auto t = opt(in->trajectory_path)) {
            est = ms::read_trajectory_csv(*t);
            ms::Trajectory truth;
            if (auto p = opt(in->truth_path)) {
                truth = ms::read_trajectory_csv(*p);
            } else if (auto l = opt(in->log_path)) {
                truth = ms::ground_truth_of(ms::read_log(fs::path(*l)));
            } else {
                throw ms::UsageError("eval of a trajectory needs a truth trajectory or a log");
            }
            report.ate = ms::ate_rmse(*est, truth);
            report.heading_rmse = ms::heading_rmse(*est, truth);
            report.errors = ms::localization_errors(*est, truth, 0.05);
            s["ate"] = ate_json(*report.ate);
            s["heading_rmse_rad"] = *report.heading_rmse;
        }
        if (!report.map && !report.ate) throw ms::UsageError("eval needs a map or a trajectory to score");
        {
            std::ofstream f(out / "report.txt", std::ios::binary);
            if (!(f << ms::format_report(report))) throw ms::IoError("cannot write " + (out / "report.txt").string());
        }
        if (report.ate) ms::write_error_csv(out / "errors.csv", report.errors);
        finish(out, c, s, summary);
    });
}

ms_status ms_server_new(const ms_config* cfg, const char* world_path, const char* out_dir, double duration_s,
                        ms_server** out) {
    return guarded([&] {
        require(cfg, "cfg");
        require(out, "out");
        ms::RunConfig c = cfg->cfg;
        c.validate();
        ms::WorldModel world = world_for(c, world_path);
        if (auto w = opt(world_path)) c.world = *w;
        const fs::path dir = prepare_out(out_dir);
        const std::optional<double> duration = duration_s > 0 ? std::optional<double>(duration_s) : std::nullopt;
        *out = new ms_server{std::make_unique<ms::WsServer>(std::move(world), std::move(c), dir, duration)};
    });
}

int ms_server_port(const ms_server* srv) { return srv == nullptr ? -1 : srv->server->port(); }

ms_status ms_server_start(ms_server* srv) {
    return guarded([&] {
        require(srv, "srv");
        srv->server->start();
    });
}

ms_status ms_server_run(ms_server* srv) {
    return guarded([&] {
        require(srv, "srv");
        srv->server->run(true);
        if (!srv->server->saved()) throw std::runtime_error("session ended without saving artifacts");
    });
}

ms_status ms_server_stop(ms_server* srv) {
    return guarded([&] {
        require(srv, "srv");
        srv->server->stop();
    });
}

ms_status ms_server_wait(ms_server* srv) {
    return guarded([&] {
        require(srv, "srv");
        srv->server->wait();
        if (!srv->server->saved()) throw std::runtime_error("session ended without saving artifacts");
    });
}

void ms_server_free(ms_server* srv) { delete srv; }

}  // extern "C"
