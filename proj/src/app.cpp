#include "mazeslam/app.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "mazeslam/errors.hpp"

namespace mazeslam {

namespace {

Simulator make_simulator(const WorldModel& world, const RunConfig& cfg) { return Simulator(world, cfg.sim, cfg.seed); }

}  // namespace

std::vector<ScriptCommand> load_script(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError("script " + path.string() + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("commands") || !j["commands"].is_array() || j.size() != 1)
        throw InputError("script must be an object with a single 'commands' array");
    std::vector<ScriptCommand> out;
    std::size_t i = 0;
    for (const auto& c : j["commands"]) {
        const std::string where = "script command " + std::to_string(i++);
        if (!c.is_object()) throw InputError(where + ": expected an object");
        for (const auto& [key, _] : c.items())
            if (key != "duration" && key != "v" && key != "w") throw InputError(where + ": unknown key '" + key + "'");
        for (const char* key : {"duration", "v", "w"})
            if (!c.contains(key) || !c[key].is_number()) throw InputError(where + ": '" + key + "' must be a number");
        ScriptCommand s{c["duration"].get<double>(), {c["v"].get<double>(), c["w"].get<double>()}};
        if (!(s.duration >= 0)) throw InputError(where + ": duration must be non-negative");
        out.push_back(s);
    }
    return out;
}

std::vector<LogRecord> simulate_script(const WorldModel& world, const std::vector<ScriptCommand>& script,
                                       const RunConfig& cfg) {
    Simulator sim = make_simulator(world, cfg);
    std::vector<LogRecord> log = sim.start();
    for (const ScriptCommand& c : script) {
        const long steps = std::lround(c.duration / cfg.sim.dt);
        for (long i = 0; i < steps; ++i) {
            auto recs = sim.step(c.cmd);
            log.insert(log.end(), recs.begin(), recs.end());
        }
    }
    return log;
}

std::vector<LogRecord> simulate_teleop_log(const WorldModel& world, const std::vector<LogRecord>& source,
                                           const RunConfig& cfg) {
    Simulator sim = make_simulator(world, cfg);
    std::vector<LogRecord> log = sim.start();
    for (const LogRecord& r : source) {
        if (const auto* c = r.get<CmdRecord>()) {
            auto recs = sim.step(c->cmd);
            log.insert(log.end(), recs.begin(), recs.end());
        }
    }
    return log;
}

SlamRun run_slam(const std::vector<LogRecord>& log, OdometrySource source, const RunConfig& cfg) {
    SlamSession s(cfg.slam, cfg.fusion, source, cfg.seed);
    for (const LogRecord& r : log) s.consume(r);
    if (!s.initialized()) throw InputError("log contains no scans");
    SlamRun out;
    out.map = s.best().map;
    out.trajectory = s.best().trajectory;
    out.odometry = s.odometry();
    out.updates = s.updates();
    out.resamples = s.resamples();
    out.degenerate = s.degenerate_events();
    return out;
}

LocalizeRun run_localize(const OccupancyGrid& map, const std::vector<LogRecord>& log, const RunConfig& cfg) {
    const Trajectory truth = ground_truth_of(log);
    MclInit init;
    init.sigmas = cfg.localize.init_sigma;
    if (cfg.localize.init_pose) {
        init.mean = *cfg.localize.init_pose;
    } else if (!truth.empty()) {
        init.mean = truth.front().pose;
    } else {
        throw UsageError("localize needs localize.init_pose when the log has no ground truth");
    }
    const FusionMode mode =
        cfg.localize.odometry == "encoderless" ? FusionMode::Encoderless : FusionMode::WithEncoders;
    MclSession s(map, cfg.localize.mcl, cfg.fusion, mode, init, cfg.seed);
    for (const LogRecord& r : log) s.consume(r);
    LocalizeRun out;
    out.estimates = s.estimates();
    out.errors = localization_errors(out.estimates, truth);
    out.updates = s.updates();
    out.resets = s.resets();
    return out;
}

std::string format_report(const EvalReport& r) {
    std::string out;
    char buf[160];
    if (r.map) {
        std::snprintf(buf, sizeof buf, "occ_iou %.4f\nocc_precision %.4f\nocc_recall %.4f\n", r.map->occ_iou,
                      r.map->occ_precision, r.map->occ_recall);
        out += buf;
        if (r.map->agreement_defined) {
            std::snprintf(buf, sizeof buf, "agreement %.4f\n", r.map->agreement);
        } else {
            std::snprintf(buf, sizeof buf, "agreement undefined (no known cells)\n");
        }
        out += buf;
        std::snprintf(buf, sizeof buf, "compared_cells %zu\n", r.map->compared_cells);
        out += buf;
    }
    if (r.ate) {
        std::snprintf(buf, sizeof buf, "ate_rmse_m %.6f\nate_mean_m %.6f\nate_max_m %.6f\npairs %zu\nunpaired %zu\n",
                      r.ate->rmse_m, r.ate->mean_m, r.ate->max_m, r.ate->n_pairs, r.ate->n_unpaired);
        out += buf;
    }
    if (r.heading_rmse) {
        std::snprintf(buf, sizeof buf, "heading_rmse_rad %.6f\n", *r.heading_rmse);
        out += buf;
    }
    return out;
}

}  // namespace mazeslam
