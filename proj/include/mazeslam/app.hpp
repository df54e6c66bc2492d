#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "mazeslam/eval_metrics.hpp"
#include "mazeslam/mcl.hpp"
#include "mazeslam/nav_planner.hpp"
#include "mazeslam/run_config.hpp"
#include "mazeslam/sensor_log.hpp"
#include "mazeslam/slam_rbpf.hpp"
#include "mazeslam/world_sim.hpp"

namespace mazeslam {

struct ScriptCommand {
    double duration{0};
    Twist2 cmd;
};

/// Reads {"commands": [{"duration", "v", "w"}, ...]}; unknown keys rejected.
[[nodiscard]] std::vector<ScriptCommand> load_script(const std::filesystem::path& path);

/// Drives the simulator through a command script; each command holds for
/// round(duration / dt) steps.
[[nodiscard]] std::vector<LogRecord> simulate_script(const WorldModel& world, const std::vector<ScriptCommand>& script,
                                                     const RunConfig& cfg);

/// Re-drives the simulator with the cmd records of an earlier log, one step
/// per record. With the same seed and config this reproduces that log.
[[nodiscard]] std::vector<LogRecord> simulate_teleop_log(const WorldModel& world, const std::vector<LogRecord>& source,
                                                         const RunConfig& cfg);

struct SlamRun {
    OccupancyGrid map;
    Trajectory trajectory;
    Trajectory odometry;
    std::size_t updates{0};
    std::size_t resamples{0};
    std::size_t degenerate{0};
};

[[nodiscard]] SlamRun run_slam(const std::vector<LogRecord>& log, OdometrySource source, const RunConfig& cfg);

struct LocalizeRun {
    Trajectory estimates;
    std::vector<LocalizationError> errors;
    std::size_t updates{0};
    std::size_t resets{0};
};

/// MCL over a log against a known map. The initial mean is the configured
/// init pose or else the first ground-truth record.
[[nodiscard]] LocalizeRun run_localize(const OccupancyGrid& map, const std::vector<LogRecord>& log,
                                       const RunConfig& cfg);

struct EvalReport {
    std::optional<MapScore> map;
    std::optional<AteResult> ate;
    std::optional<double> heading_rmse;
    std::vector<LocalizationError> errors;
};

[[nodiscard]] std::string format_report(const EvalReport& r);

}  // namespace mazeslam
