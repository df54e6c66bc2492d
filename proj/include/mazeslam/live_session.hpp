#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mazeslam/nav_planner.hpp"
#include "mazeslam/run_config.hpp"
#include "mazeslam/sensor_log.hpp"
#include "mazeslam/slam_rbpf.hpp"
#include "mazeslam/world_sim.hpp"

namespace mazeslam {

/// Run-length encoding of trinary cells in storage order: [value, count, ...]
/// with 0 free, 100 occupied, -1 unknown.
[[nodiscard]] nlohmann::json rle_cells(const OccupancyGrid& grid);
[[nodiscard]] std::vector<int> rle_decode(const nlohmann::json& cells);

/// The authoritative simulation + SLAM loop of a live session, free of any
/// networking. Messages are applied between ticks; every tick advances the
/// simulator by one step.
class LiveSession {
public:
    LiveSession(WorldModel world, RunConfig cfg);

    /// Applies one client text frame. Returns an error frame for malformed
    /// messages or control attempts from observers; nothing otherwise.
    std::optional<std::string> handle(std::string_view text, bool from_driver);
    /// The driver left: its teleop command is dropped immediately.
    void driver_lost();

    struct TickOutput {
        std::vector<std::string> frames;
    };
    TickOutput tick();

    [[nodiscard]] std::string state_frame() const;
    [[nodiscard]] std::string map_frame() const;

    /// Writes map.pgm/.yaml, log.jsonl, config.json, trajectory.csv.
    void save(const std::filesystem::path& dir) const;

    [[nodiscard]] const std::vector<LogRecord>& log() const noexcept { return log_; }
    [[nodiscard]] const SimState& sim_state() const noexcept { return sim_.state(); }
    [[nodiscard]] const SlamSession& slam() const noexcept { return slam_; }
    [[nodiscard]] const RunConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] Twist2 active_command() const noexcept;
    [[nodiscard]] std::uint64_t ticks() const noexcept { return ticks_; }
    [[nodiscard]] std::optional<NavOutcome> nav_outcome() const noexcept { return nav_outcome_; }

private:
    void restart();
    [[nodiscard]] OccupancyGrid current_map() const;

    WorldModel world_;
    RunConfig cfg_;
    Simulator sim_;
    SlamSession slam_;
    std::vector<LogRecord> log_;
    std::optional<Twist2> teleop_;
    double teleop_clock_{0};
    std::optional<Navigator> nav_;
    std::optional<NavOutcome> nav_outcome_;
    std::uint64_t ticks_{0};
};

}  // namespace mazeslam
