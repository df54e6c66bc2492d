#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mazeslam/geometry.hpp"
#include "mazeslam/grid_map.hpp"
#include "mazeslam/sensor_log.hpp"

namespace mazeslam {

class Simulator;

/// Occupied or unknown cells plus a disc of `radius` around every occupied
/// cell (center to center) become blocked (+8); everything else is free (-8).
[[nodiscard]] OccupancyGrid inflate(const OccupancyGrid& grid, double radius);

[[nodiscard]] inline bool is_blocked(const OccupancyGrid& inflated, CellIndex c) noexcept {
    return !inflated.contains(c) || inflated.classify(c) != CellClass::Free;
}

struct Path {
    std::vector<Vec2> waypoints;
    double total_cost{0};
};

enum class PlanFailure { StartBlocked, GoalBlocked, NoPath };

class PlanError : public std::runtime_error {
public:
    PlanError(PlanFailure kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    [[nodiscard]] PlanFailure kind() const noexcept { return kind_; }

private:
    PlanFailure kind_;
};

/// Octile distance between cell centers.
[[nodiscard]] double octile_distance(CellIndex a, CellIndex b, double resolution) noexcept;

/// 8-connected A* over free cells with the octile heuristic. Straight steps
/// cost the resolution, diagonal steps resolution·√2 (diagonals may pass
/// between two blocked cells). Ties go to the smaller heuristic, then the
/// smaller row-major index. Waypoints are cell centers from start to goal.
[[nodiscard]] Path plan_astar(const OccupancyGrid& inflated, const Pose2& start, Vec2 goal);

/// Free cell closest to `from` (Euclidean, cells within max_cells), or nullopt.
[[nodiscard]] std::optional<CellIndex> nearest_free_cell(const OccupancyGrid& inflated, CellIndex from,
                                                         int max_cells);

struct PursuitConfig {
    double lookahead{0.4};
    double v_cruise{0.3};
    double max_v{0.5};
    double max_w{1.5};
};

/// Pure-pursuit command toward the first waypoint at least `lookahead` of
/// arc past the closest waypoint. Speed tapers linearly inside the last
/// lookahead of the path. A target more than 90° off the heading makes the
/// robot turn in place at max_w/2.
[[nodiscard]] Twist2 pure_pursuit(const Pose2& pose, const Path& path, const PursuitConfig& cfg);

/// Distance from p to the path polyline.
[[nodiscard]] double distance_to_path(Vec2 p, const Path& path) noexcept;

struct NavConfig {
    double inflation_radius{0.3};
    PursuitConfig pursuit{};
    double goal_tolerance{0.10};
    double heading_tolerance{0.15};
    double replan_deviation{0.5};
    double stuck_timeout{10.0};
    double stuck_progress{0.05};
    /// Planning starts from the closest free cell when the robot stands in
    /// inflated space, searched up to this many cells away.
    int start_snap_cells{8};
};

enum class NavOutcome { Running, Reached, NoPath, Stuck };

[[nodiscard]] const char* to_string(NavOutcome o) noexcept;

struct NavTick {
    Twist2 cmd;
    NavOutcome outcome{NavOutcome::Running};
    bool replanned{false};
};

/// Closed-loop goal follower: plan once, pursue, replan on deviation or map
/// change, and give up when progress stalls.
class Navigator {
public:
    Navigator(OccupancyGrid map, Vec2 goal, std::optional<double> goal_heading, const NavConfig& cfg);

    /// One control step at time t for the localized pose.
    NavTick tick(const Pose2& pose, double t);
    /// New map (e.g. from SLAM): the plan is rebuilt on the next tick.
    void set_map(OccupancyGrid map);

    [[nodiscard]] const Path& path() const noexcept { return path_; }
    [[nodiscard]] const OccupancyGrid& inflated() const noexcept { return inflated_; }
    [[nodiscard]] std::size_t replans() const noexcept { return replans_; }
    [[nodiscard]] Vec2 goal() const noexcept { return goal_; }

private:
    bool replan(const Pose2& pose);

    OccupancyGrid inflated_;
    Vec2 goal_;
    std::optional<double> goal_heading_;
    NavConfig cfg_;
    Path path_;
    bool need_plan_{true};
    std::size_t replans_{0};
    std::optional<double> anchor_t_;
    Vec2 anchor_;
    NavOutcome done_{NavOutcome::Running};
};

struct NavResult {
    NavOutcome outcome{NavOutcome::Running};
    Trajectory trajectory;
    double path_length{0};
    double elapsed{0};
    std::size_t replans{0};
    /// First plan from the start pose (empty when none was found).
    Path initial_plan;
};

/// Runs a Navigator against a simulator with ground-truth localization
/// until an outcome or `max_time` seconds of sim time.
[[nodiscard]] NavResult navigate(Simulator& sim, const OccupancyGrid& map, Vec2 goal,
                                 std::optional<double> goal_heading, const NavConfig& cfg, double max_time = 300.0);

}  // namespace mazeslam
