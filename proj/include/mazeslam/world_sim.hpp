#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include "mazeslam/geometry.hpp"
#include "mazeslam/rng.hpp"
#include "mazeslam/sensor_log.hpp"

namespace mazeslam {

struct Segment {
    Vec2 a;
    Vec2 b;
    [[nodiscard]] double length() const noexcept { return (b - a).norm(); }
};

struct Bounds {
    double xmin{0}, ymin{0}, xmax{0}, ymax{0};
    [[nodiscard]] bool contains(Vec2 p) const noexcept {
        return p.x >= xmin && p.x <= xmax && p.y >= ymin && p.y <= ymax;
    }
};

/// Maze world made of wall segments.
struct WorldModel {
    std::vector<Segment> segments;
    Bounds bounds;
    Pose2 spawn;

    /// Smallest distance from p to any segment (+inf for an empty world).
    [[nodiscard]] double clearance(Vec2 p) const noexcept;

    /// Throws InputError on zero-length segments or an invalid spawn.
    void validate(double body_radius) const;
};

[[nodiscard]] double point_segment_distance(Vec2 p, const Segment& s) noexcept;

/// Parses the world JSON format:
/// {"bounds": [xmin, ymin, xmax, ymax], "spawn": [x, y, theta], "segments": [[x1, y1, x2, y2], ...]}
[[nodiscard]] WorldModel parse_world(std::string_view json_text);
[[nodiscard]] WorldModel load_world(const std::filesystem::path& path);

struct RobotParams {
    double wheel_radius{0.05};
    double wheel_base{0.30};
    double body_radius{0.18};
    double max_v{0.5};
    double max_w{1.5};
};

struct LidarConfig {
    int n_beams{180};
    double fov{2.0 * kPi};
    double max_range{4.0};
    double sigma_range{0.01};
    double min_range{0.05};

    [[nodiscard]] double angle_min() const noexcept { return -fov / 2.0; }
    /// Full-circle scanners do not repeat the seam beam.
    [[nodiscard]] double angle_inc() const noexcept {
        const bool full_circle = fov >= 2.0 * kPi - 1e-12;
        return full_circle ? fov / n_beams : fov / (n_beams - 1);
    }
};

struct ImuConfig {
    double sigma_gyro{0.02};
    double sigma_bias_walk{0.001};
    double initial_bias{0.0};
};

/// Per-wheel angular-rate noise of the encoders.
struct OdomNoiseConfig {
    double sigma_wheel{0.2};
};

struct SimConfig {
    double dt{0.05};
    int scan_every{2};
    RobotParams robot;
    LidarConfig lidar;
    ImuConfig imu;
    OdomNoiseConfig odom;
};

struct ImuSample {
    double stamp{0};
    double gyro_z{0};
    double bias_state{0};
};

/// Independent noise streams, one per sensor.
struct SensorStreams {
    Rng lidar;
    Rng imu;
    Rng odom;

    static SensorStreams from_seed(std::uint64_t seed) noexcept;
};

/// The simulator's ground truth.
struct SimState {
    double clock{0};
    std::uint64_t step_index{0};
    Pose2 true_pose;
    Twist2 commanded;
    bool collision{false};
    double imu_bias{0};
    SensorStreams streams;
};

/// Exact unicycle integration over dt (straight line when |w| < 1e-9).
[[nodiscard]] Pose2 step_exact(const Pose2& pose, Twist2 cmd, double dt) noexcept;

[[nodiscard]] Twist2 wheels_to_twist(double w_left, double w_right, const RobotParams& params) noexcept;

struct WheelRates {
    double left{0};
    double right{0};
};
[[nodiscard]] WheelRates twist_to_wheels(Twist2 twist, const RobotParams& params) noexcept;

/// Distance along the ray to the nearest wall, or nullopt when nothing is
/// hit within max_range.
[[nodiscard]] std::optional<double> raycast_world(const WorldModel& world, Vec2 origin, double angle,
                                                  double max_range) noexcept;

/// Draws exactly cfg.n_beams Gaussian samples from rng, in beam order.
[[nodiscard]] LidarScan simulate_lidar(const WorldModel& world, const Pose2& pose, const LidarConfig& cfg,
                                       Rng& rng, double stamp = 0.0);

/// gyro = true_w + bias + N(0, sigma_gyro²); then bias ← bias + N(0, sigma_bias_walk²·dt).
[[nodiscard]] ImuSample simulate_imu(double true_w, const ImuConfig& cfg, double dt, double& bias, Rng& rng,
                                     double stamp = 0.0);

/// Records emitted at t = 0 before the first step: ground truth and a scan.
[[nodiscard]] std::vector<LogRecord> sim_initial_records(SimState& state, const WorldModel& world,
                                                         const SimConfig& cfg);

/// One fixed step. Rate records (cmd, odom, imu) are stamped at the start of
/// the interval they describe; gt and (every scan_every-th step) the scan are
/// stamped at its end.
[[nodiscard]] std::vector<LogRecord> sim_step(SimState& state, Twist2 cmd, const WorldModel& world,
                                              const SimConfig& cfg);

/// Owns a world and a state; convenience for drivers that step repeatedly.
class Simulator {
public:
    Simulator(WorldModel world, SimConfig cfg, std::uint64_t seed);

    [[nodiscard]] std::vector<LogRecord> start();
    [[nodiscard]] std::vector<LogRecord> step(Twist2 cmd) { return sim_step(state_, cmd, world_, cfg_); }
    void reset();

    [[nodiscard]] const SimState& state() const noexcept { return state_; }
    [[nodiscard]] const WorldModel& world() const noexcept { return world_; }
    [[nodiscard]] const SimConfig& config() const noexcept { return cfg_; }

private:
    WorldModel world_;
    SimConfig cfg_;
    std::uint64_t seed_;
    SimState state_;
};

}  // namespace mazeslam
