#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "mazeslam/fusion_ekf.hpp"
#include "mazeslam/mcl.hpp"
#include "mazeslam/nav_planner.hpp"
#include "mazeslam/slam_rbpf.hpp"
#include "mazeslam/world_sim.hpp"

namespace mazeslam {

struct ServeConfig {
    int port{8765};
    double tick_hz{20.0};
    /// State frames every this many ticks (10 Hz at the default rate).
    int state_every{2};
    /// Map frames every this many ticks (1 Hz).
    int map_every{20};
    /// Teleop commands expire after this much sim time without a message.
    double deadman_s{0.5};
    int max_scan_beams{90};
    int max_particles{100};
};

struct LocalizeConfig {
    MclConfig mcl{};
    Eigen::Vector3d init_sigma{0.5, 0.5, 0.3};
    /// Mean of the initial cloud; the first ground-truth pose when absent.
    std::optional<Pose2> init_pose;
    /// Odometry source feeding the filter: with_encoders or encoderless.
    std::string odometry{"with_encoders"};
};

/// Every tunable of a run. Parsing rejects unknown keys at any depth.
struct RunConfig {
    std::uint64_t seed{42};
    std::string world;
    /// with_encoders | encoderless | gt-odom
    std::string mode{"encoderless"};
    SimConfig sim{};
    FusionConfig fusion{};
    SlamConfig slam{};
    LocalizeConfig localize{};
    NavConfig nav{};
    /// Raster resolution of ground-truth maps used by eval.
    double truth_resolution{0.05};
    ServeConfig serve{};

    /// Throws UsageError on invalid values.
    void validate() const;
};

[[nodiscard]] RunConfig parse_run_config(const nlohmann::json& j);
[[nodiscard]] RunConfig load_run_config(const std::filesystem::path& path);
[[nodiscard]] nlohmann::json to_json(const RunConfig& cfg);
/// Pretty-printed JSON with a trailing newline.
void write_run_config(const std::filesystem::path& path, const RunConfig& cfg);

/// Maps a mode string onto an odometry source; throws UsageError.
[[nodiscard]] OdometrySource parse_odometry_source(const std::string& mode);
[[nodiscard]] const char* to_string(OdometrySource s) noexcept;

}  // namespace mazeslam
