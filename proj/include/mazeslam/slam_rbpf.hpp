#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "mazeslam/fusion_ekf.hpp"
#include "mazeslam/geometry.hpp"
#include "mazeslam/grid_map.hpp"
#include "mazeslam/rng.hpp"
#include "mazeslam/scan_matcher.hpp"
#include "mazeslam/sensor_log.hpp"

namespace mazeslam {

/// Motion-noise mixing (alpha1..alpha4 of the odometry motion model).
struct OdometryNoise {
    double a1{0.1};
    double a2{0.1};
    double a3{0.05};
    double a4{0.05};
};

/// rot1-trans-rot2 decomposition of a relative motion. Backward motion is
/// expressed as a negative translation so rotations stay small.
struct OdometryDelta {
    double rot1{0};
    double trans{0};
    double rot2{0};

    [[nodiscard]] static OdometryDelta from_relative(const Pose2& delta) noexcept;
    [[nodiscard]] static OdometryDelta between_poses(const Pose2& a, const Pose2& b) noexcept {
        return from_relative(between(a, b));
    }
};

/// prev advanced by rot1, then trans, then rot2.
[[nodiscard]] Pose2 apply_odometry(const Pose2& prev, const OdometryDelta& d) noexcept;

/// Jacobian of apply_odometry with respect to (x, y, theta, rot1, trans, rot2).
[[nodiscard]] Eigen::Matrix<double, 3, 6> apply_odometry_jacobian(const Pose2& prev, const OdometryDelta& d) noexcept;

/// Samples the odometry motion model. Consumes exactly three Gaussian draws.
[[nodiscard]] Pose2 sample_odometry_motion(const Pose2& prev, const OdometryDelta& d, const OdometryNoise& alphas,
                                           Rng& rng) noexcept;

struct MapBounds {
    double xmin{-1}, ymin{-1}, xmax{9}, ymax{9};
};

struct SlamConfig {
    int n_particles{30};
    double resample_ratio{0.5};
    double linear_update{0.25};
    double angular_update{0.25};
    ScanMatchConfig match{};
    OdometryNoise alphas{};
    double map_resolution{0.05};
    MapBounds map_bounds{};
};

struct Particle {
    Pose2 pose;
    double log_weight{0};
    OccupancyGrid map;
    Trajectory trajectory;
};

[[nodiscard]] OccupancyGrid empty_map(const SlamConfig& cfg);

/// Shifts log weights so that Σ exp(log_weight) = 1. All -inf resets to
/// uniform and returns false.
bool normalize_log_weights(std::vector<Particle>& particles);

/// 1 / Σ w² of normalized weights.
[[nodiscard]] double effective_sample_size(const std::vector<Particle>& particles);

/// Systematic resampling with offset u ∈ [0, 1/n): the indices drawn for
/// normalized weights w.
[[nodiscard]] std::vector<std::size_t> low_variance_indices(const std::vector<double>& weights, double u);

/// Low-variance resampling: one uniform draw, uniform output weights, maps
/// copied by value.
[[nodiscard]] std::vector<Particle> resample_low_variance(const std::vector<Particle>& particles, Rng& rng);

struct SlamStepResult {
    std::size_t best{0};
    double n_eff{0};
    bool resampled{false};
    /// All match scores were zero; weights were reset.
    bool degenerate{false};
};

/// Index of the highest-weight particle (lowest index on ties).
[[nodiscard]] std::size_t best_particle(const std::vector<Particle>& particles);

/// Places n particles at `pose`, integrates the first scan, uniform weights.
[[nodiscard]] std::vector<Particle> slam_init(const Pose2& pose, const LidarScan& scan, const SlamConfig& cfg);

/// One gated SLAM update. Particle i draws from the stream keyed by
/// (seed, update_index, i), so the outcome does not depend on evaluation
/// order. Throws UsageError when the delta is below both gates.
SlamStepResult slam_process_scan(std::vector<Particle>& particles, const OdometryDelta& odom, const LidarScan& scan,
                                 const SlamConfig& cfg, std::uint64_t seed, std::uint64_t update_index);

enum class OdometrySource { WithEncoders, Encoderless, GroundTruth };

/// Drives SLAM from a log record stream: fuses odometry, gates on travelled
/// distance, and runs particle updates.
class SlamSession {
public:
    SlamSession(const SlamConfig& cfg, const FusionConfig& fusion, OdometrySource source, std::uint64_t seed);

    /// Returns true when the record triggered a particle update.
    bool consume(const LogRecord& rec);

    [[nodiscard]] bool initialized() const noexcept { return !particles_.empty(); }
    [[nodiscard]] const std::vector<Particle>& particles() const noexcept { return particles_; }
    [[nodiscard]] const Particle& best() const;
    [[nodiscard]] std::size_t updates() const noexcept { return updates_; }
    [[nodiscard]] std::size_t resamples() const noexcept { return resamples_; }
    [[nodiscard]] std::size_t degenerate_events() const noexcept { return degenerate_; }
    /// Odometry pose at every scan.
    [[nodiscard]] const Trajectory& odometry() const noexcept { return odometry_; }
    /// Current best estimate: best particle advanced by odometry since its
    /// last update.
    [[nodiscard]] Pose2 current_estimate() const;

private:
    SlamConfig cfg_;
    FusionConfig fusion_cfg_;
    OdometrySource source_;
    std::uint64_t seed_;
    std::optional<FusionFrontend> frontend_;
    std::optional<Pose2> last_gt_;
    std::vector<Particle> particles_;
    std::size_t best_{0};
    Pose2 odom_at_update_;
    Pose2 odom_now_;
    Trajectory odometry_;
    std::size_t updates_{0};
    std::size_t resamples_{0};
    std::size_t degenerate_{0};
};

}  // namespace mazeslam
