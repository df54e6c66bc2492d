#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <vector>

#include "mazeslam/fusion_ekf.hpp"
#include "mazeslam/geometry.hpp"
#include "mazeslam/grid_map.hpp"
#include "mazeslam/rng.hpp"
#include "mazeslam/sensor_log.hpp"
#include "mazeslam/slam_rbpf.hpp"

namespace mazeslam {

/// The map offers no free cell to place particles in.
class MclError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class MclInitKind { Gaussian, UniformFree };

struct MclInit {
    MclInitKind kind{MclInitKind::Gaussian};
    Pose2 mean;
    Eigen::Vector3d sigmas{0.5, 0.5, 0.3};
};

struct MclConfig {
    int n_particles{500};
    int beam_subsample{30};
    double z_hit{0.95};
    double z_rand{0.05};
    double sigma_hit{0.1};
    /// Cap of the likelihood field; the hit kernel is negligible beyond it.
    double field_d_max{1.0};
    OdometryNoise alphas{};
    double resample_ratio{0.5};
    /// Filter updates wait for this much odometry motion (0 updates on every scan).
    double min_trans{0.0};
    double min_rot{0.0};

    /// Throws UsageError when the invariants do not hold.
    void validate() const;
};

struct MclParticle {
    Pose2 pose;
    double log_weight{0};
};

struct PoseEstimate {
    Pose2 mean;
    Cov3 cov{Cov3::Zero()};
    double n_eff{0};
    double stamp{0};
};

/// Uniform-weight particle set. Throws MclError when uniform_free finds no
/// free cell.
[[nodiscard]] std::vector<MclParticle> mcl_init(const OccupancyGrid& map, const MclInit& init, const MclConfig& cfg,
                                                Rng& rng);

/// Evenly strided beam indices, at most `count`, among beams with a return.
[[nodiscard]] std::vector<std::size_t> subsample_beams(const LidarScan& scan, int count);

/// Σ log(z_hit·exp(-d²/2σ²) + z_rand) over the given beams; -inf when the
/// pose is off the map or in an occupied cell.
[[nodiscard]] double mcl_log_likelihood(const OccupancyGrid& map, const LikelihoodField& field, const Pose2& pose,
                                        const LidarScan& scan, const std::vector<std::size_t>& beams,
                                        const MclConfig& cfg);

/// Weighted mean (circular for theta) and covariance of normalized particles.
[[nodiscard]] PoseEstimate mcl_estimate(const std::vector<MclParticle>& particles);

struct MclStepResult {
    PoseEstimate estimate;
    bool resampled{false};
    /// Every particle was invalid; the set was reset over free cells.
    bool reset{false};
};

/// Motion update, likelihood-field weighting, and adaptive low-variance
/// resampling. Particle i samples from the stream keyed by (seed,
/// update_index, i). The estimate is taken before resampling.
MclStepResult mcl_update(std::vector<MclParticle>& particles, const OdometryDelta& odom, const LidarScan& scan,
                         const OccupancyGrid& map, const LikelihoodField& field, const MclConfig& cfg,
                         std::uint64_t seed, std::uint64_t update_index);

/// Per-step localization error against ground truth.
struct LocalizationError {
    double t{0};
    double pos_err_m{0};
    double heading_err_rad{0};
};

/// Runs MCL over a log record stream with fused odometry.
class MclSession {
public:
    MclSession(OccupancyGrid map, const MclConfig& cfg, const FusionConfig& fusion, FusionMode mode, MclInit init,
               std::uint64_t seed);

    /// Returns true when the record triggered a filter update.
    bool consume(const LogRecord& rec);

    [[nodiscard]] bool initialized() const noexcept { return !particles_.empty(); }
    [[nodiscard]] const std::vector<MclParticle>& particles() const noexcept { return particles_; }
    [[nodiscard]] const OccupancyGrid& map() const noexcept { return map_; }
    [[nodiscard]] std::size_t updates() const noexcept { return updates_; }
    [[nodiscard]] std::size_t resets() const noexcept { return resets_; }
    [[nodiscard]] const Trajectory& estimates() const noexcept { return estimates_; }
    [[nodiscard]] std::optional<PoseEstimate> latest() const noexcept { return latest_; }
    /// Latest estimate advanced by odometry since the last update.
    [[nodiscard]] Pose2 current_estimate() const;

private:
    OccupancyGrid map_;
    LikelihoodField field_;
    MclConfig cfg_;
    FusionConfig fusion_cfg_;
    FusionMode mode_;
    MclInit init_;
    std::uint64_t seed_;
    std::optional<FusionFrontend> frontend_;
    std::optional<Pose2> last_gt_;
    std::vector<MclParticle> particles_;
    std::optional<PoseEstimate> latest_;
    Pose2 odom_at_update_;
    Pose2 odom_now_;
    std::size_t updates_{0};
    std::size_t resets_{0};
    Trajectory estimates_;
};

/// Errors of each estimate against the nearest-stamp truth within max_dt.
[[nodiscard]] std::vector<LocalizationError> localization_errors(const Trajectory& est, const Trajectory& truth,
                                                                 double max_dt = 1e-6);

/// CSV header t,pos_err_m,heading_err_rad.
void write_error_csv(const std::filesystem::path& path, const std::vector<LocalizationError>& errors);

}  // namespace mazeslam
