#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "mazeslam/geometry.hpp"
#include "mazeslam/grid_map.hpp"
#include "mazeslam/scan_matcher.hpp"
#include "mazeslam/sensor_log.hpp"

namespace mazeslam {

using Vec5 = Eigen::Matrix<double, 5, 1>;
using Mat5 = Eigen::Matrix<double, 5, 5>;

/// Fused odometry state (x, y, theta, v, w).
struct FusedState {
    Vec5 x = Vec5::Zero();
    Mat5 cov = Mat5::Zero();
    double stamp{0};

    [[nodiscard]] Pose2 pose() const noexcept { return {x(0), x(1), x(2)}; }
    [[nodiscard]] Twist2 twist() const noexcept { return {x(3), x(4)}; }
};

enum class MeasurementKind { Gyro, WheelOdom, PoseDelta };

struct Measurement {
    MeasurementKind kind{MeasurementKind::Gyro};
    double stamp{0};
    Eigen::VectorXd z;
    Eigen::MatrixXd R;
    /// Interval covered by a pose delta.
    double dt{0};

    [[nodiscard]] static Measurement gyro(double stamp, double w, double sigma);
    [[nodiscard]] static Measurement wheel_odom(double stamp, Twist2 twist, double sigma_v, double sigma_w);
    /// Body-frame displacement over the last `dt` seconds.
    [[nodiscard]] static Measurement pose_delta(double stamp, const Pose2& delta, double dt,
                                                const Eigen::Matrix3d& R);
};

/// Unicycle propagation of the mean only.
[[nodiscard]] Vec5 propagate_mean(const Vec5& x, double dt) noexcept;
/// d propagate_mean / d x.
[[nodiscard]] Mat5 propagate_jacobian(const Vec5& x, double dt) noexcept;

/// Constant-velocity prediction; Q = diag(0, 0, 0, q_accel·dt, q_alpha·dt).
/// Throws UsageError for dt <= 0.
[[nodiscard]] FusedState ekf_predict(const FusedState& s, double dt, double q_accel, double q_alpha);

/// Measurement prediction h(x) and its Jacobian.
struct MeasurementModel {
    Eigen::VectorXd h;
    Eigen::MatrixXd H;
};
[[nodiscard]] MeasurementModel measurement_model(const Vec5& x, const Measurement& z);

struct UpdateResult {
    FusedState state;
    Eigen::VectorXd innovation;
    Eigen::MatrixXd S;
    /// False when S was not positive definite; `state` is then the input.
    bool accepted{true};
};

/// Joseph-form EKF update. The angular innovation of pose deltas is wrapped.
[[nodiscard]] UpdateResult ekf_update(const FusedState& s, const Measurement& z);

struct FusionConfig {
    double q_accel{2.0};
    double q_alpha{4.0};
    double sigma_gyro{0.02};
    double sigma_wheel_v{0.02};
    double sigma_wheel_w{0.05};
    /// pose_delta noise floor; the effective R is floor / score.
    Eigen::Vector3d pose_delta_floor{0.01, 0.01, 0.02};
    /// Initial standard deviations of (x, y, theta, v, w).
    Vec5 initial_sigma = (Vec5() << 1e-3, 1e-3, 1e-3, 1.0, 1.0).finished();
    /// Scan-to-scan matcher producing pose deltas in encoderless mode.
    ScanMatchConfig scan_match{.linear_step = 0.05, .angular_step = 0.025, .halvings = 5, .match_sigma = 0.05,
                               .field_d_max = 0.3};
    /// Consecutive returns farther apart than this are not joined.
    double vo_max_gap{0.2};
};

enum class FusionMode { WithEncoders, Encoderless };

/// Time-ordered measurement processing. Each measurement predicts the state
/// to its stamp and then updates. A pose delta describes the velocity over
/// [stamp - dt, stamp], so it is applied at the start of that interval, the
/// measurements received since are replayed on top, and v is held constant
/// across the interval.
class FusionFilter {
public:
    FusionFilter(const FusionConfig& cfg, const FusedState& initial);

    /// Processed state, or nullopt when the measurement was skipped because
    /// its stamp lies more than 1e-6 s before the filter's.
    std::optional<FusedState> process(const Measurement& z);

    /// Predicts to `stamp` without updating (no-op for stamps not ahead).
    void advance_to(double stamp);
    /// The state predicted to `stamp`, leaving the filter untouched.
    [[nodiscard]] FusedState predicted(double stamp) const;

    [[nodiscard]] const FusedState& state() const noexcept { return state_; }
    [[nodiscard]] std::size_t skipped() const noexcept { return skipped_; }
    [[nodiscard]] std::size_t rejected() const noexcept { return rejected_; }
    [[nodiscard]] const Eigen::VectorXd& last_innovation() const noexcept { return innovation_; }

private:
    struct Entry {
        double apply_stamp;
        Measurement z;
        FusedState after;
    };
    /// Interval over which v is held constant.
    struct Quiet {
        double from{0};
        double until{0};
    };
    /// Predicts s to t. Linear-acceleration noise inside the quiet interval
    /// is held back and injected in one piece when `until` is reached.
    void predict_to(FusedState& s, double t, const Quiet& quiet) const;
    bool update(FusedState& s, const Measurement& z);

    FusionConfig cfg_;
    FusedState state_;
    /// State before the oldest retained history entry.
    FusedState origin_;
    std::vector<Entry> history_;
    Eigen::VectorXd innovation_;
    std::size_t skipped_{0};
    std::size_t rejected_{0};
};

/// Returns of one scan joined into polyline runs (sensor frame), with exact
/// point-to-segment distance queries capped at d_max. A query whose nearest
/// point is the free end of a run has no correspondence and reads d_max.
class ScanPolyline {
public:
    ScanPolyline() = default;
    ScanPolyline(const LidarScan& scan, double max_gap, double d_max);

    [[nodiscard]] double distance(Vec2 p) const noexcept;
    [[nodiscard]] std::size_t segment_count() const noexcept { return segments_.size(); }

private:
    struct Seg {
        Vec2 a, b;
        bool a_free{false};
        bool b_free{false};
    };
    [[nodiscard]] long bucket_key(int bx, int by) const noexcept;
    std::vector<Seg> segments_;
    double d_max_{0};
    double bucket_{1};
    Vec2 lo_;
    int nx_{0}, ny_{0};
    std::vector<std::vector<std::uint32_t>> buckets_;
};

/// Visual-odometry surrogate: matches each scan against a local grid built
/// from the previous one.
class ScanOdometry {
public:
    explicit ScanOdometry(const FusionConfig& cfg) : cfg_(cfg) {}

    struct Delta {
        Pose2 delta;
        double dt{0};
        double score{0};
    };

    /// Delta since the previous scan (nullopt for the first scan or when the
    /// match is degenerate). `guess` seeds the matcher.
    std::optional<Delta> push(const LidarScan& scan, const Pose2& guess);

private:
    FusionConfig cfg_;
    std::optional<LidarScan> prev_;
    ScanPolyline reference_;
};

/// Turns log records into measurements and fuses them. Scans yield pose
/// deltas only in encoderless mode; odom records only with encoders.
class FusionFrontend {
public:
    FusionFrontend(FusionMode mode, const FusionConfig& cfg, const FusedState& initial);

    std::optional<FusedState> consume(const LogRecord& rec);

    [[nodiscard]] const FusionFilter& filter() const noexcept { return filter_; }
    [[nodiscard]] FusionMode mode() const noexcept { return mode_; }

private:
    FusionMode mode_;
    FusionConfig cfg_;
    FusionFilter filter_;
    ScanOdometry vo_;
    std::optional<FusedState> at_last_scan_;
};

[[nodiscard]] FusedState initial_fused_state(const Pose2& pose, double stamp, const FusionConfig& cfg);

struct FusionResult {
    std::vector<FusedState> trajectory;
    std::size_t skipped{0};
    std::size_t rejected{0};
};

/// Initial pose is the first ground-truth record when one precedes every
/// measurement, identity otherwise.
[[nodiscard]] FusionResult run_fusion(const std::vector<LogRecord>& log, FusionMode mode, const FusionConfig& cfg);
[[nodiscard]] FusionResult run_fusion(const std::vector<Measurement>& measurements, const FusionConfig& cfg,
                                      const FusedState& initial);

}  // namespace mazeslam
