#include "mazeslam/fusion_ekf.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>

#include "mazeslam/errors.hpp"

namespace mazeslam {

namespace {

constexpr double kStampTolerance = 1e-6;
constexpr double kMinVoScore = 0.2;

void symmetrize(Mat5& m) { m = 0.5 * (m + m.transpose()).eval(); }

}  // namespace

Measurement Measurement::gyro(double stamp, double w, double sigma) {
    Measurement m;
    m.kind = MeasurementKind::Gyro;
    m.stamp = stamp;
    m.z = Eigen::VectorXd::Constant(1, w);
    m.R = Eigen::MatrixXd::Constant(1, 1, sigma * sigma);
    return m;
}

Measurement Measurement::wheel_odom(double stamp, Twist2 twist, double sigma_v, double sigma_w) {
    Measurement m;
    m.kind = MeasurementKind::WheelOdom;
    m.stamp = stamp;
    m.z = Eigen::Vector2d(twist.v, twist.w);
    m.R = Eigen::Vector2d(sigma_v * sigma_v, sigma_w * sigma_w).asDiagonal();
    return m;
}

Measurement Measurement::pose_delta(double stamp, const Pose2& delta, double dt, const Eigen::Matrix3d& R) {
    if (!(dt > 0.0)) throw UsageError("pose_delta requires dt > 0");
    Measurement m;
    m.kind = MeasurementKind::PoseDelta;
    m.stamp = stamp;
    m.dt = dt;
    m.z = Eigen::Vector3d(delta.x(), delta.y(), delta.theta());
    m.R = R;
    return m;
}

Vec5 propagate_mean(const Vec5& x, double dt) noexcept {
    Vec5 out = x;
    out(0) += x(3) * std::cos(x(2)) * dt;
    out(1) += x(3) * std::sin(x(2)) * dt;
    out(2) = wrap_angle(x(2) + x(4) * dt);
    return out;
}

Mat5 propagate_jacobian(const Vec5& x, double dt) noexcept {
    Mat5 F = Mat5::Identity();
    const double c = std::cos(x(2));
    const double s = std::sin(x(2));
    F(0, 2) = -x(3) * s * dt;
    F(0, 3) = c * dt;
    F(1, 2) = x(3) * c * dt;
    F(1, 3) = s * dt;
    F(2, 4) = dt;
    return F;
}

FusedState ekf_predict(const FusedState& s, double dt, double q_accel, double q_alpha) {
    if (!(dt > 0.0)) throw UsageError("ekf_predict requires dt > 0");
    const Mat5 F = propagate_jacobian(s.x, dt);
    FusedState out;
    out.x = propagate_mean(s.x, dt);
    out.cov = F * s.cov * F.transpose();
    out.cov(3, 3) += q_accel * dt;
    out.cov(4, 4) += q_alpha * dt;
    symmetrize(out.cov);
    out.stamp = s.stamp + dt;
    return out;
}

MeasurementModel measurement_model(const Vec5& x, const Measurement& z) {
    MeasurementModel m;
    switch (z.kind) {
        case MeasurementKind::Gyro:
            m.h = Eigen::VectorXd::Constant(1, x(4));
            m.H = Eigen::MatrixXd::Zero(1, 5);
            m.H(0, 4) = 1.0;
            break;
        case MeasurementKind::WheelOdom:
            m.h = Eigen::Vector2d(x(3), x(4));
            m.H = Eigen::MatrixXd::Zero(2, 5);
            m.H(0, 3) = 1.0;
            m.H(1, 4) = 1.0;
            break;
        case MeasurementKind::PoseDelta:
            m.h = Eigen::Vector3d(x(3) * z.dt, 0.0, x(4) * z.dt);
            m.H = Eigen::MatrixXd::Zero(3, 5);
            m.H(0, 3) = z.dt;
            m.H(2, 4) = z.dt;
            break;
    }
    return m;
}

UpdateResult ekf_update(const FusedState& s, const Measurement& z) {
    const MeasurementModel m = measurement_model(s.x, z);
    UpdateResult r;
    r.state = s;
    r.innovation = z.z - m.h;
    if (z.kind == MeasurementKind::PoseDelta) r.innovation(2) = wrap_angle(r.innovation(2));
    r.S = m.H * s.cov * m.H.transpose() + z.R;
    const Eigen::LLT<Eigen::MatrixXd> llt(r.S);
    if (llt.info() != Eigen::Success || !r.S.allFinite()) {
        r.accepted = false;
        return r;
    }
    const Eigen::MatrixXd PHt = s.cov * m.H.transpose();
    const Eigen::MatrixXd K = llt.solve(PHt.transpose()).transpose();
    r.state.x = s.x + K * r.innovation;
    r.state.x(2) = wrap_angle(r.state.x(2));
    const Mat5 IKH = Mat5::Identity() - K * m.H;
    r.state.cov = IKH * s.cov * IKH.transpose() + K * z.R * K.transpose();
    symmetrize(r.state.cov);
    return r;
}

FusionFilter::FusionFilter(const FusionConfig& cfg, const FusedState& initial)
    : cfg_(cfg), state_(initial), origin_(initial) {}

void FusionFilter::advance_to(double stamp) { state_ = predicted(stamp); }

FusedState FusionFilter::predicted(double stamp) const {
    FusedState s = state_;
    predict_to(s, stamp, {});
    return s;
}

void FusionFilter::predict_to(FusedState& s, double t, const Quiet& quiet) const {
    if (!(t > s.stamp)) return;
    if (s.stamp < quiet.until) {
        const double mid = std::min(t, quiet.until);
        s = ekf_predict(s, mid - s.stamp, 0.0, cfg_.q_alpha);
        s.stamp = mid;
        if (mid >= quiet.until) s.cov(3, 3) += cfg_.q_accel * (quiet.until - quiet.from);
    }
    if (t > s.stamp) {
        s = ekf_predict(s, t - s.stamp, cfg_.q_accel, cfg_.q_alpha);
        s.stamp = t;
    }
}

bool FusionFilter::update(FusedState& s, const Measurement& z) {
    UpdateResult r = ekf_update(s, z);
    innovation_ = std::move(r.innovation);
    if (!r.accepted) {
        ++rejected_;
        return false;
    }
    s = r.state;
    return true;
}

std::optional<FusedState> FusionFilter::process(const Measurement& z) {
    if (z.stamp < state_.stamp - kStampTolerance) {
        ++skipped_;
        return std::nullopt;
    }
    const double now = std::max(state_.stamp, z.stamp);
    const bool delta = z.kind == MeasurementKind::PoseDelta;
    // Entries applied after `at` are replayed on top of the new one.
    std::size_t k = history_.size();
    const double at_wanted = delta ? z.stamp - z.dt : z.stamp;
    while (k > 0 && history_[k - 1].apply_stamp > at_wanted) --k;
    FusedState s = k == 0 ? origin_ : history_[k - 1].after;
    const double at = std::max(at_wanted, s.stamp);
    const Quiet quiet = delta ? Quiet{at, z.stamp} : Quiet{};
    predict_to(s, at, {});
    update(s, z);
    history_.insert(history_.begin() + static_cast<std::ptrdiff_t>(k), Entry{at, z, s});
    for (std::size_t i = k + 1; i < history_.size(); ++i) {
        predict_to(s, history_[i].apply_stamp, quiet);
        update(s, history_[i].z);
        history_[i].after = s;
    }
    predict_to(s, now, quiet);
    state_ = s;
    constexpr double kHistorySeconds = 2.0;
    std::size_t drop = 0;
    while (drop < history_.size() && history_[drop].apply_stamp < now - kHistorySeconds) ++drop;
    if (drop > 0) {
        origin_ = history_[drop - 1].after;
        history_.erase(history_.begin(), history_.begin() + static_cast<std::ptrdiff_t>(drop));
    }
    return state_;
}

ScanPolyline::ScanPolyline(const LidarScan& scan, double max_gap, double d_max) : d_max_(d_max), bucket_(d_max) {
    std::vector<Vec2> pts;
    std::vector<std::size_t> beam;
    for (std::size_t i = 0; i < scan.size(); ++i) {
        if (!scan.has_return(i)) continue;
        const double a = scan.angle(i);
        pts.push_back({scan.ranges[i] * std::cos(a), scan.ranges[i] * std::sin(a)});
        beam.push_back(i);
    }
    if (pts.empty()) return;
    const bool full_circle = std::abs(scan.angle_inc * static_cast<double>(scan.size()) - 2.0 * kPi) < 1e-9;
    const auto joined = [&](std::size_t k, std::size_t next) {
        const bool adjacent = beam[next] == beam[k] + 1 ||
                              (full_circle && beam[k] + 1 == scan.size() && beam[next] == 0);
        return next != k && adjacent && (pts[next] - pts[k]).norm() <= max_gap;
    };
    const std::size_t n = pts.size();
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t next = (k + 1) % n;
        const std::size_t prev = (k + n - 1) % n;
        const bool has_prev = (k > 0 || full_circle) && joined(prev, k);
        const bool has_next = (next > k || full_circle) && joined(k, next);
        if (has_next) {
            const bool next_has_next = joined(next, (next + 1) % n) && ((next + 1) % n > next || full_circle);
            segments_.push_back({pts[k], pts[next], !has_prev, !next_has_next});
        } else if (!has_prev) {
            segments_.push_back({pts[k], pts[k], true, true});
        }
    }
    lo_ = {-scan.range_max - d_max, -scan.range_max - d_max};
    nx_ = ny_ = static_cast<int>(std::ceil(2.0 * (scan.range_max + d_max) / bucket_)) + 1;
    buckets_.assign(static_cast<std::size_t>(nx_) * static_cast<std::size_t>(ny_), {});
    for (std::uint32_t s = 0; s < segments_.size(); ++s) {
        const Seg& g = segments_[s];
        const int x0 = static_cast<int>(std::floor((std::min(g.a.x, g.b.x) - lo_.x) / bucket_));
        const int x1 = static_cast<int>(std::floor((std::max(g.a.x, g.b.x) - lo_.x) / bucket_));
        const int y0 = static_cast<int>(std::floor((std::min(g.a.y, g.b.y) - lo_.y) / bucket_));
        const int y1 = static_cast<int>(std::floor((std::max(g.a.y, g.b.y) - lo_.y) / bucket_));
        for (int by = y0; by <= y1; ++by)
            for (int bx = x0; bx <= x1; ++bx)
                if (const long k = bucket_key(bx, by); k >= 0) buckets_[static_cast<std::size_t>(k)].push_back(s);
    }
}

long ScanPolyline::bucket_key(int bx, int by) const noexcept {
    if (bx < 0 || by < 0 || bx >= nx_ || by >= ny_) return -1;
    return static_cast<long>(by) * nx_ + bx;
}

double ScanPolyline::distance(Vec2 p) const noexcept {
    double best = d_max_;
    const int bx = static_cast<int>(std::floor((p.x - lo_.x) / bucket_));
    const int by = static_cast<int>(std::floor((p.y - lo_.y) / bucket_));
    for (int y = by - 1; y <= by + 1; ++y) {
        for (int x = bx - 1; x <= bx + 1; ++x) {
            const long k = bucket_key(x, y);
            if (k < 0) continue;
            for (std::uint32_t s : buckets_[static_cast<std::size_t>(k)]) {
                const Seg& g = segments_[s];
                const Vec2 d = g.b - g.a;
                const double len2 = d.dot(d);
                const double t = len2 > 0.0 ? std::clamp((p - g.a).dot(d) / len2, 0.0, 1.0) : 0.0;
                if ((t == 0.0 && g.a_free) || (t == 1.0 && g.b_free)) continue;
                best = std::min(best, (p - (g.a + t * d)).norm());
            }
        }
    }
    return best;
}

std::optional<ScanOdometry::Delta> ScanOdometry::push(const LidarScan& scan, const Pose2& guess) {
    std::optional<Delta> out;
    if (prev_ && scan.stamp > prev_->stamp) {
        const ScanPoints pts = scan_endpoints(scan);
        const double inv = 1.0 / (2.0 * cfg_.scan_match.match_sigma * cfg_.scan_match.match_sigma);
        const auto score = [&](const Pose2& pose) {
            if (pts.count() == 0) return 0.0;
            double sum = 0.0;
            for (const Vec2& p : pts.points) {
                const double d = reference_.distance(transform_point(pose, p));
                sum += std::exp(-d * d * inv);
            }
            return sum / static_cast<double>(pts.count());
        };
        const ScanMatchResult m = hill_climb(score, guess, cfg_.scan_match);
        if (m.score >= kMinVoScore) out = Delta{m.pose, scan.stamp - prev_->stamp, m.score};
    }
    reference_ = ScanPolyline(scan, cfg_.vo_max_gap, cfg_.scan_match.field_d_max);
    prev_ = scan;
    return out;
}

FusedState initial_fused_state(const Pose2& pose, double stamp, const FusionConfig& cfg) {
    FusedState s;
    s.x << pose.x(), pose.y(), pose.theta(), 0.0, 0.0;
    s.cov = cfg.initial_sigma.cwiseProduct(cfg.initial_sigma).asDiagonal();
    s.stamp = stamp;
    return s;
}

FusionFrontend::FusionFrontend(FusionMode mode, const FusionConfig& cfg, const FusedState& initial)
    : mode_(mode), cfg_(cfg), filter_(cfg, initial), vo_(cfg) {}

std::optional<FusedState> FusionFrontend::consume(const LogRecord& rec) {
    if (const auto* imu = rec.get<ImuRecord>()) {
        return filter_.process(Measurement::gyro(rec.t, imu->gyro_z, cfg_.sigma_gyro));
    }
    if (const auto* odom = rec.get<OdomRecord>()) {
        if (mode_ != FusionMode::WithEncoders) return std::nullopt;
        return filter_.process(Measurement::wheel_odom(rec.t, odom->twist, cfg_.sigma_wheel_v, cfg_.sigma_wheel_w));
    }
    const auto* scan = rec.get<LidarScan>();
    if (scan == nullptr || mode_ != FusionMode::Encoderless) return std::nullopt;
    if (rec.t < filter_.state().stamp - 1e-6) return std::nullopt;
    const Pose2 guess = at_last_scan_ ? between(at_last_scan_->pose(), filter_.predicted(rec.t).pose()) : Pose2{};
    std::optional<FusedState> out;
    if (const auto d = vo_.push(*scan, guess)) {
        const Eigen::Vector3d floor = cfg_.pose_delta_floor;
        const Eigen::Matrix3d R = floor.cwiseProduct(floor).asDiagonal();
        out = filter_.process(Measurement::pose_delta(rec.t, d->delta, d->dt, R / d->score));
    } else {
        out = filter_.predicted(rec.t);
    }
    at_last_scan_ = filter_.predicted(rec.t);
    return out;
}

FusionResult run_fusion(const std::vector<LogRecord>& log, FusionMode mode, const FusionConfig& cfg) {
    FusionResult res;
    if (log.empty()) return res;
    Pose2 start;
    double t0 = log.front().t;
    for (const LogRecord& r : log) {
        if (const auto* gt = r.get<GtRecord>()) {
            start = gt->pose;
            t0 = r.t;
            break;
        }
        if (r.get<ImuRecord>() || r.get<OdomRecord>() || r.get<LidarScan>()) break;
    }
    FusionFrontend fe(mode, cfg, initial_fused_state(start, t0, cfg));
    for (const LogRecord& r : log) {
        if (auto s = fe.consume(r)) res.trajectory.push_back(*s);
    }
    res.skipped = fe.filter().skipped();
    res.rejected = fe.filter().rejected();
    return res;
}

FusionResult run_fusion(const std::vector<Measurement>& measurements, const FusionConfig& cfg,
                        const FusedState& initial) {
    FusionResult res;
    FusionFilter f(cfg, initial);
    for (const Measurement& m : measurements) {
        if (auto s = f.process(m)) res.trajectory.push_back(*s);
    }
    res.skipped = f.skipped();
    res.rejected = f.rejected();
    return res;
}

}  // namespace mazeslam
