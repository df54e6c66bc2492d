#include "mazeslam/slam_rbpf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mazeslam/errors.hpp"

namespace mazeslam {

namespace {

constexpr std::uint64_t kMotionTag = stream_tag("slam-motion");
constexpr std::uint64_t kResampleTag = stream_tag("slam-resample");

bool passes_gate(const OdometryDelta& d, const SlamConfig& cfg) noexcept {
    return std::abs(d.trans) >= cfg.linear_update || std::abs(wrap_angle(d.rot1 + d.rot2)) >= cfg.angular_update;
}

}  // namespace

OdometryDelta OdometryDelta::from_relative(const Pose2& delta) noexcept {
    OdometryDelta d;
    d.trans = std::hypot(delta.x(), delta.y());
    if (d.trans < 1e-9) {
        d.trans = 0.0;
        d.rot2 = delta.theta();
        return d;
    }
    d.rot1 = std::atan2(delta.y(), delta.x());
    if (std::abs(d.rot1) > kPi / 2) {
        d.rot1 = wrap_angle(d.rot1 - kPi);
        d.trans = -d.trans;
    }
    d.rot2 = wrap_angle(delta.theta() - d.rot1);
    return d;
}

Pose2 apply_odometry(const Pose2& prev, const OdometryDelta& d) noexcept {
    const double heading = prev.theta() + d.rot1;
    return {prev.x() + d.trans * std::cos(heading), prev.y() + d.trans * std::sin(heading),
            prev.theta() + d.rot1 + d.rot2};
}

Eigen::Matrix<double, 3, 6> apply_odometry_jacobian(const Pose2& prev, const OdometryDelta& d) noexcept {
    const double heading = prev.theta() + d.rot1;
    const double c = std::cos(heading);
    const double s = std::sin(heading);
    Eigen::Matrix<double, 3, 6> J;
    J << 1, 0, -d.trans * s, -d.trans * s, c, 0,
         0, 1, d.trans * c, d.trans * c, s, 0,
         0, 0, 1, 1, 0, 1;
    return J;
}

Pose2 sample_odometry_motion(const Pose2& prev, const OdometryDelta& d, const OdometryNoise& a, Rng& rng) noexcept {
    const double r1 = d.rot1 * d.rot1;
    const double r2 = d.rot2 * d.rot2;
    const double t2 = d.trans * d.trans;
    const double sd_rot1 = std::sqrt(a.a1 * r1 + a.a2 * t2);
    const double sd_trans = std::sqrt(a.a3 * t2 + a.a4 * (r1 + r2));
    const double sd_rot2 = std::sqrt(a.a1 * r2 + a.a2 * t2);
    OdometryDelta noisy;
    noisy.rot1 = d.rot1 - rng.gaussian(sd_rot1);
    noisy.trans = d.trans - rng.gaussian(sd_trans);
    noisy.rot2 = d.rot2 - rng.gaussian(sd_rot2);
    return apply_odometry(prev, noisy);
}

OccupancyGrid empty_map(const SlamConfig& cfg) {
    const MapBounds& b = cfg.map_bounds;
    const int w = static_cast<int>(std::ceil((b.xmax - b.xmin) / cfg.map_resolution - 1e-9));
    const int h = static_cast<int>(std::ceil((b.ymax - b.ymin) / cfg.map_resolution - 1e-9));
    if (w <= 0 || h <= 0) throw UsageError("map bounds are empty");
    return OccupancyGrid(cfg.map_resolution, w, h, {b.xmin, b.ymin});
}

bool normalize_log_weights(std::vector<Particle>& particles) {
    if (particles.empty()) return true;
    double top = -std::numeric_limits<double>::infinity();
    for (const Particle& p : particles) top = std::max(top, p.log_weight);
    const double uniform = -std::log(static_cast<double>(particles.size()));
    if (!std::isfinite(top)) {
        for (Particle& p : particles) p.log_weight = uniform;
        return false;
    }
    double sum = 0.0;
    for (const Particle& p : particles) sum += std::exp(p.log_weight - top);
    const double log_norm = top + std::log(sum);
    for (Particle& p : particles) p.log_weight -= log_norm;
    return true;
}

double effective_sample_size(const std::vector<Particle>& particles) {
    double sq = 0.0;
    for (const Particle& p : particles) {
        const double w = std::exp(p.log_weight);
        sq += w * w;
    }
    return sq > 0.0 ? 1.0 / sq : 0.0;
}

std::vector<std::size_t> low_variance_indices(const std::vector<double>& weights, double u) {
    const std::size_t n = weights.size();
    std::vector<std::size_t> out;
    out.reserve(n);
    if (n == 0) return out;
    double cumulative = weights[0];
    std::size_t i = 0;
    for (std::size_t m = 0; m < n; ++m) {
        const double target = u + static_cast<double>(m) / static_cast<double>(n);
        while (target >= cumulative && i + 1 < n) cumulative += weights[++i];
        out.push_back(i);
    }
    return out;
}

std::vector<Particle> resample_low_variance(const std::vector<Particle>& particles, Rng& rng) {
    std::vector<double> w(particles.size());
    std::transform(particles.begin(), particles.end(), w.begin(),
                   [](const Particle& p) { return std::exp(p.log_weight); });
    const double u = rng.uniform() / static_cast<double>(particles.size());
    const double uniform = -std::log(static_cast<double>(particles.size()));
    std::vector<Particle> out;
    out.reserve(particles.size());
    for (std::size_t i : low_variance_indices(w, u)) {
        out.push_back(particles[i]);
        out.back().log_weight = uniform;
    }
    return out;
}

std::size_t best_particle(const std::vector<Particle>& particles) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < particles.size(); ++i)
        if (particles[i].log_weight > particles[best].log_weight) best = i;
    return best;
}

std::vector<Particle> slam_init(const Pose2& pose, const LidarScan& scan, const SlamConfig& cfg) {
    if (cfg.n_particles < 1) throw UsageError("n_particles must be at least 1");
    Particle p;
    p.pose = pose;
    p.log_weight = -std::log(static_cast<double>(cfg.n_particles));
    p.map = empty_map(cfg);
    integrate_scan(p.map, pose, scan);
    p.trajectory.push_back({scan.stamp, pose});
    return std::vector<Particle>(static_cast<std::size_t>(cfg.n_particles), p);
}

SlamStepResult slam_process_scan(std::vector<Particle>& particles, const OdometryDelta& odom, const LidarScan& scan,
                                 const SlamConfig& cfg, std::uint64_t seed, std::uint64_t update_index) {
    if (!passes_gate(odom, cfg)) throw UsageError("slam update below the motion gates");
    const std::uint64_t motion_tag = kMotionTag ^ Rng::mix(update_index);
    for (std::size_t i = 0; i < particles.size(); ++i) {
        Particle& p = particles[i];
        Rng rng = Rng::stream(seed, motion_tag, i);
        const Pose2 sampled = sample_odometry_motion(p.pose, odom, cfg.alphas, rng);
        const LikelihoodField field = build_likelihood_field(p.map, cfg.match.field_d_max);
        const ScanMatchResult m = scan_match(field, scan, sampled, cfg.match);
        p.pose = m.pose;
        p.log_weight += m.score > 0.0 ? std::log(m.score) : -std::numeric_limits<double>::infinity();
        // A particle that wandered off its map cannot integrate; it is dropped by weight.
        if (world_to_cell(p.map, p.pose.translation())) {
            integrate_scan(p.map, p.pose, scan);
        } else {
            p.log_weight = -std::numeric_limits<double>::infinity();
        }
        p.trajectory.push_back({scan.stamp, p.pose});
    }
    SlamStepResult r;
    r.degenerate = !normalize_log_weights(particles);
    r.n_eff = effective_sample_size(particles);
    if (r.n_eff < cfg.resample_ratio * static_cast<double>(particles.size())) {
        Rng rng = Rng::stream(seed, kResampleTag, update_index);
        particles = resample_low_variance(particles, rng);
        r.resampled = true;
    }
    r.best = best_particle(particles);
    return r;
}

SlamSession::SlamSession(const SlamConfig& cfg, const FusionConfig& fusion, OdometrySource source,
                         std::uint64_t seed)
    : cfg_(cfg), fusion_cfg_(fusion), source_(source), seed_(seed) {}

const Particle& SlamSession::best() const {
    if (particles_.empty()) throw UsageError("slam session has not seen a scan yet");
    return particles_[best_];
}

Pose2 SlamSession::current_estimate() const {
    if (particles_.empty()) return odom_now_;
    return compose(particles_[best_].pose, between(odom_at_update_, odom_now_));
}

bool SlamSession::consume(const LogRecord& rec) {
    if (const auto* gt = rec.get<GtRecord>()) {
        last_gt_ = gt->pose;
        if (source_ == OdometrySource::GroundTruth) odom_now_ = gt->pose;
        return false;
    }
    const auto* scan = rec.get<LidarScan>();
    if (source_ != OdometrySource::GroundTruth) {
        if (!rec.get<ImuRecord>() && !rec.get<OdomRecord>() && scan == nullptr) return false;
        if (!frontend_) {
            const FusionMode mode =
                source_ == OdometrySource::WithEncoders ? FusionMode::WithEncoders : FusionMode::Encoderless;
            frontend_.emplace(mode, fusion_cfg_, initial_fused_state(last_gt_.value_or(Pose2{}), rec.t, fusion_cfg_));
        }
        frontend_->consume(rec);
        if (scan == nullptr) return false;
        odom_now_ = frontend_->filter().predicted(rec.t).pose();
    } else if (scan == nullptr) {
        return false;
    }
    odometry_.push_back({rec.t, odom_now_});
    if (particles_.empty()) {
        particles_ = slam_init(odom_now_, *scan, cfg_);
        odom_at_update_ = odom_now_;
        best_ = 0;
        return false;
    }
    const OdometryDelta delta = OdometryDelta::between_poses(odom_at_update_, odom_now_);
    if (!passes_gate(delta, cfg_)) return false;
    const SlamStepResult r = slam_process_scan(particles_, delta, *scan, cfg_, seed_, ++updates_);
    odom_at_update_ = odom_now_;
    best_ = r.best;
    if (r.resampled) ++resamples_;
    if (r.degenerate) ++degenerate_;
    return true;
}

}  // namespace mazeslam
