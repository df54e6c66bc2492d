#include "mazeslam/mcl.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "mazeslam/errors.hpp"
#include "mazeslam/eval_metrics.hpp"

namespace mazeslam {

namespace {

constexpr std::uint64_t kInitTag = stream_tag("mcl-init");
constexpr std::uint64_t kMotionTag = stream_tag("mcl-motion");
constexpr std::uint64_t kResampleTag = stream_tag("mcl-resample");
constexpr std::uint64_t kResetTag = stream_tag("mcl-reset");
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<CellIndex> free_cells(const OccupancyGrid& map) {
    std::vector<CellIndex> out;
    for (int r = 0; r < map.height(); ++r)
        for (int c = 0; c < map.width(); ++c)
            if (map.classify({c, r}) == CellClass::Free) out.push_back({c, r});
    return out;
}

std::vector<MclParticle> uniform_free(const OccupancyGrid& map, std::size_t n, Rng& rng) {
    const std::vector<CellIndex> cells = free_cells(map);
    if (cells.empty()) throw MclError("map has no free cells");
    std::vector<MclParticle> out(n);
    const double w = -std::log(static_cast<double>(n));
    for (MclParticle& p : out) {
        const auto k = std::min(cells.size() - 1, static_cast<std::size_t>(rng.uniform() * cells.size()));
        const Vec2 corner = map.cell_center(cells[k]);
        const double res = map.resolution();
        const double x = corner.x + (rng.uniform() - 0.5) * res;
        const double y = corner.y + (rng.uniform() - 0.5) * res;
        p.pose = {x, y, rng.uniform(-kPi, kPi)};
        p.log_weight = w;
    }
    return out;
}

// Shifts log weights to sum to one; false when every particle is invalid.
bool normalize(std::vector<MclParticle>& ps) {
    double top = kNegInf;
    for (const auto& p : ps) top = std::max(top, p.log_weight);
    if (!std::isfinite(top)) return false;
    double sum = 0.0;
    for (const auto& p : ps) sum += std::exp(p.log_weight - top);
    const double norm = top + std::log(sum);
    for (auto& p : ps) p.log_weight -= norm;
    return true;
}

}  // namespace

void MclConfig::validate() const {
    if (n_particles < 10) throw UsageError("mcl n_particles must be at least 10");
    if (beam_subsample < 1) throw UsageError("mcl beam_subsample must be positive");
    if (z_hit < 0 || z_rand <= 0 || std::abs(z_hit + z_rand - 1.0) > 1e-9)
        throw UsageError("mcl z_hit + z_rand must equal 1 with z_rand > 0");
    if (sigma_hit <= 0) throw UsageError("mcl sigma_hit must be positive");
    if (resample_ratio < 0 || resample_ratio > 1) throw UsageError("mcl resample_ratio must lie in [0, 1]");
}

std::vector<MclParticle> mcl_init(const OccupancyGrid& map, const MclInit& init, const MclConfig& cfg, Rng& rng) {
    cfg.validate();
    const auto n = static_cast<std::size_t>(cfg.n_particles);
    if (init.kind == MclInitKind::UniformFree) return uniform_free(map, n, rng);
    std::vector<MclParticle> out(n);
    const double w = -std::log(static_cast<double>(n));
    for (MclParticle& p : out) {
        const double x = init.mean.x() + rng.gaussian(init.sigmas.x());
        const double y = init.mean.y() + rng.gaussian(init.sigmas.y());
        const double th = init.mean.theta() + rng.gaussian(init.sigmas.z());
        p.pose = {x, y, th};
        p.log_weight = w;
    }
    return out;
}

std::vector<std::size_t> subsample_beams(const LidarScan& scan, int count) {
    std::vector<std::size_t> valid;
    for (std::size_t i = 0; i < scan.size(); ++i)
        if (scan.has_return(i)) valid.push_back(i);
    if (count <= 0 || valid.size() <= static_cast<std::size_t>(count)) return valid;
    std::vector<std::size_t> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) out.push_back(valid[static_cast<std::size_t>(k) * valid.size() / count]);
    return out;
}

double mcl_log_likelihood(const OccupancyGrid& map, const LikelihoodField& field, const Pose2& pose,
                          const LidarScan& scan, const std::vector<std::size_t>& beams, const MclConfig& cfg) {
    const auto cell = world_to_cell(map, pose.translation());
    if (!cell || map.classify(*cell) == CellClass::Occupied) return kNegInf;
    const double inv = 1.0 / (2.0 * cfg.sigma_hit * cfg.sigma_hit);
    double sum = 0.0;
    for (std::size_t i : beams) {
        const double a = scan.angle(i);
        const double r = scan.ranges[i];
        const Vec2 e = transform_point(pose, {r * std::cos(a), r * std::sin(a)});
        const auto d = field.interpolate(e);
        const double hit = d ? cfg.z_hit * std::exp(-(*d) * (*d) * inv) : 0.0;
        sum += std::log(hit + cfg.z_rand);
    }
    return sum;
}

PoseEstimate mcl_estimate(const std::vector<MclParticle>& particles) {
    PoseEstimate e;
    double wsum = 0, sx = 0, sy = 0, ss = 0, sc = 0, sq = 0;
    for (const auto& p : particles) {
        const double w = std::exp(p.log_weight);
        wsum += w;
        sq += w * w;
        sx += w * p.pose.x();
        sy += w * p.pose.y();
        ss += w * std::sin(p.pose.theta());
        sc += w * std::cos(p.pose.theta());
    }
    if (wsum <= 0) return e;
    e.mean = {sx / wsum, sy / wsum, std::atan2(ss, sc)};
    e.n_eff = wsum * wsum / sq;
    for (const auto& p : particles) {
        const double w = std::exp(p.log_weight) / wsum;
        const Eigen::Vector3d d{p.pose.x() - e.mean.x(), p.pose.y() - e.mean.y(),
                                wrap_angle(p.pose.theta() - e.mean.theta())};
        e.cov += w * d * d.transpose();
    }
    e.cov = 0.5 * (e.cov + e.cov.transpose());
    return e;
}

MclStepResult mcl_update(std::vector<MclParticle>& particles, const OdometryDelta& odom, const LidarScan& scan,
                         const OccupancyGrid& map, const LikelihoodField& field, const MclConfig& cfg,
                         std::uint64_t seed, std::uint64_t update_index) {
    const std::vector<std::size_t> beams = subsample_beams(scan, cfg.beam_subsample);
    const std::uint64_t motion_tag = kMotionTag ^ Rng::mix(update_index);
    for (std::size_t i = 0; i < particles.size(); ++i) {
        MclParticle& p = particles[i];
        Rng rng = Rng::stream(seed, motion_tag, i);
        p.pose = sample_odometry_motion(p.pose, odom, cfg.alphas, rng);
        p.log_weight += mcl_log_likelihood(map, field, p.pose, scan, beams, cfg);
    }
    MclStepResult r;
    if (!normalize(particles)) {
        Rng rng = Rng::stream(seed, kResetTag, update_index);
        particles = uniform_free(map, particles.size(), rng);
        r.reset = true;
    }
    r.estimate = mcl_estimate(particles);
    r.estimate.stamp = scan.stamp;
    if (r.estimate.n_eff < cfg.resample_ratio * static_cast<double>(particles.size())) {
        std::vector<double> w(particles.size());
        for (std::size_t i = 0; i < particles.size(); ++i) w[i] = std::exp(particles[i].log_weight);
        Rng rng = Rng::stream(seed, kResampleTag, update_index);
        const double u = rng.uniform() / static_cast<double>(particles.size());
        const double uniform = -std::log(static_cast<double>(particles.size()));
        std::vector<MclParticle> next;
        next.reserve(particles.size());
        for (std::size_t i : low_variance_indices(w, u)) next.push_back({particles[i].pose, uniform});
        particles = std::move(next);
        r.resampled = true;
    }
    return r;
}

MclSession::MclSession(OccupancyGrid map, const MclConfig& cfg, const FusionConfig& fusion, FusionMode mode,
                       MclInit init, std::uint64_t seed)
    : map_(std::move(map)),
      field_(build_likelihood_field(map_, cfg.field_d_max)),
      cfg_(cfg),
      fusion_cfg_(fusion),
      mode_(mode),
      init_(init),
      seed_(seed) {
    cfg_.validate();
}

Pose2 MclSession::current_estimate() const {
    if (!latest_) return init_.mean;
    return compose(latest_->mean, between(odom_at_update_, odom_now_));
}

bool MclSession::consume(const LogRecord& rec) {
    if (rec.get<GtRecord>() != nullptr) return false;
    const auto* scan = rec.get<LidarScan>();
    if (rec.get<ImuRecord>() == nullptr && rec.get<OdomRecord>() == nullptr && scan == nullptr) return false;
    if (!frontend_) frontend_.emplace(mode_, fusion_cfg_, initial_fused_state(init_.mean, rec.t, fusion_cfg_));
    frontend_->consume(rec);
    if (scan == nullptr) return false;
    odom_now_ = frontend_->filter().predicted(rec.t).pose();
    if (particles_.empty()) {
        Rng rng = Rng::stream(seed_, kInitTag);
        particles_ = mcl_init(map_, init_, cfg_, rng);
        odom_at_update_ = odom_now_;
        return false;
    }
    const OdometryDelta delta = OdometryDelta::between_poses(odom_at_update_, odom_now_);
    if (std::abs(delta.trans) < cfg_.min_trans && std::abs(wrap_angle(delta.rot1 + delta.rot2)) < cfg_.min_rot &&
        (cfg_.min_trans > 0 || cfg_.min_rot > 0))
        return false;
    const MclStepResult r = mcl_update(particles_, delta, *scan, map_, field_, cfg_, seed_, ++updates_);
    odom_at_update_ = odom_now_;
    latest_ = r.estimate;
    if (r.reset) ++resets_;
    estimates_.push_back({scan->stamp, r.estimate.mean});
    return true;
}

std::vector<LocalizationError> localization_errors(const Trajectory& est, const Trajectory& truth, double max_dt) {
    std::vector<LocalizationError> out;
    for (const PosePair& p : pair_by_stamp(est, truth, max_dt)) {
        out.push_back({p.t, (p.est.translation() - p.truth.translation()).norm(),
                       std::abs(wrap_angle(p.est.theta() - p.truth.theta()))});
    }
    return out;
}

void write_error_csv(const std::filesystem::path& path, const std::vector<LocalizationError>& errors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "t,pos_err_m,heading_err_rad\n";
    char buf[96];
    for (const auto& e : errors) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", e.t, e.pos_err_m, e.heading_err_rad);
        out << buf;
    }
}

}  // namespace mazeslam
