#include "mazeslam/world_sim.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mazeslam/errors.hpp"

namespace mazeslam {

using nlohmann::json;

double point_segment_distance(Vec2 p, const Segment& s) noexcept {
    const Vec2 d = s.b - s.a;
    const double len2 = d.dot(d);
    double u = len2 > 0 ? (p - s.a).dot(d) / len2 : 0.0;
    u = std::clamp(u, 0.0, 1.0);
    return (p - (s.a + u * d)).norm();
}

double WorldModel::clearance(Vec2 p) const noexcept {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& s : segments) best = std::min(best, point_segment_distance(p, s));
    return best;
}

void WorldModel::validate(double body_radius) const {
    if (!(bounds.xmax > bounds.xmin && bounds.ymax > bounds.ymin)) throw InputError("world bounds are empty");
    for (std::size_t i = 0; i < segments.size(); ++i) {
        if (!(segments[i].length() > 0.0)) throw InputError("segment " + std::to_string(i) + " has zero length");
    }
    if (!bounds.contains(spawn.translation())) throw InputError("spawn lies outside the world bounds");
    if (clearance(spawn.translation()) < body_radius) throw InputError("spawn is within body_radius of a wall");
}

namespace {

std::vector<double> number_array(const json& j, const char* key, std::size_t n) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_array() || it->size() != n) {
        throw InputError(std::string("world: '") + key + "' must be an array of " + std::to_string(n) + " numbers");
    }
    std::vector<double> out;
    for (const auto& v : *it) {
        if (!v.is_number()) throw InputError(std::string("world: '") + key + "' has a non-numeric entry");
        out.push_back(v.get<double>());
    }
    return out;
}

}  // namespace

WorldModel parse_world(std::string_view json_text) {
    json j = json::parse(json_text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw InputError("world: not a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (key != "bounds" && key != "spawn" && key != "segments") throw InputError("world: unknown key '" + key + "'");
    }
    WorldModel w;
    const auto b = number_array(j, "bounds", 4);
    w.bounds = {b[0], b[1], b[2], b[3]};
    const auto s = number_array(j, "spawn", 3);
    w.spawn = Pose2(s[0], s[1], s[2]);
    auto segs = j.find("segments");
    if (segs == j.end() || !segs->is_array()) throw InputError("world: 'segments' must be an array");
    for (const auto& seg : *segs) {
        if (!seg.is_array() || seg.size() != 4) throw InputError("world: each segment must be [x1, y1, x2, y2]");
        double v[4];
        for (int k = 0; k < 4; ++k) {
            if (!seg[k].is_number()) throw InputError("world: non-numeric segment coordinate");
            v[k] = seg[k].get<double>();
        }
        w.segments.push_back({{v[0], v[1]}, {v[2], v[3]}});
    }
    return w;
}

WorldModel load_world(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open world " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_world(ss.str());
}

Pose2 step_exact(const Pose2& pose, Twist2 cmd, double dt) noexcept {
    const double th = pose.theta();
    if (std::abs(cmd.w) < 1e-9) {
        return {pose.x() + cmd.v * std::cos(th) * dt, pose.y() + cmd.v * std::sin(th) * dt, th + cmd.w * dt};
    }
    const double r = cmd.v / cmd.w;
    const double th1 = th + cmd.w * dt;
    return {pose.x() + r * (std::sin(th1) - std::sin(th)), pose.y() - r * (std::cos(th1) - std::cos(th)), th1};
}

Twist2 wheels_to_twist(double w_left, double w_right, const RobotParams& p) noexcept {
    return {p.wheel_radius * (w_left + w_right) / 2.0, p.wheel_radius * (w_right - w_left) / p.wheel_base};
}

WheelRates twist_to_wheels(Twist2 t, const RobotParams& p) noexcept {
    return {(t.v - t.w * p.wheel_base / 2.0) / p.wheel_radius, (t.v + t.w * p.wheel_base / 2.0) / p.wheel_radius};
}

std::optional<double> raycast_world(const WorldModel& world, Vec2 origin, double angle, double max_range) noexcept {
    const Vec2 d{std::cos(angle), std::sin(angle)};
    double best = std::numeric_limits<double>::infinity();
    for (const auto& s : world.segments) {
        const Vec2 e = s.b - s.a;
        const Vec2 w = s.a - origin;
        const double denom = d.cross(e);
        if (std::abs(denom) < 1e-15) {
            // Parallel; only a collinear segment can be hit, at its nearer endpoint.
            if (std::abs(w.cross(d)) > 1e-12) continue;
            for (Vec2 end : {s.a, s.b}) {
                const double t = (end - origin).dot(d);
                if (t > 0) best = std::min(best, t);
            }
            continue;
        }
        const double t = w.cross(e) / denom;
        const double u = w.cross(d) / denom;
        if (t > 0 && u >= 0.0 && u <= 1.0) best = std::min(best, t);
    }
    if (best <= max_range) return best;
    return std::nullopt;
}

LidarScan simulate_lidar(const WorldModel& world, const Pose2& pose, const LidarConfig& cfg, Rng& rng,
                         double stamp) {
    LidarScan scan;
    scan.stamp = stamp;
    scan.angle_min = cfg.angle_min();
    scan.angle_inc = cfg.angle_inc();
    scan.range_max = cfg.max_range;
    scan.ranges.resize(static_cast<std::size_t>(cfg.n_beams));
    for (std::size_t i = 0; i < scan.ranges.size(); ++i) {
        const auto hit = raycast_world(world, pose.translation(), pose.theta() + scan.angle(i), cfg.max_range);
        const double noise = rng.gaussian(cfg.sigma_range);
        scan.ranges[i] = hit ? std::clamp(*hit + noise, cfg.min_range, cfg.max_range) : scan.no_return_value();
    }
    return scan;
}

ImuSample simulate_imu(double true_w, const ImuConfig& cfg, double dt, double& bias, Rng& rng, double stamp) {
    ImuSample s;
    s.stamp = stamp;
    s.gyro_z = true_w + bias + rng.gaussian(cfg.sigma_gyro);
    bias += rng.gaussian(cfg.sigma_bias_walk * std::sqrt(dt));
    s.bias_state = bias;
    return s;
}

SensorStreams SensorStreams::from_seed(std::uint64_t seed) noexcept {
    return {Rng::stream(seed, stream_tag("lidar")), Rng::stream(seed, stream_tag("imu")),
            Rng::stream(seed, stream_tag("odom"))};
}

namespace {

/// Clearance including the bounds rectangle; negative outside the bounds.
double body_clearance(const WorldModel& world, Vec2 p) noexcept {
    const auto& b = world.bounds;
    if (!b.contains(p)) return -1.0;
    const double edge = std::min({p.x - b.xmin, b.xmax - p.x, p.y - b.ymin, b.ymax - p.y});
    return std::min(edge, world.clearance(p));
}

/// Largest fraction s of the step that keeps the body disc clear. Motion that
/// does not reduce clearance below min(body_radius, start clearance) is free,
/// so a robot resting against a wall can still turn or back away.
double admissible_fraction(const WorldModel& world, const Pose2& pose, Twist2 cmd, double dt, double body_radius) {
    const double limit = std::min(body_radius, body_clearance(world, pose.translation())) - 1e-12;
    auto ok = [&](double s) { return body_clearance(world, step_exact(pose, cmd, s * dt).translation()) >= limit; };
    constexpr int kSamples = 16;
    double good = 0.0;
    for (int k = 1; k <= kSamples; ++k) {
        const double s = static_cast<double>(k) / kSamples;
        if (!ok(s)) {
            double bad = s;
            for (int it = 0; it < 60; ++it) {
                const double mid = 0.5 * (good + bad);
                (ok(mid) ? good : bad) = mid;
            }
            return good;
        }
        good = s;
    }
    return 1.0;
}

}  // namespace

std::vector<LogRecord> sim_initial_records(SimState& state, const WorldModel& world, const SimConfig& cfg) {
    std::vector<LogRecord> out;
    out.push_back({state.clock, GtRecord{state.true_pose}});
    out.push_back({state.clock, simulate_lidar(world, state.true_pose, cfg.lidar, state.streams.lidar, state.clock)});
    return out;
}

std::vector<LogRecord> sim_step(SimState& state, Twist2 cmd, const WorldModel& world, const SimConfig& cfg) {
    const auto& robot = cfg.robot;
    const Twist2 clamped{std::clamp(cmd.v, -robot.max_v, robot.max_v), std::clamp(cmd.w, -robot.max_w, robot.max_w)};
    state.commanded = clamped;

    const double frac = admissible_fraction(world, state.true_pose, clamped, cfg.dt, robot.body_radius);
    const Twist2 actual{frac * clamped.v, frac * clamped.w};
    state.collision = frac < 1.0;
    const double t0 = state.clock;

    std::vector<LogRecord> out;
    out.push_back({t0, CmdRecord{clamped}});

    const WheelRates wheels = twist_to_wheels(actual, robot);
    const double noisy_left = wheels.left + state.streams.odom.gaussian(cfg.odom.sigma_wheel);
    const double noisy_right = wheels.right + state.streams.odom.gaussian(cfg.odom.sigma_wheel);
    out.push_back({t0, OdomRecord{wheels_to_twist(noisy_left, noisy_right, robot)}});

    const ImuSample imu = simulate_imu(actual.w, cfg.imu, cfg.dt, state.imu_bias, state.streams.imu, t0);
    out.push_back({t0, ImuRecord{imu.gyro_z}});

    state.true_pose = step_exact(state.true_pose, actual, cfg.dt);
    ++state.step_index;
    state.clock = static_cast<double>(state.step_index) * cfg.dt;

    out.push_back({state.clock, GtRecord{state.true_pose}});
    if (state.step_index % static_cast<std::uint64_t>(cfg.scan_every) == 0) {
        out.push_back(
            {state.clock, simulate_lidar(world, state.true_pose, cfg.lidar, state.streams.lidar, state.clock)});
    }
    return out;
}

Simulator::Simulator(WorldModel world, SimConfig cfg, std::uint64_t seed)
    : world_(std::move(world)), cfg_(cfg), seed_(seed) {
    world_.validate(cfg_.robot.body_radius);
    reset();
}

void Simulator::reset() {
    state_ = SimState{};
    state_.true_pose = world_.spawn;
    state_.imu_bias = cfg_.imu.initial_bias;
    state_.streams = SensorStreams::from_seed(seed_);
}

std::vector<LogRecord> Simulator::start() { return sim_initial_records(state_, world_, cfg_); }

}  // namespace mazeslam
