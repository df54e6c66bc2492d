#include "mazeslam/run_config.hpp"

#include <fstream>
#include <set>

#include "mazeslam/errors.hpp"

namespace mazeslam {

using nlohmann::json;

namespace {

// Field tables shared by the reader and the writer.
template <class V>
void fields(V& v, RobotParams& r) {
    v("wheel_radius", r.wheel_radius);
    v("wheel_base", r.wheel_base);
    v("body_radius", r.body_radius);
    v("max_v", r.max_v);
    v("max_w", r.max_w);
}

template <class V>
void fields(V& v, LidarConfig& l) {
    v("n_beams", l.n_beams);
    v("fov", l.fov);
    v("max_range", l.max_range);
    v("sigma_range", l.sigma_range);
    v("min_range", l.min_range);
}

template <class V>
void fields(V& v, ImuConfig& i) {
    v("sigma_gyro", i.sigma_gyro);
    v("sigma_bias_walk", i.sigma_bias_walk);
    v("initial_bias", i.initial_bias);
}

template <class V>
void fields(V& v, OdomNoiseConfig& o) {
    v("sigma_wheel", o.sigma_wheel);
}

template <class V>
void fields(V& v, SimConfig& s) {
    v("dt", s.dt);
    v("scan_every", s.scan_every);
    v("robot", s.robot);
    v("lidar", s.lidar);
    v("imu", s.imu);
    v("odom", s.odom);
}

template <class V>
void fields(V& v, ScanMatchConfig& m) {
    v("linear_step", m.linear_step);
    v("angular_step", m.angular_step);
    v("halvings", m.halvings);
    v("match_sigma", m.match_sigma);
    v("field_d_max", m.field_d_max);
}

template <class V>
void fields(V& v, FusionConfig& f) {
    v("q_accel", f.q_accel);
    v("q_alpha", f.q_alpha);
    v("sigma_gyro", f.sigma_gyro);
    v("sigma_wheel_v", f.sigma_wheel_v);
    v("sigma_wheel_w", f.sigma_wheel_w);
    v("pose_delta_floor", f.pose_delta_floor);
    v("initial_sigma", f.initial_sigma);
    v("scan_match", f.scan_match);
    v("vo_max_gap", f.vo_max_gap);
}

template <class V>
void fields(V& v, OdometryNoise& a) {
    v("a1", a.a1);
    v("a2", a.a2);
    v("a3", a.a3);
    v("a4", a.a4);
}

template <class V>
void fields(V& v, MapBounds& b) {
    v("xmin", b.xmin);
    v("ymin", b.ymin);
    v("xmax", b.xmax);
    v("ymax", b.ymax);
}

template <class V>
void fields(V& v, SlamConfig& s) {
    v("n_particles", s.n_particles);
    v("resample_ratio", s.resample_ratio);
    v("linear_update", s.linear_update);
    v("angular_update", s.angular_update);
    v("match", s.match);
    v("alphas", s.alphas);
    v("map_resolution", s.map_resolution);
    v("map_bounds", s.map_bounds);
}

template <class V>
void fields(V& v, MclConfig& m) {
    v("n_particles", m.n_particles);
    v("beam_subsample", m.beam_subsample);
    v("z_hit", m.z_hit);
    v("z_rand", m.z_rand);
    v("sigma_hit", m.sigma_hit);
    v("field_d_max", m.field_d_max);
    v("alphas", m.alphas);
    v("resample_ratio", m.resample_ratio);
    v("min_trans", m.min_trans);
    v("min_rot", m.min_rot);
}

template <class V>
void fields(V& v, LocalizeConfig& l) {
    v("mcl", l.mcl);
    v("init_sigma", l.init_sigma);
    v("init_pose", l.init_pose);
    v("odometry", l.odometry);
}

template <class V>
void fields(V& v, PursuitConfig& p) {
    v("lookahead", p.lookahead);
    v("v_cruise", p.v_cruise);
    v("max_v", p.max_v);
    v("max_w", p.max_w);
}

template <class V>
void fields(V& v, NavConfig& n) {
    v("inflation_radius", n.inflation_radius);
    v("pursuit", n.pursuit);
    v("goal_tolerance", n.goal_tolerance);
    v("heading_tolerance", n.heading_tolerance);
    v("replan_deviation", n.replan_deviation);
    v("stuck_timeout", n.stuck_timeout);
    v("stuck_progress", n.stuck_progress);
    v("start_snap_cells", n.start_snap_cells);
}

template <class V>
void fields(V& v, ServeConfig& s) {
    v("port", s.port);
    v("tick_hz", s.tick_hz);
    v("state_every", s.state_every);
    v("map_every", s.map_every);
    v("deadman_s", s.deadman_s);
    v("max_scan_beams", s.max_scan_beams);
    v("max_particles", s.max_particles);
}

template <class V>
void fields(V& v, RunConfig& c) {
    v("seed", c.seed);
    v("world", c.world);
    v("mode", c.mode);
    v("sim", c.sim);
    v("fusion", c.fusion);
    v("slam", c.slam);
    v("localize", c.localize);
    v("nav", c.nav);
    v("truth_resolution", c.truth_resolution);
    v("serve", c.serve);
}

template <class T>
concept HasFields = requires(T& t) { fields(std::declval<struct Probe&>(), t); };

struct Probe {
    template <class T>
    void operator()(const char*, T&) {}
};

class Reader {
public:
    explicit Reader(std::string path) : path_(std::move(path)) {}

    template <class T>
    void read(const json& j, T& out) {
        if constexpr (HasFields<T>) {
            if (!j.is_object()) fail("expected an object");
            std::set<std::string> known;
            auto visit = [&](const char* key, auto& field) {
                known.insert(key);
                const auto it = j.find(key);
                if (it == j.end()) return;
                Reader child(path_ + "." + key);
                child.read(*it, field);
            };
            fields(visit, out);
            for (const auto& [key, _] : j.items())
                if (!known.count(key)) fail("unknown key '" + key + "'");
        } else if constexpr (std::is_same_v<T, Pose2>) {
            const auto v = vec(j, 3);
            out = Pose2{v[0], v[1], v[2]};
        } else if constexpr (std::is_same_v<T, std::optional<Pose2>>) {
            if (j.is_null()) {
                out.reset();
            } else {
                Pose2 p;
                read(j, p);
                out = p;
            }
        } else if constexpr (std::is_same_v<T, Eigen::Vector3d> || std::is_same_v<T, Vec5>) {
            const auto v = vec(j, static_cast<std::size_t>(T::RowsAtCompileTime));
            for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!j.is_string()) fail("expected a string");
            out = j.get<std::string>();
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
            if (!j.is_number_unsigned()) fail("expected a non-negative integer");
            out = j.get<std::uint64_t>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!j.is_number_integer()) fail("expected an integer");
            out = j.get<T>();
        } else {
            if (!j.is_number()) fail("expected a number");
            out = j.get<T>();
        }
    }

private:
    [[noreturn]] void fail(const std::string& what) const { throw InputError("config " + path_ + ": " + what); }

    std::vector<double> vec(const json& j, std::size_t n) const {
        if (!j.is_array() || j.size() != n) fail("expected an array of " + std::to_string(n) + " numbers");
        std::vector<double> out;
        for (const auto& e : j) {
            if (!e.is_number()) fail("expected an array of " + std::to_string(n) + " numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }

    std::string path_;
};

template <class T>
json write(const T& value) {
    if constexpr (HasFields<T>) {
        json out = json::object();
        auto visit = [&](const char* key, auto& field) { out[key] = write(field); };
        fields(visit, const_cast<T&>(value));
        return out;
    } else if constexpr (std::is_same_v<T, Pose2>) {
        return json::array({value.x(), value.y(), value.theta()});
    } else if constexpr (std::is_same_v<T, std::optional<Pose2>>) {
        return value ? write(*value) : json(nullptr);
    } else if constexpr (std::is_same_v<T, Eigen::Vector3d> || std::is_same_v<T, Vec5>) {
        json out = json::array();
        for (Eigen::Index i = 0; i < value.size(); ++i) out.push_back(value(i));
        return out;
    } else {
        return json(value);
    }
}

}  // namespace

void RunConfig::validate() const {
    (void)parse_odometry_source(mode);
    if (localize.odometry != "with_encoders" && localize.odometry != "encoderless")
        throw UsageError("localize.odometry must be with_encoders or encoderless");
    if (!(sim.dt > 0)) throw UsageError("sim.dt must be positive");
    if (sim.scan_every < 1) throw UsageError("sim.scan_every must be at least 1");
    if (slam.n_particles < 1) throw UsageError("slam.n_particles must be at least 1");
    if (!(slam.map_resolution > 0) || !(truth_resolution > 0)) throw UsageError("resolutions must be positive");
    if (!(serve.tick_hz > 0) || serve.state_every < 1 || serve.map_every < 1)
        throw UsageError("serve rates must be positive");
    if (serve.port < 0 || serve.port > 65535) throw UsageError("serve.port out of range");
    localize.mcl.validate();
}

RunConfig parse_run_config(const json& j) {
    RunConfig cfg;
    Reader("").read(j, cfg);
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw InputError("config " + path.string() + ": " + e.what());
    }
    return parse_run_config(j);
}

json to_json(const RunConfig& cfg) { return write(cfg); }

void write_run_config(const std::filesystem::path& path, const RunConfig& cfg) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << to_json(cfg).dump(2) << '\n';
}

OdometrySource parse_odometry_source(const std::string& mode) {
    if (mode == "with_encoders") return OdometrySource::WithEncoders;
    if (mode == "encoderless") return OdometrySource::Encoderless;
    if (mode == "gt-odom") return OdometrySource::GroundTruth;
    throw UsageError("mode must be with_encoders, encoderless, or gt-odom (got '" + mode + "')");
}

const char* to_string(OdometrySource s) noexcept {
    switch (s) {
        case OdometrySource::WithEncoders: return "with_encoders";
        case OdometrySource::Encoderless: return "encoderless";
        case OdometrySource::GroundTruth: return "gt-odom";
    }
    return "unknown";
}

}  // namespace mazeslam
