#include "mazeslam/live_session.hpp"

#include <cmath>

#include "mazeslam/errors.hpp"

namespace mazeslam {

using nlohmann::json;

namespace {

json pose_json(const Pose2& p) { return {{"x", p.x()}, {"y", p.y()}, {"theta", p.theta()}}; }

std::string error_frame(const std::string& message) {
    return json{{"type", "error"}, {"message", message}}.dump();
}

double number(const json& j, const char* key) {
    const auto it = j.find(key);
    if (it == j.end() || !it->is_number()) throw InputError(std::string("'") + key + "' must be a number");
    const double v = it->get<double>();
    if (!std::isfinite(v)) throw InputError(std::string("'") + key + "' must be finite");
    return v;
}

void expect_keys(const json& j, std::initializer_list<const char*> keys) {
    for (const auto& [key, _] : j.items()) {
        bool ok = key == "type";
        for (const char* k : keys) ok |= key == k;
        if (!ok) throw InputError("unknown key '" + key + "'");
    }
}

int trinary(CellClass c) {
    switch (c) {
        case CellClass::Free: return 0;
        case CellClass::Occupied: return 100;
        case CellClass::Unknown: return -1;
    }
    return -1;
}

}  // namespace

json rle_cells(const OccupancyGrid& grid) {
    json out = json::array();
    int current = 0;
    long count = 0;
    for (double l : grid.cells()) {
        const int v = trinary(classify_logodds(l));
        if (count > 0 && v == current) {
            ++count;
            continue;
        }
        if (count > 0) {
            out.push_back(current);
            out.push_back(count);
        }
        current = v;
        count = 1;
    }
    if (count > 0) {
        out.push_back(current);
        out.push_back(count);
    }
    return out;
}

std::vector<int> rle_decode(const json& cells) {
    if (!cells.is_array() || cells.size() % 2 != 0) throw InputError("cells must be [value, count, ...]");
    std::vector<int> out;
    for (std::size_t i = 0; i < cells.size(); i += 2) {
        const int v = cells[i].get<int>();
        const long n = cells[i + 1].get<long>();
        if (n <= 0) throw InputError("run counts must be positive");
        out.insert(out.end(), static_cast<std::size_t>(n), v);
    }
    return out;
}

LiveSession::LiveSession(WorldModel world, RunConfig cfg)
    : world_(std::move(world)),
      cfg_(std::move(cfg)),
      sim_(world_, cfg_.sim, cfg_.seed),
      slam_(cfg_.slam, cfg_.fusion, parse_odometry_source(cfg_.mode), cfg_.seed) {
    restart();
}

void LiveSession::restart() {
    sim_.reset();
    slam_ = SlamSession(cfg_.slam, cfg_.fusion, parse_odometry_source(cfg_.mode), cfg_.seed);
    log_ = sim_.start();
    for (const LogRecord& r : log_) slam_.consume(r);
    teleop_.reset();
    nav_.reset();
    nav_outcome_.reset();
}

OccupancyGrid LiveSession::current_map() const {
    return slam_.initialized() ? slam_.best().map : empty_map(cfg_.slam);
}

Twist2 LiveSession::active_command() const noexcept {
    if (!teleop_) return {};
    if (sim_.state().clock - teleop_clock_ > cfg_.serve.deadman_s + 1e-9) return {};
    return *teleop_;
}

void LiveSession::driver_lost() { teleop_.reset(); }

std::optional<std::string> LiveSession::handle(std::string_view text, bool from_driver) {
    try {
        const json j = json::parse(text);
        if (!j.is_object() || !j.contains("type") || !j["type"].is_string())
            throw InputError("message needs a string 'type'");
        const std::string type = j["type"].get<std::string>();
        if (type != "teleop" && type != "goal" && type != "reset" && type != "mode")
            throw InputError("unknown message type '" + type + "'");
        if (!from_driver) return error_frame("observers cannot control the session");
        if (type == "teleop") {
            expect_keys(j, {"v", "w"});
            teleop_ = Twist2{number(j, "v"), number(j, "w")};
            teleop_clock_ = sim_.state().clock;
            nav_.reset();
        } else if (type == "goal") {
            expect_keys(j, {"x", "y"});
            const Vec2 goal{number(j, "x"), number(j, "y")};
            teleop_.reset();
            nav_.emplace(current_map(), goal, std::nullopt, cfg_.nav);
            nav_outcome_ = NavOutcome::Running;
        } else if (type == "reset") {
            expect_keys(j, {});
            restart();
        } else {
            expect_keys(j, {"mode"});
            if (!j.contains("mode") || !j["mode"].is_string()) throw InputError("'mode' must be a string");
            const std::string mode = j["mode"].get<std::string>();
            (void)parse_odometry_source(mode);
            cfg_.mode = mode;
            restart();
        }
    } catch (const json::exception& e) {
        return error_frame(std::string("malformed message: ") + e.what());
    } catch (const std::exception& e) {
        return error_frame(e.what());
    }
    return std::nullopt;
}

LiveSession::TickOutput LiveSession::tick() {
    Twist2 cmd = active_command();
    if (nav_) {
        const Pose2 pose = slam_.initialized() ? slam_.current_estimate() : sim_.state().true_pose;
        try {
            const NavTick t = nav_->tick(pose, sim_.state().clock);
            nav_outcome_ = t.outcome;
            cmd = t.outcome == NavOutcome::Running ? t.cmd : Twist2{};
        } catch (const PlanError&) {
            nav_outcome_ = NavOutcome::NoPath;
            cmd = {};
        }
        if (nav_outcome_ != NavOutcome::Running) nav_.reset();
    }
    for (LogRecord& r : sim_.step(cmd)) {
        if (slam_.consume(r) && nav_) nav_->set_map(slam_.best().map);
        log_.push_back(std::move(r));
    }
    ++ticks_;
    TickOutput out;
    if (ticks_ % static_cast<std::uint64_t>(cfg_.serve.state_every) == 0) out.frames.push_back(state_frame());
    if (ticks_ % static_cast<std::uint64_t>(cfg_.serve.map_every) == 0) out.frames.push_back(map_frame());
    return out;
}

std::string LiveSession::state_frame() const {
    json j{{"type", "state"},
           {"t", sim_.state().clock},
           {"pose", pose_json(slam_.initialized() ? slam_.current_estimate() : sim_.state().true_pose)},
           {"gt", pose_json(sim_.state().true_pose)},
           {"mode", cfg_.mode}};
    const LidarScan* scan = nullptr;
    for (auto it = log_.rbegin(); it != log_.rend() && scan == nullptr; ++it) scan = it->get<LidarScan>();
    if (scan != nullptr) {
        const std::size_t max_beams = static_cast<std::size_t>(std::max(1, cfg_.serve.max_scan_beams));
        const std::size_t stride = (scan->size() + max_beams - 1) / max_beams;
        json ranges = json::array();
        for (std::size_t i = 0; i < scan->size(); i += std::max<std::size_t>(1, stride))
            ranges.push_back(scan->ranges[i]);
        j["scan"] = {{"angle_min", scan->angle_min},
                     {"angle_inc", scan->angle_inc * static_cast<double>(std::max<std::size_t>(1, stride))},
                     {"range_max", scan->range_max},
                     {"ranges", ranges}};
    } else {
        j["scan"] = nullptr;
    }
    json particles = json::array();
    if (slam_.initialized()) {
        const auto& ps = slam_.particles();
        const std::size_t max_p = static_cast<std::size_t>(std::max(1, cfg_.serve.max_particles));
        const std::size_t stride = (ps.size() + max_p - 1) / max_p;
        for (std::size_t i = 0; i < ps.size(); i += std::max<std::size_t>(1, stride))
            particles.push_back({ps[i].pose.x(), ps[i].pose.y(), ps[i].pose.theta()});
    }
    j["particles"] = particles;
    j["nav"] = nav_outcome_ ? json(to_string(*nav_outcome_)) : json(nullptr);
    return j.dump();
}

std::string LiveSession::map_frame() const {
    const OccupancyGrid map = current_map();
    return json{{"type", "map"},
                {"w", map.width()},
                {"h", map.height()},
                {"res", map.resolution()},
                {"origin", {map.origin().x, map.origin().y}},
                {"cells", rle_cells(map)}}
        .dump();
}

void LiveSession::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    save_map(current_map(), dir / "map");
    write_log(dir / "log.jsonl", log_);
    write_run_config(dir / "config.json", cfg_);
    write_trajectory_csv(dir / "trajectory.csv", slam_.initialized() ? slam_.best().trajectory : Trajectory{});
}

}  // namespace mazeslam
