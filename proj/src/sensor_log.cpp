#include "mazeslam/sensor_log.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mazeslam/errors.hpp"

namespace mazeslam {

using nlohmann::json;

namespace {

struct TypeNameVisitor {
    std::string_view operator()(const LidarScan&) const { return "scan"; }
    std::string_view operator()(const ImuRecord&) const { return "imu"; }
    std::string_view operator()(const OdomRecord&) const { return "odom"; }
    std::string_view operator()(const GtRecord&) const { return "gt"; }
    std::string_view operator()(const CmdRecord&) const { return "cmd"; }
};

double number_field(const json& j, const char* key, std::size_t line_no) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_number()) {
        throw InputError(std::string("missing or non-numeric field '") + key + "'", line_no);
    }
    return it->get<double>();
}

// Monotonic timestamp tolerance.
constexpr double kStampTolerance = 1e-9;

}  // namespace

std::string_view LogRecord::type_name() const noexcept { return std::visit(TypeNameVisitor{}, payload); }

std::string to_json_line(const LogRecord& rec) {
    json j;
    j["t"] = rec.t;
    j["type"] = std::string(rec.type_name());
    if (const auto* s = rec.get<LidarScan>()) {
        j["angle_min"] = s->angle_min;
        j["angle_inc"] = s->angle_inc;
        j["n"] = s->ranges.size();
        j["range_max"] = s->range_max;
        j["ranges"] = s->ranges;
    } else if (const auto* imu = rec.get<ImuRecord>()) {
        j["gyro_z"] = imu->gyro_z;
    } else if (const auto* o = rec.get<OdomRecord>()) {
        j["v"] = o->twist.v;
        j["w"] = o->twist.w;
    } else if (const auto* g = rec.get<GtRecord>()) {
        j["x"] = g->pose.x();
        j["y"] = g->pose.y();
        j["theta"] = g->pose.theta();
    } else if (const auto* c = rec.get<CmdRecord>()) {
        j["v"] = c->cmd.v;
        j["w"] = c->cmd.w;
    }
    return j.dump();
}

LogRecord parse_log_line(std::string_view line, std::size_t line_no) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw InputError("not a JSON object", line_no);
    auto type_it = j.find("type");
    if (type_it == j.end() || !type_it->is_string()) throw InputError("missing 'type'", line_no);
    const std::string type = type_it->get<std::string>();

    LogRecord rec;
    rec.t = number_field(j, "t", line_no);
    if (type == "scan") {
        LidarScan s;
        s.stamp = rec.t;
        s.angle_min = number_field(j, "angle_min", line_no);
        s.angle_inc = number_field(j, "angle_inc", line_no);
        s.range_max = number_field(j, "range_max", line_no);
        auto r = j.find("ranges");
        if (r == j.end() || !r->is_array()) throw InputError("scan without 'ranges' array", line_no);
        s.ranges.reserve(r->size());
        for (const auto& v : *r) {
            if (!v.is_number()) throw InputError("non-numeric range", line_no);
            s.ranges.push_back(v.get<double>());
        }
        const double n = number_field(j, "n", line_no);
        if (n != static_cast<double>(s.ranges.size())) throw InputError("'n' does not match ranges length", line_no);
        rec.payload = std::move(s);
    } else if (type == "imu") {
        rec.payload = ImuRecord{number_field(j, "gyro_z", line_no)};
    } else if (type == "odom") {
        rec.payload = OdomRecord{{number_field(j, "v", line_no), number_field(j, "w", line_no)}};
    } else if (type == "gt") {
        rec.payload = GtRecord{
            {number_field(j, "x", line_no), number_field(j, "y", line_no), number_field(j, "theta", line_no)}};
    } else if (type == "cmd") {
        rec.payload = CmdRecord{{number_field(j, "v", line_no), number_field(j, "w", line_no)}};
    } else {
        throw InputError("unknown record type '" + type + "'", line_no);
    }
    return rec;
}

std::vector<LogRecord> read_log(std::istream& in) {
    std::vector<LogRecord> out;
    std::string line;
    std::size_t line_no = 0;
    double last_t = -std::numeric_limits<double>::infinity();
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        LogRecord rec = parse_log_line(line, line_no);
        if (rec.t + kStampTolerance < last_t) {
            throw InputError("timestamp " + std::to_string(rec.t) + " goes backwards", line_no);
        }
        last_t = std::max(last_t, rec.t);
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<LogRecord> read_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open log " + path.string());
    return read_log(in);
}

void write_log(std::ostream& out, const std::vector<LogRecord>& records) {
    for (const auto& r : records) out << to_json_line(r) << '\n';
}

void write_log(const std::filesystem::path& path, const std::vector<LogRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write log " + path.string());
    write_log(out, records);
}

Trajectory ground_truth_of(const std::vector<LogRecord>& records) {
    Trajectory traj;
    for (const auto& r : records) {
        if (const auto* g = r.get<GtRecord>()) traj.push_back({r.t, g->pose});
    }
    return traj;
}

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "t,x,y,theta\n";
    char buf[128];
    for (const auto& p : traj) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", p.t, p.pose.x(), p.pose.y(), p.pose.theta());
        out << buf;
    }
}

Trajectory read_trajectory_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line) || line.rfind("t,x,y,theta", 0) != 0) {
        throw InputError("expected header t,x,y,theta", 1);
    }
    Trajectory traj;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        std::istringstream ss(line);
        double v[4];
        char comma;
        ss >> v[0] >> comma >> v[1] >> comma >> v[2] >> comma >> v[3];
        if (!ss) throw InputError("malformed trajectory row", line_no);
        traj.push_back({v[0], Pose2(v[1], v[2], v[3])});
    }
    return traj;
}

}  // namespace mazeslam
