#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mazeslam/geometry.hpp"

namespace mazeslam {

/// Range scan in the robot frame. Beam i points at angle_min + i·angle_inc.
/// A range greater than range_max means "no return".
struct LidarScan {
    double stamp{0};
    double angle_min{0};
    double angle_inc{0};
    double range_max{0};
    std::vector<double> ranges;

    [[nodiscard]] std::size_t size() const noexcept { return ranges.size(); }
    [[nodiscard]] double angle(std::size_t i) const noexcept {
        return angle_min + static_cast<double>(i) * angle_inc;
    }
    [[nodiscard]] bool has_return(std::size_t i) const noexcept { return ranges[i] <= range_max; }
    [[nodiscard]] double no_return_value() const noexcept { return range_max + 1.0; }
};

struct ImuRecord {
    double gyro_z{0};
};
struct OdomRecord {
    Twist2 twist;
};
struct GtRecord {
    Pose2 pose;
};
struct CmdRecord {
    Twist2 cmd;
};

/// One line of a SensorLog.
struct LogRecord {
    double t{0};
    std::variant<LidarScan, ImuRecord, OdomRecord, GtRecord, CmdRecord> payload;

    [[nodiscard]] std::string_view type_name() const noexcept;

    template <class T>
    [[nodiscard]] const T* get() const noexcept {
        return std::get_if<T>(&payload);
    }
};

[[nodiscard]] std::string to_json_line(const LogRecord& rec);

/// Parses one JSONL line. Unknown types and malformed payloads throw
/// InputError tagged with `line_no`.
[[nodiscard]] LogRecord parse_log_line(std::string_view line, std::size_t line_no);

/// Reads a whole log, rejecting any timestamp that goes backwards.
[[nodiscard]] std::vector<LogRecord> read_log(std::istream& in);
[[nodiscard]] std::vector<LogRecord> read_log(const std::filesystem::path& path);

void write_log(std::ostream& out, const std::vector<LogRecord>& records);
void write_log(const std::filesystem::path& path, const std::vector<LogRecord>& records);

/// Stamped pose sequence (CSV header t,x,y,theta).
struct StampedPose {
    double t{0};
    Pose2 pose;
};
using Trajectory = std::vector<StampedPose>;

[[nodiscard]] Trajectory ground_truth_of(const std::vector<LogRecord>& records);

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj);
[[nodiscard]] Trajectory read_trajectory_csv(const std::filesystem::path& path);

}  // namespace mazeslam
