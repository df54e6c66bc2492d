#include "mazeslam/scan_matcher.hpp"

namespace mazeslam {

ScanPoints scan_endpoints(const LidarScan& scan) {
    ScanPoints out;
    out.points.reserve(scan.size());
    for (std::size_t i = 0; i < scan.size(); ++i) {
        if (!scan.has_return(i)) continue;
        const double a = scan.angle(i);
        out.points.push_back({scan.ranges[i] * std::cos(a), scan.ranges[i] * std::sin(a)});
    }
    return out;
}

double scan_score(const LikelihoodField& field, const Pose2& pose, const ScanPoints& pts, double match_sigma) {
    if (pts.count() == 0) return 0.0;
    const double c = std::cos(pose.theta());
    const double s = std::sin(pose.theta());
    const double inv_two_sigma2 = 1.0 / (2.0 * match_sigma * match_sigma);
    double sum = 0.0;
    for (const Vec2& p : pts.points) {
        const Vec2 w{pose.x() + c * p.x - s * p.y, pose.y() + s * p.x + c * p.y};
        if (const auto d = field.interpolate(w)) sum += std::exp(-(*d) * (*d) * inv_two_sigma2);
    }
    return sum / static_cast<double>(pts.count());
}

double scan_score(const LikelihoodField& field, const Pose2& pose, const LidarScan& scan, double match_sigma) {
    return scan_score(field, pose, scan_endpoints(scan), match_sigma);
}

ScanMatchResult scan_match(const LikelihoodField& field, const LidarScan& scan, const Pose2& init,
                           const ScanMatchConfig& cfg) {
    const ScanPoints pts = scan_endpoints(scan);
    return hill_climb([&](const Pose2& p) { return scan_score(field, p, pts, cfg.match_sigma); }, init, cfg);
}

ScanMatchResult scan_match(const OccupancyGrid& grid, const LidarScan& scan, const Pose2& init,
                           const ScanMatchConfig& cfg) {
    return scan_match(build_likelihood_field(grid, cfg.field_d_max), scan, init, cfg);
}

}  // namespace mazeslam
