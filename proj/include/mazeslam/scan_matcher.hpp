#pragma once

#include <array>
#include <vector>

#include "mazeslam/geometry.hpp"
#include "mazeslam/grid_map.hpp"
#include "mazeslam/sensor_log.hpp"

namespace mazeslam {

struct ScanMatchConfig {
    double linear_step{0.05};
    double angular_step{0.025};
    int halvings{5};
    double match_sigma{0.1};
    /// Cap of the likelihood field used for matching.
    double field_d_max{1.0};
};

/// Beam endpoints of a scan in the sensor frame (returns only).
struct ScanPoints {
    std::vector<Vec2> points;
    /// Beams with a return, i.e. the score's denominator.
    std::size_t count() const noexcept { return points.size(); }
};

[[nodiscard]] ScanPoints scan_endpoints(const LidarScan& scan);

/// Mean over beams with a return of exp(-d²/(2σ²)), d being the field
/// distance (bilinear between cell centers) at the beam endpoint projected
/// through `pose`. Endpoints off the grid contribute 0. A scan without
/// returns scores 0.
[[nodiscard]] double scan_score(const LikelihoodField& field, const Pose2& pose, const LidarScan& scan,
                                double match_sigma);
[[nodiscard]] double scan_score(const LikelihoodField& field, const Pose2& pose, const ScanPoints& pts,
                                double match_sigma);

struct ScanMatchResult {
    Pose2 pose;
    double score{0};
};

/// Greedy hill climbing over ±x, ±y, ±theta. Takes the best strictly
/// improving move; when none improves, halves both steps; gives up after the
/// configured number of halvings. Deterministic.
template <class ScoreFn>
[[nodiscard]] ScanMatchResult hill_climb(ScoreFn&& score, const Pose2& init, const ScanMatchConfig& cfg) {
    ScanMatchResult best{init, score(init)};
    double lin = cfg.linear_step;
    double ang = cfg.angular_step;
    constexpr int kMaxMovesPerLevel = 200;
    for (int level = 0; level <= cfg.halvings; ++level) {
        for (int it = 0; it < kMaxMovesPerLevel; ++it) {
            const Pose2& p = best.pose;
            const std::array<Pose2, 6> moves{
                Pose2{p.x() + lin, p.y(), p.theta()}, Pose2{p.x() - lin, p.y(), p.theta()},
                Pose2{p.x(), p.y() + lin, p.theta()}, Pose2{p.x(), p.y() - lin, p.theta()},
                Pose2{p.x(), p.y(), p.theta() + ang}, Pose2{p.x(), p.y(), p.theta() - ang},
            };
            ScanMatchResult step = best;
            for (const Pose2& m : moves) {
                const double sc = score(m);
                if (sc > step.score) step = {m, sc};
            }
            if (!(step.score > best.score)) break;
            best = step;
        }
        lin /= 2.0;
        ang /= 2.0;
    }
    return best;
}

/// hill_climb on scan_score against `field`.
[[nodiscard]] ScanMatchResult scan_match(const LikelihoodField& field, const LidarScan& scan, const Pose2& init,
                                         const ScanMatchConfig& cfg);

/// Builds the field from `grid` first.
[[nodiscard]] ScanMatchResult scan_match(const OccupancyGrid& grid, const LidarScan& scan, const Pose2& init,
                                         const ScanMatchConfig& cfg);

}  // namespace mazeslam
