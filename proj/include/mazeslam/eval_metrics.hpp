#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "mazeslam/grid_map.hpp"
#include "mazeslam/sensor_log.hpp"

namespace mazeslam {

/// Metric inputs that cannot be compared (no overlap, mismatched grids).
class EvalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PosePair {
    double t{0};
    Pose2 est;
    Pose2 truth;
};

/// Pairs each estimate with the nearest-stamp truth within max_dt (earlier
/// truth wins ties). Both inputs must be stamp-sorted.
[[nodiscard]] std::vector<PosePair> pair_by_stamp(const Trajectory& est, const Trajectory& truth, double max_dt);

struct AteResult {
    double rmse_m{0};
    double mean_m{0};
    double max_m{0};
    std::size_t n_pairs{0};
    std::size_t n_unpaired{0};
};

/// Throws EvalError when nothing pairs.
[[nodiscard]] AteResult ate_rmse(const Trajectory& est, const Trajectory& truth, double max_dt = 0.05);
[[nodiscard]] double heading_rmse(const Trajectory& est, const Trajectory& truth, double max_dt = 0.05);

struct MapScore {
    double occ_iou{0};
    double occ_precision{0};
    double occ_recall{0};
    double agreement{0};
    /// False when the prediction has no known cells; agreement is then 0.
    bool agreement_defined{false};
    std::size_t compared_cells{0};
};

/// Compares trinarized maps over the intersection of their extents, with a
/// one-cell (Chebyshev) tolerance when matching occupied cells. Grids must
/// share the resolution and be offset by whole cells.
[[nodiscard]] MapScore map_compare(const OccupancyGrid& slam_map, const OccupancyGrid& truth_map);

}  // namespace mazeslam
