#include "mazeslam/eval_metrics.hpp"

#include <algorithm>
#include <cmath>

namespace mazeslam {

std::vector<PosePair> pair_by_stamp(const Trajectory& est, const Trajectory& truth, double max_dt) {
    std::vector<PosePair> out;
    if (truth.empty()) return out;
    for (const StampedPose& e : est) {
        const auto it = std::lower_bound(truth.begin(), truth.end(), e.t,
                                         [](const StampedPose& p, double t) { return p.t < t; });
        const StampedPose* best = nullptr;
        if (it != truth.begin()) best = &*std::prev(it);
        if (it != truth.end() && (best == nullptr || std::abs(it->t - e.t) < std::abs(best->t - e.t))) best = &*it;
        if (best != nullptr && std::abs(best->t - e.t) <= max_dt) out.push_back({e.t, e.pose, best->pose});
    }
    return out;
}

AteResult ate_rmse(const Trajectory& est, const Trajectory& truth, double max_dt) {
    const auto pairs = pair_by_stamp(est, truth, max_dt);
    if (pairs.empty()) throw EvalError("trajectories have no overlapping stamps");
    AteResult r;
    r.n_pairs = pairs.size();
    r.n_unpaired = est.size() - pairs.size();
    double sq = 0.0;
    for (const PosePair& p : pairs) {
        const double e = (p.est.translation() - p.truth.translation()).norm();
        sq += e * e;
        r.mean_m += e;
        r.max_m = std::max(r.max_m, e);
    }
    r.rmse_m = std::sqrt(sq / static_cast<double>(pairs.size()));
    r.mean_m /= static_cast<double>(pairs.size());
    return r;
}

double heading_rmse(const Trajectory& est, const Trajectory& truth, double max_dt) {
    const auto pairs = pair_by_stamp(est, truth, max_dt);
    if (pairs.empty()) throw EvalError("trajectories have no overlapping stamps");
    double sq = 0.0;
    for (const PosePair& p : pairs) {
        const double e = wrap_angle(p.est.theta() - p.truth.theta());
        sq += e * e;
    }
    return std::sqrt(sq / static_cast<double>(pairs.size()));
}

namespace {

bool occupied_near(const OccupancyGrid& g, int col, int row) {
    for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
            const CellIndex c{col + dc, row + dr};
            if (g.contains(c) && g.classify(c) == CellClass::Occupied) return true;
        }
    }
    return false;
}

}  // namespace

MapScore map_compare(const OccupancyGrid& slam_map, const OccupancyGrid& truth_map) {
    const double res = truth_map.resolution();
    if (std::abs(slam_map.resolution() - res) > 1e-12 * res) throw EvalError("map resolutions differ");
    const double fx = (slam_map.origin().x - truth_map.origin().x) / res;
    const double fy = (slam_map.origin().y - truth_map.origin().y) / res;
    const double ox = std::round(fx);
    const double oy = std::round(fy);
    if (std::abs(fx - ox) > 1e-6 || std::abs(fy - oy) > 1e-6) throw EvalError("map origins are not cell-aligned");
    // slam cell (c, r) sits on truth cell (c + dx, r + dy).
    const int dx = static_cast<int>(ox);
    const int dy = static_cast<int>(oy);
    const int c0 = std::max(0, dx), c1 = std::min(truth_map.width(), dx + slam_map.width());
    const int r0 = std::max(0, dy), r1 = std::min(truth_map.height(), dy + slam_map.height());
    if (c0 >= c1 || r0 >= r1) throw EvalError("map extents do not overlap");

    MapScore s;
    std::size_t pred_occ = 0, tp = 0, truth_occ = 0, covered = 0, known = 0, agree = 0;
    for (int r = r0; r < r1; ++r) {
        for (int c = c0; c < c1; ++c) {
            const CellClass t = truth_map.classify({c, r});
            const CellClass p = slam_map.classify({c - dx, r - dy});
            ++s.compared_cells;
            if (p != CellClass::Unknown) {
                ++known;
                if (p == t) ++agree;
            }
            if (p == CellClass::Occupied) {
                ++pred_occ;
                if (occupied_near(truth_map, c, r)) ++tp;
            }
            if (t == CellClass::Occupied) {
                ++truth_occ;
                if (occupied_near(slam_map, c - dx, r - dy)) ++covered;
            }
        }
    }
    const std::size_t fp = pred_occ - tp;
    const std::size_t fn = truth_occ - covered;
    const auto ratio = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / b; };
    s.occ_iou = ratio(tp, tp + fp + fn);
    s.occ_precision = ratio(tp, pred_occ);
    s.occ_recall = ratio(covered, truth_occ);
    s.agreement_defined = known > 0;
    s.agreement = ratio(agree, known);
    return s;
}

}  // namespace mazeslam
